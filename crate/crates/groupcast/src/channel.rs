//! Channel matrices: the built-in ill-conditioned 6x6 example, seeded
//! i.i.d. Rayleigh generation, and JSON file I/O.

use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::numkit::{self, CMatrix};
use crate::{Error, Result};

/// Downlink channel matrix `H` (`n_users x n_tx`, row k is user k's channel).
///
/// Invariants: `n_tx >= n_users >= 1`, full row rank, finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    matrix: CMatrix,
}

impl ChannelMatrix {
    /// Validate and wrap a raw matrix.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let (nu, nt) = (matrix.rows(), matrix.cols());
        if nt < nu || nu < 1 {
            return Err(Error::BadDimensions(format!(
                "need n_tx >= n_users >= 1, got {nu} users x {nt} antennas"
            )));
        }
        if !matrix.is_finite() {
            return Err(Error::ParseError("non-finite channel entry".into()));
        }
        let svals = numkit::singular_values(&matrix);
        let smin = svals[nu - 1];
        if smin <= numkit::rank_tol(svals[0]) {
            return Err(Error::RankDeficient(format!(
                "channel is not full row rank (min singular value {smin:.3e})"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn n_users(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n_tx(&self) -> usize {
        self.matrix.cols()
    }

    /// Rows of `H` for the given (ordered) user list.
    pub fn rows_of(&self, users: &[usize]) -> CMatrix {
        let cols: Vec<usize> = (0..self.n_tx()).collect();
        self.matrix.select(users, &cols)
    }
}

/// Deterministic seed: `(master_seed, stream_index)` fully determines the
/// generated sequence. Monte Carlo trial `t` conventionally uses
/// `stream_index = t`, so different schemes see identical channel draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSeed {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RngSeed {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// One standard complex Gaussian CN(0,1): real and imaginary parts are
/// independent N(0, 1/2). Box-Muller on two uniforms.
fn standard_complex_gaussian(rng: &mut ChaCha12Rng) -> Complex64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    Complex64::new(r * theta.cos() * scale, r * theta.sin() * scale)
}

/// The ill-conditioned 6x6 real example channel. Every row has unit norm;
/// the smallest singular value is ~0.028, so zero-forcing collapses.
pub fn builtin_hex() -> ChannelMatrix {
    let h = 0.5;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let rows = vec![
        vec![h, 0.0, 0.0, -h, s, 0.0],
        vec![0.0, h, -s, h, 0.0, 0.0],
        vec![0.0, -h, 0.0, 0.0, -s, h],
        vec![-h, 0.0, 0.0, s, 0.0, -h],
        vec![h, 0.0, s, 0.0, h, 0.0],
        vec![0.0, 0.0, 0.0, -s, -h, h],
    ];
    ChannelMatrix::new(CMatrix::from_real_rows(&rows)).expect("builtin channel is full rank")
}

/// Seeded i.i.d. Rayleigh channel: entries are CN(0,1).
pub fn rayleigh(n_users: usize, n_tx: usize, seed: RngSeed) -> Result<ChannelMatrix> {
    if n_tx < n_users || n_users < 1 {
        return Err(Error::BadDimensions(format!(
            "need n_tx >= n_users >= 1, got {n_users}x{n_tx}"
        )));
    }
    let mut rng = seed.rng();
    let m = CMatrix::from_fn(n_users, n_tx, |_, _| standard_complex_gaussian(&mut rng));
    ChannelMatrix::new(m)
}

#[derive(Serialize, Deserialize)]
struct ChannelFile {
    n_users: usize,
    n_tx: usize,
    entries: Vec<Vec<[f64; 2]>>,
}

/// Serialize a channel to the JSON matrix format.
pub fn save_channel(h: &ChannelMatrix, path: &Path) -> Result<()> {
    let entries: Vec<Vec<[f64; 2]>> = (0..h.n_users())
        .map(|r| {
            (0..h.n_tx())
                .map(|c| {
                    let z = h.matrix()[(r, c)];
                    [z.re, z.im]
                })
                .collect()
        })
        .collect();
    let file = ChannelFile {
        n_users: h.n_users(),
        n_tx: h.n_tx(),
        entries,
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| Error::ParseError(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Load a channel from the JSON matrix format. Round-trips bit-exactly
/// with `save_channel`.
pub fn load_channel(path: &Path) -> Result<ChannelMatrix> {
    let text = std::fs::read_to_string(path)?;
    let file: ChannelFile =
        serde_json::from_str(&text).map_err(|e| Error::ParseError(e.to_string()))?;
    if file.entries.len() != file.n_users {
        return Err(Error::ParseError(format!(
            "expected {} rows, found {}",
            file.n_users,
            file.entries.len()
        )));
    }
    for (i, row) in file.entries.iter().enumerate() {
        if row.len() != file.n_tx {
            return Err(Error::ParseError(format!(
                "ragged row {i}: expected {} entries, found {}",
                file.n_tx,
                row.len()
            )));
        }
    }
    let m = CMatrix::from_fn(file.n_users, file.n_tx, |r, c| {
        Complex64::new(file.entries[r][c][0], file.entries[r][c][1])
    });
    ChannelMatrix::new(m)
}
