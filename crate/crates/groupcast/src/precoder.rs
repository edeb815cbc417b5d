//! Group-wise nulling beamformers, lower-triangular effective channels,
//! per-user/group/sum rates, and the zero-forcing special case.
//!
//! For group k with ordered users (k_1..k_g): the complement projector
//! P[k] projects onto the orthogonal complement of the other users'
//! channel rows; F[k] = P[k] G[k]^H is factorized as Q[k] R[k] with a
//! positive R-diagonal; the group then sees the lower-triangular effective
//! channel R[k]^H W[k], so user k_j's rate is log2(1 + p_{k_j} R[k]_{(j,j)}^2)
//! after successive pre-subtraction of the earlier users in the group.
//!
//! This module is the oracle-grade direct path; the cached O(g^3) route
//! lives in `fastpath` and is cross-checked against it.

use crate::channel::ChannelMatrix;
use crate::grouping::Grouping;
use crate::numkit::{self, CMatrix};
use crate::powalloc::{self, PowerAllocation};
use crate::{Error, Result};

/// Per-group beamformer and effective channel factor.
#[derive(Debug, Clone)]
pub struct GroupPrecoding {
    q: CMatrix,
    r: CMatrix,
    group_index: usize,
}

impl GroupPrecoding {
    /// Orthonormal basis of the nulling subspace (`n_tx x g`).
    pub fn q(&self) -> &CMatrix {
        &self.q
    }

    /// Upper-triangular factor with positive diagonal (`g x g`).
    pub fn r(&self) -> &CMatrix {
        &self.r
    }

    pub fn group_index(&self) -> usize {
        self.group_index
    }

    /// Squared R-diagonal per position in the group.
    pub fn gains(&self) -> Vec<f64> {
        self.r.real_diag().iter().map(|d| d * d).collect()
    }
}

/// Rates achieved by one (channel, grouping, power) configuration.
#[derive(Debug, Clone)]
pub struct RateReport {
    /// Rate per user (indexed by user, bpcu).
    pub per_user_rates: Vec<f64>,
    /// Rate per group (grouping order, bpcu).
    pub per_group_rates: Vec<f64>,
    /// Total (bpcu).
    pub sum_rate: f64,
    /// Water level when the powers came from waterfilling.
    pub water_level: Option<f64>,
    /// Power per user (indexed by user).
    pub powers: Vec<f64>,
}

/// Projector onto the complement of the channel rows of all users outside
/// group `k`: `P[k] = I - H[k]^H (H[k] H[k]^H)^{-1} H[k]`. For a single
/// all-users group there is nothing to null and the identity is returned.
pub fn complement_projector(h: &ChannelMatrix, grouping: &Grouping, k: usize) -> Result<CMatrix> {
    let others = grouping.complement(k);
    projector_excluding(h, &others)
}

fn projector_excluding(h: &ChannelMatrix, others: &[usize]) -> Result<CMatrix> {
    let n_tx = h.n_tx();
    if others.is_empty() {
        return Ok(CMatrix::identity(n_tx));
    }
    let hk = h.rows_of(others);
    let gram = hk.mul(&hk.adjoint());
    let gram_inv = numkit::hermitian_inverse(&gram).map_err(|e| match e {
        Error::NotPositiveDefinite(msg) => Error::RankDeficient(msg),
        other => other,
    })?;
    Ok(CMatrix::identity(n_tx).sub(&hk.adjoint().mul(&gram_inv).mul(&hk)))
}

/// Effective channel for the ordered user list `users`, with every other
/// user of `h` treated as out-of-group. This is what both grouping-based
/// calls and ordered-subset rate tables need.
pub fn effective_channel_for_users(h: &ChannelMatrix, users: &[usize]) -> Result<GroupPrecoding> {
    let mut in_set = vec![false; h.n_users()];
    for &u in users {
        in_set[u] = true;
    }
    let others: Vec<usize> = (0..h.n_users()).filter(|&u| !in_set[u]).collect();
    let p = projector_excluding(h, &others)?;
    let g_mat = h.rows_of(users);
    let f = p.mul(&g_mat.adjoint());
    let (q, r) = numkit::qr_positive(&f)?;
    Ok(GroupPrecoding {
        q,
        r,
        group_index: 0,
    })
}

/// Beamformer and effective factor for group `k` of `grouping`:
/// `(Q[k], R[k])` from the QR factorization of `P[k] G[k]^H`.
pub fn effective_channel(
    h: &ChannelMatrix,
    grouping: &Grouping,
    k: usize,
) -> Result<GroupPrecoding> {
    let mut gp = effective_channel_for_users(h, grouping.group(k))?;
    gp.group_index = k;
    Ok(gp)
}

/// Rate of one group given its upper-triangular factor and the powers of
/// its users (group order): sum of log2(1 + p_j R_{(j,j)}^2).
pub fn group_rate(r: &CMatrix, powers: &[f64]) -> f64 {
    r.real_diag()
        .iter()
        .zip(powers)
        .map(|(d, &p)| (1.0 + p * d * d).log2())
        .sum()
}

/// Effective gain of every user under `grouping` (indexed by user).
pub fn user_gains(h: &ChannelMatrix, grouping: &Grouping) -> Result<Vec<f64>> {
    let mut gains = vec![0.0; h.n_users()];
    for k in 0..grouping.n_groups() {
        let gp = effective_channel(h, grouping, k)?;
        for (j, &u) in grouping.group(k).iter().enumerate() {
            gains[u] = gp.gains()[j];
        }
    }
    Ok(gains)
}

fn report_from_gains(
    grouping: &Grouping,
    gains: &[f64],
    powers: &[f64],
    water_level: Option<f64>,
) -> RateReport {
    let per_user_rates: Vec<f64> = gains
        .iter()
        .zip(powers)
        .map(|(&g, &p)| (1.0 + p * g).log2())
        .collect();
    let per_group_rates: Vec<f64> = grouping
        .groups()
        .iter()
        .map(|grp| grp.iter().map(|&u| per_user_rates[u]).sum())
        .collect();
    let sum_rate = per_user_rates.iter().sum();
    RateReport {
        per_user_rates,
        per_group_rates,
        sum_rate,
        water_level,
        powers: powers.to_vec(),
    }
}

/// Sum rate under a caller-supplied power vector (indexed by user).
/// The powers must be nonnegative and sum to `p_t` within `1e-9 * p_t`.
pub fn sum_rate_fixed_power(
    h: &ChannelMatrix,
    p_t: f64,
    grouping: &Grouping,
    powers: &[f64],
) -> Result<RateReport> {
    if powers.len() != h.n_users() {
        return Err(Error::PowerMismatch(format!(
            "expected {} powers, got {}",
            h.n_users(),
            powers.len()
        )));
    }
    if powers.iter().any(|&p| p < 0.0) {
        return Err(Error::PowerMismatch("negative power entry".into()));
    }
    let sum: f64 = powers.iter().sum();
    if (sum - p_t).abs() > 1e-9 * p_t.abs() {
        return Err(Error::PowerMismatch(format!(
            "powers sum to {sum}, expected {p_t}"
        )));
    }
    let gains = user_gains(h, grouping)?;
    Ok(report_from_gains(grouping, &gains, powers, None))
}

/// Sum rate under the optimal (waterfilling) power allocation for the
/// given grouping.
pub fn sum_rate_opt_power(h: &ChannelMatrix, p_t: f64, grouping: &Grouping) -> Result<RateReport> {
    let gains = user_gains(h, grouping)?;
    let pa = powalloc::waterfill(&gains, p_t)?;
    Ok(report_from_gains(
        grouping,
        &gains,
        &pa.powers,
        Some(pa.water_level),
    ))
}

/// Zero-forcing sum rate via the closed form: gains are the reciprocal
/// diagonal of `(H H^H)^{-1}`, powers come from waterfilling. Identical
/// (to rounding) to `sum_rate_opt_power` with singleton groups; the two
/// routes are kept separate on purpose and cross-checked in tests.
pub fn zf_sum_rate(h: &ChannelMatrix, p_t: f64) -> Result<RateReport> {
    let gains = powalloc::zf_gains(h)?;
    let pa = powalloc::waterfill(&gains, p_t)?;
    let grouping = Grouping::singletons(h.n_users());
    Ok(report_from_gains(
        &grouping,
        &gains,
        &pa.powers,
        Some(pa.water_level),
    ))
}

/// Transmit matrices `D[k] = Q[k] W[k]` with `W[k] = diag(sqrt(p_{k_j}))`.
pub fn build_transmit_matrices(
    h: &ChannelMatrix,
    grouping: &Grouping,
    powers: &[f64],
) -> Result<Vec<CMatrix>> {
    if powers.len() != h.n_users() {
        return Err(Error::PowerMismatch(format!(
            "expected {} powers, got {}",
            h.n_users(),
            powers.len()
        )));
    }
    if powers.iter().any(|&p| p < 0.0) {
        return Err(Error::PowerMismatch("negative power entry".into()));
    }
    let mut out = Vec::with_capacity(grouping.n_groups());
    for k in 0..grouping.n_groups() {
        let gp = effective_channel(h, grouping, k)?;
        let users = grouping.group(k);
        let g = users.len();
        let mut d = CMatrix::zeros(h.n_tx(), g);
        for c in 0..g {
            let amp = powers[users[c]].sqrt();
            for r in 0..h.n_tx() {
                d[(r, c)] = gp.q()[(r, c)] * amp;
            }
        }
        out.push(d);
    }
    Ok(out)
}

/// Worst inter-group leakage `max_{i != k} |G[i] D[k]|_max`; the nulling
/// diagnostic reported by the CLI.
pub fn nulling_residual(h: &ChannelMatrix, grouping: &Grouping, d: &[CMatrix]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..grouping.n_groups() {
        let gi = h.rows_of(grouping.group(i));
        for (k, dk) in d.iter().enumerate() {
            if i == k {
                continue;
            }
            worst = worst.max(gi.mul(dk).max_abs());
        }
    }
    worst
}

/// Waterfilled power allocation for a grouping (helper shared by the
/// search module and the CLI).
pub fn opt_power_for_grouping(
    h: &ChannelMatrix,
    p_t: f64,
    grouping: &Grouping,
) -> Result<PowerAllocation> {
    let gains = user_gains(h, grouping)?;
    let pa = powalloc::waterfill(&gains, p_t)?;
    Ok(PowerAllocation {
        powers: pa.powers,
        total: pa.total,
        water_level: pa.water_level,
    })
}
