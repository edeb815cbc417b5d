//! Efficient computation of R[k] and Q[k] from a cached (H H^H)^{-1}.
//!
//! For an ordered group with user indices `k_1..k_g`, the Gram matrix of
//! the projected group channel F[k] equals the inverse of the g x g block
//! of (H H^H)^{-1} at rows/columns (k_1..k_g): the row permutation that
//! would bring the group to the top only permutes the inverse, so the
//! block can be read off directly. R[k] is then the upper Cholesky factor
//! of that inverse block (O(g^3) once the cache is built), and F[k] itself
//! is recovered with two small multiplications for the beamformer.

use std::hash::{Hash, Hasher};

use crate::channel::ChannelMatrix;
use crate::grouping::Grouping;
use crate::numkit::{self, CMatrix};
use crate::{Error, Result};

/// Cached `(H H^H)^{-1}` together with a fingerprint of the channel it was
/// built from. Immutable after construction; cheap to query concurrently.
#[derive(Debug, Clone)]
pub struct GramInverseCache {
    hhh_inv: CMatrix,
    fingerprint: u64,
}

/// Deterministic fingerprint of the raw channel bytes.
pub fn channel_fingerprint(h: &ChannelMatrix) -> u64 {
    let mut hasher = std::hash::DefaultHasher::new();
    h.n_users().hash(&mut hasher);
    h.n_tx().hash(&mut hasher);
    for z in h.matrix().entries() {
        z.re.to_bits().hash(&mut hasher);
        z.im.to_bits().hash(&mut hasher);
    }
    hasher.finish()
}

impl GramInverseCache {
    pub fn hhh_inv(&self) -> &CMatrix {
        &self.hhh_inv
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn n_users(&self) -> usize {
        self.hhh_inv.rows()
    }

    /// Zero-forcing gains: reciprocal diagonal of the cached inverse.
    pub fn zf_gains(&self) -> Vec<f64> {
        self.hhh_inv.real_diag().iter().map(|d| 1.0 / d).collect()
    }

    fn check(&self, h: &ChannelMatrix) -> Result<()> {
        let fp = channel_fingerprint(h);
        if fp != self.fingerprint {
            return Err(Error::StaleCache(format!(
                "cache fingerprint {:#018x} does not match channel {:#018x}",
                self.fingerprint, fp
            )));
        }
        Ok(())
    }
}

/// Build the cache: one `n_users x n_users` Hermitian inversion.
pub fn build_cache(h: &ChannelMatrix) -> Result<GramInverseCache> {
    let gram = h.matrix().mul(&h.matrix().adjoint());
    let hhh_inv = numkit::hermitian_inverse(&gram).map_err(|e| match e {
        Error::NotPositiveDefinite(msg) => Error::RankDeficient(msg),
        other => other,
    })?;
    Ok(GramInverseCache {
        hhh_inv,
        fingerprint: channel_fingerprint(h),
    })
}

/// R[k] for the ordered user list `users`, straight from the cache:
/// extract the block, invert it, Cholesky. `NotPositiveDefinite` signals
/// near-rank-deficiency of the underlying channel rows.
pub fn effective_r_fast(cache: &GramInverseCache, users: &[usize]) -> Result<CMatrix> {
    let block = cache.hhh_inv.select(users, users);
    let gram_f = numkit::hermitian_inverse(&block)?;
    numkit::cholesky_upper(&gram_f)
}

/// Squared R-diagonal (effective gain) per position of the ordered group.
pub fn effective_gains_fast(cache: &GramInverseCache, users: &[usize]) -> Result<Vec<f64>> {
    let r = effective_r_fast(cache, users)?;
    Ok(r.real_diag().iter().map(|d| d * d).collect())
}

/// Beamformer Q[k] for group `k` of `grouping`, via the cached inverse:
/// F[k] is reconstructed as H^H T^H (A[k] (F^H F)) and factorized. The
/// positive-diagonal convention makes the result match the direct QR path.
///
/// Fails with `StaleCache` when `cache` was not built from `h`.
pub fn beamformer_fast(
    h: &ChannelMatrix,
    cache: &GramInverseCache,
    grouping: &Grouping,
    k: usize,
) -> Result<CMatrix> {
    cache.check(h)?;
    let users = grouping.group(k);
    let others = grouping.complement(k);
    let n_users = h.n_users();
    let g = users.len();

    // A[k]: first g columns of the permuted inverse, rows ordered
    // (group users, then the rest).
    let mut perm: Vec<usize> = users.to_vec();
    perm.extend_from_slice(&others);
    let a = cache.hhh_inv.select(&perm, users);

    // Right-multiply by the inverse of the upper g x g block, i.e. by
    // F[k]^H F[k].
    let block = cache.hhh_inv.select(users, users);
    let gram_f = numkit::hermitian_inverse(&block)?;
    let y = a.mul(&gram_f);

    // Un-permute the rows and pre-multiply by H^H to obtain F[k].
    let mut z = CMatrix::zeros(n_users, g);
    for (r, &orig) in perm.iter().enumerate() {
        for c in 0..g {
            z[(orig, c)] = y[(r, c)];
        }
    }
    let f = h.matrix().adjoint().mul(&z);
    let (q, _) = numkit::qr_positive(&f)?;
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{self, RngSeed};
    use crate::precoder;
    use num_complex::Complex64;

    #[test]
    fn cache_of_identity_and_diagonal_channels() {
        let id = channel::ChannelMatrix::new(CMatrix::identity(4)).unwrap();
        let cache = build_cache(&id).unwrap();
        assert!(cache.hhh_inv().sub(&CMatrix::identity(4)).max_abs() < 1e-12);

        let d =
            channel::ChannelMatrix::new(CMatrix::from_real_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]))
                .unwrap();
        let cache = build_cache(&d).unwrap();
        assert!((cache.hhh_inv()[(0, 0)].re - 0.25).abs() < 1e-12);
        assert!((cache.hhh_inv()[(1, 1)].re - 1.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn cache_invariant_product_is_identity() {
        let h = channel::rayleigh(5, 7, RngSeed::new(4, 0)).unwrap();
        let cache = build_cache(&h).unwrap();
        let gram = h.matrix().mul(&h.matrix().adjoint());
        let resid = gram
            .mul(cache.hhh_inv())
            .sub(&CMatrix::identity(5))
            .max_abs();
        assert!(resid < 1e-10, "residual {resid}");
        assert!(cache.hhh_inv().hermitian_residual() == 0.0);
    }

    #[test]
    fn hex_cache_diagonal_matches_zf_gains() {
        let h = channel::builtin_hex();
        let cache = build_cache(&h).unwrap();
        let via_cache = cache.zf_gains();
        let via_module = crate::powalloc::zf_gains(&h).unwrap();
        for (a, b) in via_cache.iter().zip(&via_module) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hex_pair_r_matches_reference_values() {
        let h = channel::builtin_hex();
        let cache = build_cache(&h).unwrap();
        let r = effective_r_fast(&cache, &[0, 4]).unwrap();
        assert!((r[(0, 0)].re - 0.218).abs() < 0.001);
        assert!((r[(0, 1)].re - (-0.432)).abs() < 0.001);
        assert!((r[(1, 1)].re - 0.133).abs() < 0.001);
        assert!(r[(1, 0)].norm() < 1e-14);
    }

    #[test]
    fn singleton_group_reduces_to_zf_gain() {
        let h = channel::rayleigh(6, 6, RngSeed::new(8, 2)).unwrap();
        let cache = build_cache(&h).unwrap();
        for j in 0..6 {
            let r = effective_r_fast(&cache, &[j]).unwrap();
            let expect = 1.0 / cache.hhh_inv()[(j, j)].re.sqrt();
            assert!((r[(0, 0)].re - expect).abs() < 1e-10 * expect);
        }
    }

    #[test]
    fn fast_r_matches_qr_path_on_random_instances() {
        let mut checked = 0;
        for trial in 0..60 {
            let h = channel::rayleigh(6, 6, RngSeed::new(1000, trial)).unwrap();
            let cache = build_cache(&h).unwrap();
            for g in [1usize, 2, 3] {
                let grouping =
                    crate::grouping::random_grouping(6, g, RngSeed::new(2000 + g as u64, trial))
                        .unwrap();
                for k in 0..grouping.n_groups() {
                    let fast = effective_r_fast(&cache, grouping.group(k)).unwrap();
                    let slow = precoder::effective_channel(&h, &grouping, k).unwrap();
                    let scale = slow.r().max_abs();
                    let dev = fast.sub(slow.r()).max_abs() / scale;
                    assert!(dev < 1e-8, "relative deviation {dev}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 500);
    }

    #[test]
    fn fast_beamformer_matches_qr_path_and_nulls() {
        let h = channel::builtin_hex();
        let cache = build_cache(&h).unwrap();
        let grouping = Grouping::from_one_based(&[vec![2, 5], vec![3, 1], vec![4, 6]], 6).unwrap();
        for k in 0..3 {
            let q_fast = beamformer_fast(&h, &cache, &grouping, k).unwrap();
            let slow = precoder::effective_channel(&h, &grouping, k).unwrap();
            assert!(q_fast.sub(slow.q()).max_abs() < 1e-8);
            let others = h.rows_of(&grouping.complement(k));
            assert!(others.mul(&q_fast).max_abs() < 1e-10);
        }
    }

    #[test]
    fn identity_channel_beamformer_is_axis_aligned() {
        let h = channel::ChannelMatrix::new(CMatrix::identity(4)).unwrap();
        let cache = build_cache(&h).unwrap();
        let grouping = Grouping::new(vec![vec![0, 1], vec![2, 3]], 4).unwrap();
        let q = beamformer_fast(&h, &cache, &grouping, 0).unwrap();
        let mut expect = CMatrix::zeros(4, 2);
        expect[(0, 0)] = Complex64::new(1.0, 0.0);
        expect[(1, 1)] = Complex64::new(1.0, 0.0);
        assert!(q.sub(&expect).max_abs() < 1e-12);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let h1 = channel::rayleigh(4, 4, RngSeed::new(1, 0)).unwrap();
        let h2 = channel::rayleigh(4, 4, RngSeed::new(1, 1)).unwrap();
        let cache = build_cache(&h1).unwrap();
        let grouping = Grouping::new(vec![vec![0, 1], vec![2, 3]], 4).unwrap();
        assert!(matches!(
            beamformer_fast(&h2, &cache, &grouping, 0),
            Err(Error::StaleCache(_))
        ));
    }
}
