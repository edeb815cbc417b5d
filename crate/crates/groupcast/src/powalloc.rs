//! Waterfilling power allocation over effective channel gains.

use crate::channel::ChannelMatrix;
use crate::fastpath;
use crate::{Error, Result};

/// A power allocation under a total-power constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    /// Power per entry of the gain vector (same order as the gains).
    pub powers: Vec<f64>,
    /// Total power `P_T`.
    pub total: f64,
    /// Water level `mu`.
    pub water_level: f64,
}

/// Waterfilling: `p_i = [mu - 1/g_i]^+` with `sum p_i = P_T`.
///
/// The water level is found exactly by the sorted-threshold method: sort
/// the inverse gains ascending and find the active-set size analytically.
/// A user whose inverse gain lands exactly on the water level receives
/// zero power.
pub fn waterfill(gains: &[f64], p_t: f64) -> Result<PowerAllocation> {
    if gains.is_empty() {
        return Err(Error::EmptyGains);
    }
    if p_t <= 0.0 || p_t.is_nan() {
        return Err(Error::DomainError(format!(
            "total power must be positive, got {p_t}"
        )));
    }
    if gains.iter().any(|&g| g <= 0.0 || !g.is_finite()) {
        return Err(Error::DomainError(
            "gains must be positive and finite".into(),
        ));
    }
    let n = gains.len();
    let inv: Vec<f64> = gains.iter().map(|&g| 1.0 / g).collect();
    let mut sorted = inv.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut prefix = vec![0.0; n + 1];
    for (i, &a) in sorted.iter().enumerate() {
        prefix[i + 1] = prefix[i] + a;
    }
    // Largest active-set size m with mu_m strictly above the m-th smallest
    // inverse gain; m = 1 always qualifies since p_t > 0.
    let mut water_level = p_t + sorted[0];
    for m in (1..=n).rev() {
        let mu = (p_t + prefix[m]) / m as f64;
        if mu > sorted[m - 1] {
            water_level = mu;
            break;
        }
    }
    let powers: Vec<f64> = inv.iter().map(|&a| (water_level - a).max(0.0)).collect();
    Ok(PowerAllocation {
        powers,
        total: p_t,
        water_level,
    })
}

/// Per-user zero-forcing effective gains: `1 / [(H H^H)^{-1}]_{(i,i)}`.
pub fn zf_gains(h: &ChannelMatrix) -> Result<Vec<f64>> {
    let cache = fastpath::build_cache(h)?;
    Ok(cache.zf_gains())
}
