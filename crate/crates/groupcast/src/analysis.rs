//! Ergodic-gap analysis and Monte Carlo rate-distribution campaigns.
//!
//! The closed-form ergodic gap between the paired precoder (uniform power,
//! channel-independent pairing) and zero-forcing on an i.i.d. Rayleigh
//! square channel is
//!
//!   d(P_T, N_u) = (N_u/2) log2(e) (1 - z e^z E_1(z)),  z = N_u / P_T,
//!
//! bracketed by (N_u/2) log2(e) (1 - z ln(1 + 1/z)) from below and
//! (N_u/2) log2(e) (1 - (z/2) ln(1 + 2/z)) from above. Both bounds tend to
//! (N_u/2) log2(e) as P_T grows, which translates into an asymptotic
//! 10 log10(sqrt(e)) ~ 2.17 dB power advantage independent of N_u.

use rayon::prelude::*;

use crate::channel::{self, ChannelMatrix, RngSeed};
use crate::fastpath;
use crate::grouping::{self, Grouping};
use crate::powalloc;
use crate::search;
use crate::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral E_1(z) for z > 0: series below 1, continued
/// fraction above. Relative accuracy ~1e-14 over [1e-6, 700].
pub fn exp_integral_e1(z: f64) -> Result<f64> {
    if z <= 0.0 || z.is_nan() {
        return Err(Error::DomainError(format!("E_1 needs z > 0, got {z}")));
    }
    if z < 1.0 {
        Ok(e1_series(z))
    } else {
        Ok(e1_cf_scaled(z) * (-z).exp())
    }
}

/// e^z E_1(z), safe for large z where E_1 alone underflows.
pub fn exp_scaled_e1(z: f64) -> Result<f64> {
    if z <= 0.0 || z.is_nan() {
        return Err(Error::DomainError(format!("E_1 needs z > 0, got {z}")));
    }
    if z < 1.0 {
        Ok(z.exp() * e1_series(z))
    } else {
        Ok(e1_cf_scaled(z))
    }
}

fn e1_series(z: f64) -> f64 {
    // E_1(z) = -gamma - ln z + sum_{k>=1} (-1)^{k+1} z^k / (k k!)
    let mut sum = 0.0;
    let mut pow = 1.0; // z^k / k!
    let mut sign = 1.0;
    for k in 1..=80 {
        pow *= z / k as f64;
        let term = sign * pow / k as f64;
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1.0) {
            break;
        }
        sign = -sign;
    }
    -EULER_GAMMA - z.ln() + sum
}

/// Modified Lentz evaluation of the continued fraction
/// e^z E_1(z) = 1/(z+1- 1/(z+3- 4/(z+5- 9/(...)))).
fn e1_cf_scaled(z: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = z + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=200 {
        let a = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (b + a * d);
        c = b + a / c;
        let delta = c * d;
        h *= delta;
        if (delta - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

/// Closed-form ergodic gap and its analytic bounds.
#[derive(Debug, Clone, Copy)]
pub struct GapResult {
    pub closed_form: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub p_t: f64,
    pub n_u: usize,
}

/// Closed-form gap between paired (g = 2, random pairing, uniform power)
/// and zero-forcing ergodic sum rates on an `n_u x n_u` Rayleigh channel.
pub fn gap_closed_form(p_t: f64, n_u: usize) -> Result<GapResult> {
    if p_t <= 0.0 || p_t.is_nan() {
        return Err(Error::DomainError(format!(
            "P_T must be positive, got {p_t}"
        )));
    }
    if n_u < 2 || !n_u.is_multiple_of(2) {
        return Err(Error::DomainError(format!(
            "pairing gap needs even n_u >= 2, got {n_u}"
        )));
    }
    let c = n_u as f64 / 2.0 * std::f64::consts::LOG2_E;
    let z = n_u as f64 / p_t;
    let closed_form = c * (1.0 - z * exp_scaled_e1(z)?);
    let lower_bound = c * (1.0 - z * (1.0 + 1.0 / z).ln());
    let upper_bound = c * (1.0 - z / 2.0 * (1.0 + 2.0 / z).ln());
    Ok(GapResult {
        closed_form,
        lower_bound,
        upper_bound,
        p_t,
        n_u,
    })
}

/// Asymptotic power advantage of pairing over zero-forcing:
/// 10 log10(sqrt(e)) dB, independent of the number of users.
pub fn snr_gap_db(_n_u: usize) -> f64 {
    10.0 * std::f64::consts::E.sqrt().log10()
}

/// Empirical estimate of the ergodic gap.
#[derive(Debug, Clone, Copy)]
pub struct GapEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

/// Pairing seeds must be independent of channel seeds; both are derived
/// from the same master so runs stay reproducible.
fn grouping_seed(master: u64, trial: u64) -> RngSeed {
    RngSeed::new(master ^ 0x9e37_79b9_7f4a_7c15, trial)
}

/// Monte Carlo estimate of the ergodic gap: per trial, draw a Rayleigh
/// channel and an independent random pairing, and take the difference of
/// the paired and zero-forcing sum rates, both under uniform power
/// `P_T / N_u` (the regime in which the closed form is exact).
pub fn monte_carlo_gap(n_u: usize, p_t: f64, trials: usize, seed: u64) -> Result<GapEstimate> {
    if trials < 1 {
        return Err(Error::DomainError("need at least one trial".into()));
    }
    if n_u < 2 || !n_u.is_multiple_of(2) {
        return Err(Error::DomainError(format!(
            "pairing gap needs even n_u >= 2, got {n_u}"
        )));
    }
    let uniform = p_t / n_u as f64;
    let gaps: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let h = channel::rayleigh(n_u, n_u, RngSeed::new(seed, t))?;
            let pairing = grouping::random_grouping(n_u, 2, grouping_seed(seed, t))?;
            let cache = fastpath::build_cache(&h)?;
            let mut paired = 0.0;
            for k in 0..pairing.n_groups() {
                let gains = fastpath::effective_gains_fast(&cache, pairing.group(k))?;
                paired += gains
                    .iter()
                    .map(|&g| (1.0 + uniform * g).log2())
                    .sum::<f64>();
            }
            let zf: f64 = cache
                .zf_gains()
                .iter()
                .map(|&g| (1.0 + uniform * g).log2())
                .sum();
            Ok(paired - zf)
        })
        .collect::<Result<_>>()?;
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    let var = gaps.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(GapEstimate {
        mean,
        std_error: (var / n).sqrt(),
        trials,
    })
}

/// Precoding scheme evaluated by the Monte Carlo campaigns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// Zero-forcing with waterfilling.
    Zf,
    /// Channel-independent random grouping, then waterfilling.
    Random,
    /// JPAUGA with the given iteration cap and stopping threshold.
    Jpauga { max_itr: usize, rel_threshold: f64 },
    /// Exhaustive optimal grouping (within the enumeration budget).
    Brute { budget: u128 },
    /// Single all-users group in natural order (ZF-DP).
    ZfDp,
}

impl Scheme {
    pub fn tag(&self) -> String {
        match self {
            Scheme::Zf => "zf".into(),
            Scheme::Random => "random".into(),
            Scheme::Jpauga {
                max_itr,
                rel_threshold,
            } => format!("jpauga(max_itr={max_itr},rel_threshold={rel_threshold})"),
            Scheme::Brute { .. } => "brute".into(),
            Scheme::ZfDp => "zfdp".into(),
        }
    }
}

/// Per-trial sum-rate samples for one scheme.
#[derive(Debug, Clone)]
pub struct RateSamples {
    pub scheme: String,
    pub samples: Vec<f64>,
    /// Channel fingerprint per trial; identical across schemes run with
    /// the same master seed.
    pub fingerprints: Vec<u64>,
    pub seed: u64,
    pub n_u: usize,
    pub n_t: usize,
    pub p_t: f64,
    pub g: usize,
}

fn scheme_rate(
    scheme: Scheme,
    h: &ChannelMatrix,
    p_t: f64,
    g: usize,
    seed: u64,
    trial: u64,
) -> Result<f64> {
    match scheme {
        Scheme::Zf => {
            let cache = fastpath::build_cache(h)?;
            let pa = powalloc::waterfill(&cache.zf_gains(), p_t)?;
            Ok(cache
                .zf_gains()
                .iter()
                .zip(&pa.powers)
                .map(|(&gn, &p)| (1.0 + p * gn).log2())
                .sum())
        }
        Scheme::Random => {
            let grouping = grouping::random_grouping(h.n_users(), g, grouping_seed(seed, trial))?;
            let cache = fastpath::build_cache(h)?;
            Ok(search::opt_rate_for_grouping(&cache, &grouping, p_t)?.0)
        }
        Scheme::Jpauga {
            max_itr,
            rel_threshold,
        } => Ok(search::jpauga(h, p_t, g, max_itr, rel_threshold)?.sum_rate),
        Scheme::Brute { budget } => Ok(search::brute_force_optimal(h, p_t, g, budget)?.sum_rate),
        Scheme::ZfDp => {
            let grouping = Grouping::single_group(h.n_users());
            let cache = fastpath::build_cache(h)?;
            Ok(search::opt_rate_for_grouping(&cache, &grouping, p_t)?.0)
        }
    }
}

/// Run `trials` independent channel draws and record the scheme's sum
/// rate on each. Trial `t` draws its channel from `(seed, stream t)`, so
/// campaigns with different schemes but the same seed share channels
/// trial by trial. Results are deterministic and independent of the
/// worker count.
pub fn rate_distribution(
    scheme: Scheme,
    n_u: usize,
    n_t: usize,
    p_t: f64,
    g: usize,
    trials: usize,
    seed: u64,
) -> Result<RateSamples> {
    if trials < 1 {
        return Err(Error::DomainError("need at least one trial".into()));
    }
    if let Scheme::Brute { budget } = scheme {
        let count = grouping::count_groupings(n_u, g)
            .ok_or_else(|| Error::BudgetExceeded("grouping count overflows u128".into()))?;
        if count > budget {
            return Err(Error::BudgetExceeded(format!(
                "{count} groupings exceed budget {budget}"
            )));
        }
    }
    let per_trial: Vec<(f64, u64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| -> Result<(f64, u64)> {
            let h = channel::rayleigh(n_u, n_t, RngSeed::new(seed, t))?;
            let rate = scheme_rate(scheme, &h, p_t, g, seed, t)?;
            Ok((rate, fastpath::channel_fingerprint(&h)))
        })
        .collect::<Result<_>>()?;
    let (samples, fingerprints) = per_trial.into_iter().unzip();
    Ok(RateSamples {
        scheme: scheme.tag(),
        samples,
        fingerprints,
        seed,
        n_u,
        n_t,
        p_t,
        g,
    })
}

/// Empirical `prob`-quantile with lower interpolation: the sample at
/// index `floor(prob * (n - 1))` of the ascending order statistics.
pub fn critical_rate(samples: &[f64], prob: f64) -> Result<f64> {
    if prob.is_nan() || prob <= 0.0 || prob >= 1.0 {
        return Err(Error::DomainError(format!(
            "prob must be in (0,1), got {prob}"
        )));
    }
    let n = samples.len();
    if (n as f64) < 10.0 / prob {
        return Err(Error::TooFewSamples(format!(
            "{n} samples cannot resolve the {prob} quantile (need at least {})",
            (10.0 / prob).ceil()
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = (prob * (n as f64 - 1.0)).floor() as usize;
    Ok(sorted[idx])
}

/// Histogram over 100 uniform bins spanning `[0, max sample]`.
pub fn histogram(samples: &[f64], bins: usize) -> (f64, Vec<usize>) {
    let max = samples.iter().cloned().fold(0.0, f64::max);
    let width = if max > 0.0 { max / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &s in samples {
        let mut idx = (s / width) as usize;
        if idx >= bins {
            idx = bins - 1;
        }
        counts[idx] += 1;
    }
    (width, counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson oracle on the shifted form
    /// E_1(z) = e^{-z} * integral of exp(-s)/(z+s) over s >= 0,
    /// which keeps the integrand well scaled for every z of interest.
    fn e1_quadrature(z: f64) -> f64 {
        let f = |s: f64| (-s).exp() / (z + s);
        let simpson = |a: f64, b: f64| {
            let m = 0.5 * (a + b);
            (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
        };
        fn adapt(
            simpson: &impl Fn(f64, f64) -> f64,
            a: f64,
            b: f64,
            whole: f64,
            tol: f64,
            depth: usize,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(a, m);
            let right = simpson(m, b);
            if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                adapt(simpson, a, m, left, tol / 2.0, depth - 1)
                    + adapt(simpson, m, b, right, tol / 2.0, depth - 1)
            }
        }
        // Magnitude reference: e^z E_1(z) < ln(1 + 1/z).
        let scale = (1.0 + 1.0 / z).ln();
        let hi = 60.0;
        let g = adapt(&simpson, 0.0, hi, simpson(0.0, hi), 1e-13 * scale, 52);
        (-z).exp() * g
    }

    #[test]
    fn e1_matches_reference_value_at_one() {
        let v = exp_integral_e1(1.0).unwrap();
        assert!((v - 0.219_383_934_4).abs() < 1e-9, "{v}");
    }

    #[test]
    fn e1_matches_quadrature_oracle() {
        for z in [1e-6, 1e-3, 0.1, 0.5, 0.999, 1.0, 1.5, 3.0, 10.0, 30.0, 50.0] {
            let v = exp_integral_e1(z).unwrap();
            let q = e1_quadrature(z);
            assert!((v - q).abs() <= 1e-10 * q.abs(), "z={z}: {v} vs {q}");
        }
    }

    #[test]
    fn e1_decays_at_large_argument() {
        assert!(exp_integral_e1(50.0).unwrap() < 1e-23);
    }

    #[test]
    fn e1_bracket_inequality() {
        // (1/2) ln(1 + 2/z) < e^z E_1(z) < ln(1 + 1/z).
        for z in [0.1, 1.0, 10.0] {
            let scaled = exp_scaled_e1(z).unwrap();
            assert!(0.5 * (1.0 + 2.0 / z).ln() < scaled);
            assert!(scaled < (1.0 + 1.0 / z).ln());
        }
    }

    #[test]
    fn e1_rejects_nonpositive_argument() {
        assert!(matches!(exp_integral_e1(0.0), Err(Error::DomainError(_))));
        assert!(matches!(exp_integral_e1(-1.0), Err(Error::DomainError(_))));
    }

    #[test]
    fn gap_bounds_bracket_the_closed_form() {
        for ratio in [0.1, 1.0, 10.0, 100.0] {
            let g = gap_closed_form(6.0 * ratio, 6).unwrap();
            assert!(
                g.lower_bound < g.closed_form && g.closed_form < g.upper_bound,
                "{g:?}"
            );
            assert!(g.lower_bound > 0.0);
        }
    }

    #[test]
    fn gap_limit_is_half_nu_log2e() {
        let limit = 3.0 * std::f64::consts::LOG2_E;
        assert!((limit - 4.328).abs() < 0.001);
        let g = gap_closed_form(6.0e4, 6).unwrap();
        assert!((g.closed_form - limit).abs() < 0.01 * limit);
        assert!((g.lower_bound - limit).abs() < 0.02 * limit);
        assert!((g.upper_bound - limit).abs() < 0.01 * limit);
    }

    #[test]
    fn gap_strictly_positive_at_low_power() {
        let g = gap_closed_form(1.0, 6).unwrap();
        assert!(g.lower_bound > 0.0 && g.closed_form > 0.0);
    }

    #[test]
    fn gap_rejects_bad_arguments() {
        assert!(matches!(
            gap_closed_form(0.0, 6),
            Err(Error::DomainError(_))
        ));
        assert!(matches!(
            gap_closed_form(1.0, 5),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn snr_gap_is_constant_and_correct() {
        assert!((snr_gap_db(6) - 2.171).abs() < 0.001);
        assert_eq!(snr_gap_db(6), snr_gap_db(12));
        assert!((std::f64::consts::E.sqrt() - 1.6487).abs() < 0.001);
    }

    #[test]
    fn monte_carlo_gap_matches_closed_form() {
        let est = monte_carlo_gap(6, 100.0, 10_000, 424_242).unwrap();
        let cf = gap_closed_form(100.0, 6).unwrap();
        assert!(
            (est.mean - cf.closed_form).abs() <= 3.0 * est.std_error,
            "mc {} +- {} vs closed {}",
            est.mean,
            est.std_error,
            cf.closed_form
        );
    }

    #[test]
    fn monte_carlo_gap_within_bounds_at_high_power() {
        let est = monte_carlo_gap(6, 1.0e4, 10_000, 77).unwrap();
        let cf = gap_closed_form(1.0e4, 6).unwrap();
        assert!(
            est.mean >= cf.lower_bound - 3.0 * est.std_error
                && est.mean <= cf.upper_bound + 3.0 * est.std_error,
            "mc {} +- {} outside ({}, {})",
            est.mean,
            est.std_error,
            cf.lower_bound,
            cf.upper_bound
        );
    }

    #[test]
    fn monte_carlo_gap_single_trial_is_reproducible() {
        let a = monte_carlo_gap(6, 10.0, 1, 5).unwrap();
        let b = monte_carlo_gap(6, 10.0, 1, 5).unwrap();
        assert_eq!(a.mean, b.mean);
    }

    #[test]
    fn rate_distribution_shares_channels_between_schemes() {
        let zf = rate_distribution(Scheme::Zf, 4, 4, 10.0, 2, 50, 9).unwrap();
        let jp = rate_distribution(
            Scheme::Jpauga {
                max_itr: 1,
                rel_threshold: 1e-4,
            },
            4,
            4,
            10.0,
            2,
            50,
            9,
        )
        .unwrap();
        assert_eq!(zf.fingerprints, jp.fingerprints);
        for (a, b) in jp.samples.iter().zip(&zf.samples) {
            assert!(a >= &(b - 1e-9), "jpauga {a} below zf {b}");
        }
    }

    #[test]
    fn rate_distribution_brute_budget_guard() {
        assert!(matches!(
            rate_distribution(Scheme::Brute { budget: 100 }, 12, 12, 10.0, 2, 1, 0),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn critical_rate_of_constant_samples() {
        let samples = vec![3.25; 20_000];
        assert_eq!(critical_rate(&samples, 1e-3).unwrap(), 3.25);
        assert_eq!(critical_rate(&samples, 0.5).unwrap(), 3.25);
    }

    #[test]
    fn critical_rate_needs_enough_samples() {
        let samples = vec![1.0; 100];
        assert!(matches!(
            critical_rate(&samples, 1e-3),
            Err(Error::TooFewSamples(_))
        ));
    }

    #[test]
    fn histogram_covers_all_samples() {
        let samples = vec![0.0, 0.5, 1.0, 2.0, 4.0];
        let (width, counts) = histogram(&samples, 100);
        assert_eq!(counts.iter().sum::<usize>(), samples.len());
        assert!((width - 0.04).abs() < 1e-12);
    }
}
