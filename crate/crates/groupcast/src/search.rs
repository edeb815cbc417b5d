//! Grouping optimization: exhaustive search, the greedy grouping algorithm
//! (GUGA), and the alternating power-allocation/grouping loop (JPAUGA).
//!
//! GUGA works on a table of group rates for every ordered g-subset of the
//! active users. A subset's rate does not depend on how the *other* users
//! are grouped (the beamformer nulls all of them), so the table is
//! computed once per power vector and entries are only crossed out as
//! users get scheduled. Ties in the argmax go to the lexicographically
//! smallest ordered subset, which keeps every run reproducible.

use crate::channel::ChannelMatrix;
use crate::fastpath::{self, GramInverseCache};
use crate::grouping::{self, Grouping};
use crate::powalloc::{self, PowerAllocation};
use crate::{Error, Result};

/// Outcome of a grouping search.
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub grouping: Grouping,
    pub powers: PowerAllocation,
    /// Sum rate of the returned grouping/powers (bpcu).
    pub sum_rate: f64,
    /// Iterations actually carried out (JPAUGA) or groupings examined
    /// (brute force).
    pub iterations: usize,
    /// Accepted sum rate after each iteration; nondecreasing, ends at
    /// `sum_rate`.
    pub rate_trace: Vec<f64>,
}

/// Rate of one ordered subset treated as a group, under fixed powers.
fn subset_rate(cache: &GramInverseCache, users: &[usize], powers: &[f64]) -> Result<f64> {
    let gains = fastpath::effective_gains_fast(cache, users)?;
    Ok(users
        .iter()
        .zip(&gains)
        .map(|(&u, &g)| (1.0 + powers[u] * g).log2())
        .sum())
}

/// Sum rate of a full grouping with waterfilled powers, via the cache.
pub fn opt_rate_for_grouping(
    cache: &GramInverseCache,
    grouping: &Grouping,
    p_t: f64,
) -> Result<(f64, PowerAllocation)> {
    let mut gains = vec![0.0; grouping.n_users()];
    for k in 0..grouping.n_groups() {
        let group_gains = fastpath::effective_gains_fast(cache, grouping.group(k))?;
        for (j, &u) in grouping.group(k).iter().enumerate() {
            gains[u] = group_gains[j];
        }
    }
    let pa = powalloc::waterfill(&gains, p_t)?;
    let rate = gains
        .iter()
        .zip(&pa.powers)
        .map(|(&g, &p)| (1.0 + p * g).log2())
        .sum();
    Ok((rate, pa))
}

fn ordered_subsets(users: &[usize], g: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(g);
    fn rec(users: &[usize], g: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == g {
            out.push(current.clone());
            return;
        }
        for &u in users {
            if current.contains(&u) {
                continue;
            }
            current.push(u);
            rec(users, g, current, out);
            current.pop();
        }
    }
    rec(users, g, &mut current, &mut out);
    out
}

/// Rates of every ordered g-subset of all users, in lexicographic subset
/// order. Entries use 0-based user indices.
pub fn rate_table_with_cache(
    cache: &GramInverseCache,
    powers: &[f64],
    g: usize,
) -> Result<Vec<(Vec<usize>, f64)>> {
    let n = cache.n_users();
    if g == 0 || g > n {
        return Err(Error::InvalidGrouping(format!(
            "subset size {g} invalid for {n} users"
        )));
    }
    if powers.len() != n {
        return Err(Error::PowerMismatch(format!(
            "expected {n} powers, got {}",
            powers.len()
        )));
    }
    let all: Vec<usize> = (0..n).collect();
    ordered_subsets(&all, g)
        .into_iter()
        .map(|s| {
            let rate = subset_rate(cache, &s, powers)?;
            Ok((s, rate))
        })
        .collect()
}

/// Convenience wrapper that builds the Gram-inverse cache first.
pub fn rate_table(h: &ChannelMatrix, powers: &[f64], g: usize) -> Result<Vec<(Vec<usize>, f64)>> {
    let cache = fastpath::build_cache(h)?;
    rate_table_with_cache(&cache, powers, g)
}

/// Verification-oracle variant of `rate_table` that goes through the
/// direct projector + QR path instead of the cache.
pub fn rate_table_qr(
    h: &ChannelMatrix,
    powers: &[f64],
    g: usize,
) -> Result<Vec<(Vec<usize>, f64)>> {
    let all: Vec<usize> = (0..h.n_users()).collect();
    ordered_subsets(&all, g)
        .into_iter()
        .map(|s| {
            let gp = crate::precoder::effective_channel_for_users(h, &s)?;
            let p: Vec<f64> = s.iter().map(|&u| powers[u]).collect();
            let rate = crate::precoder::group_rate(gp.r(), &p);
            Ok((s, rate))
        })
        .collect()
}

/// Greedy grouping for fixed powers: repeatedly pick the ordered g-subset
/// of still-active users with the maximum group rate.
pub fn guga_with_cache(cache: &GramInverseCache, powers: &[f64], g: usize) -> Result<Grouping> {
    let n = cache.n_users();
    if g == 0 || !n.is_multiple_of(g) {
        return Err(Error::InvalidGrouping(format!(
            "group size {g} does not divide {n} users"
        )));
    }
    let table = rate_table_with_cache(cache, powers, g)?;
    let mut active = vec![true; n];
    let mut groups: Vec<Vec<usize>> = Vec::with_capacity(n / g);
    for _ in 0..n / g {
        let mut best: Option<(&[usize], f64)> = None;
        for (subset, rate) in &table {
            if subset.iter().any(|&u| !active[u]) {
                continue;
            }
            // Strictly-greater keeps the first (lexicographically
            // smallest) subset on ties.
            if best.is_none_or(|(_, r)| *rate > r) {
                best = Some((subset, *rate));
            }
        }
        let (subset, _) = best.expect("active subsets remain while users remain");
        for &u in subset {
            active[u] = false;
        }
        groups.push(subset.to_vec());
    }
    Grouping::new(groups, n)
}

/// Greedy grouping straight from a channel and a power vector.
pub fn guga(h: &ChannelMatrix, powers: &[f64], g: usize) -> Result<Grouping> {
    let cache = fastpath::build_cache(h)?;
    guga_with_cache(&cache, powers, g)
}

/// Exhaustive maximization of the waterfilled sum rate over every
/// grouping. Ties go to the first maximal grouping in enumeration order.
pub fn brute_force_optimal(
    h: &ChannelMatrix,
    p_t: f64,
    g: usize,
    budget: u128,
) -> Result<SearchResult> {
    let cache = fastpath::build_cache(h)?;
    let mut best: Option<(Grouping, PowerAllocation, f64)> = None;
    let mut first_err: Option<Error> = None;
    let mut examined = 0usize;
    grouping::enumerate_groupings(h.n_users(), g, budget, |grouping| {
        examined += 1;
        match opt_rate_for_grouping(&cache, grouping, p_t) {
            Ok((rate, pa)) => {
                if best.as_ref().is_none_or(|(_, _, r)| rate > *r) {
                    best = Some((grouping.clone(), pa, rate));
                }
            }
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    })?;
    if let Some(e) = first_err {
        return Err(e);
    }
    let (grouping, powers, sum_rate) = best.expect("at least one grouping enumerated");
    Ok(SearchResult {
        grouping,
        powers,
        sum_rate,
        iterations: examined,
        rate_trace: vec![sum_rate],
    })
}

/// Joint power allocation and user grouping: start from the zero-forcing
/// waterfilling allocation, then alternate greedy regrouping (powers
/// fixed) with waterfilling (grouping fixed). An iteration that fails to
/// improve the rate is rejected, so the accepted trace is nondecreasing;
/// the loop also stops once the relative improvement drops below
/// `rel_threshold`.
pub fn jpauga(
    h: &ChannelMatrix,
    p_t: f64,
    g: usize,
    max_itr: usize,
    rel_threshold: f64,
) -> Result<SearchResult> {
    if max_itr < 1 {
        return Err(Error::DomainError("max_itr must be at least 1".into()));
    }
    if rel_threshold < 0.0 {
        return Err(Error::DomainError(
            "rel_threshold must be nonnegative".into(),
        ));
    }
    let cache = fastpath::build_cache(h)?;
    let p0 = powalloc::waterfill(&cache.zf_gains(), p_t)?;

    let mut current_powers = p0.powers;
    let mut best: Option<(Grouping, PowerAllocation, f64)> = None;
    let mut trace: Vec<f64> = Vec::new();
    for _ in 0..max_itr {
        let grouping = guga_with_cache(&cache, &current_powers, g)?;
        let (rate, pa) = opt_rate_for_grouping(&cache, &grouping, p_t)?;
        let prev = best.as_ref().map(|(_, _, r)| *r);
        if prev.is_some_and(|r| rate < r) {
            break;
        }
        current_powers = pa.powers.clone();
        best = Some((grouping, pa, rate));
        trace.push(rate);
        if let Some(prev_rate) = prev {
            if prev_rate > 0.0 && (rate - prev_rate) / prev_rate < rel_threshold {
                break;
            }
            if prev_rate == 0.0 && rate == 0.0 {
                break;
            }
        }
    }
    let (grouping, powers, sum_rate) = best.expect("at least one iteration accepted");
    Ok(SearchResult {
        grouping,
        powers,
        sum_rate,
        iterations: trace.len(),
        rate_trace: trace,
    })
}
