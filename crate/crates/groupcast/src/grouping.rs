//! Ordered user groupings and enumeration of the grouping space.
//!
//! A grouping partitions users `0..n_users` into `n_users / g` groups of
//! size `g`. Order *within* a group matters (it fixes the successive
//! pre-subtraction order and therefore the rates); the order of the groups
//! themselves does not. Two groupings are equal iff they contain the same
//! ordered groups as an unordered collection, which gives
//! `n! / (n/g)!` distinct groupings.

use rand::Rng;

use crate::channel::RngSeed;
use crate::{Error, Result};

/// An ordered partition of `0..n_users` into groups of size `group_size`.
/// User indices are 0-based internally; CLI output converts to 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Grouping {
    groups: Vec<Vec<usize>>,
    n_users: usize,
    group_size: usize,
}

impl Grouping {
    /// Validate and build. Groups must all have equal size dividing
    /// `n_users`, and together cover every user exactly once.
    pub fn new(groups: Vec<Vec<usize>>, n_users: usize) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidGrouping("no groups".into()));
        }
        let group_size = groups[0].len();
        if group_size == 0 {
            return Err(Error::InvalidGrouping("empty group".into()));
        }
        if groups.iter().any(|g| g.len() != group_size) {
            return Err(Error::InvalidGrouping("groups have unequal sizes".into()));
        }
        if groups.len() * group_size != n_users {
            return Err(Error::InvalidGrouping(format!(
                "{} groups of size {group_size} do not cover {n_users} users",
                groups.len()
            )));
        }
        let mut seen = vec![false; n_users];
        for &u in groups.iter().flatten() {
            if u >= n_users {
                return Err(Error::InvalidGrouping(format!(
                    "user index {u} out of range for {n_users} users"
                )));
            }
            if seen[u] {
                return Err(Error::InvalidGrouping(format!("duplicate user {u}")));
            }
            seen[u] = true;
        }
        Ok(Self {
            groups,
            n_users,
            group_size,
        })
    }

    /// All users in one group, natural order (the ZF-DP special case).
    pub fn single_group(n_users: usize) -> Self {
        Self::new(vec![(0..n_users).collect()], n_users).expect("valid by construction")
    }

    /// One user per group (the zero-forcing special case).
    pub fn singletons(n_users: usize) -> Self {
        Self::new((0..n_users).map(|u| vec![u]).collect(), n_users).expect("valid by construction")
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, k: usize) -> &[usize] {
        &self.groups[k]
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    /// Users *not* in group `k`, in ascending order.
    pub fn complement(&self, k: usize) -> Vec<usize> {
        let mut in_group = vec![false; self.n_users];
        for &u in &self.groups[k] {
            in_group[u] = true;
        }
        (0..self.n_users).filter(|&u| !in_group[u]).collect()
    }

    /// Canonical form for equality testing: groups sorted by their first
    /// element. Never reorders users inside a group.
    pub fn canonical(&self) -> Grouping {
        let mut groups = self.groups.clone();
        groups.sort_by_key(|g| g[0]);
        Grouping {
            groups,
            n_users: self.n_users,
            group_size: self.group_size,
        }
    }

    /// 1-based nested representation used in CLI output.
    pub fn to_one_based(&self) -> Vec<Vec<usize>> {
        self.groups
            .iter()
            .map(|g| g.iter().map(|&u| u + 1).collect())
            .collect()
    }

    /// Parse from 1-based nested lists (inverse of `to_one_based`).
    pub fn from_one_based(groups: &[Vec<usize>], n_users: usize) -> Result<Self> {
        let zero: Vec<Vec<usize>> = groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|&u| {
                        u.checked_sub(1).ok_or_else(|| {
                            Error::InvalidGrouping("user index 0 in 1-based input".into())
                        })
                    })
                    .collect::<Result<Vec<usize>>>()
            })
            .collect::<Result<_>>()?;
        Self::new(zero, n_users)
    }
}

/// Number of distinct groupings `n! / (n/g)!`; `None` on u128 overflow.
pub fn count_groupings(n_users: usize, g: usize) -> Option<u128> {
    if g == 0 || !n_users.is_multiple_of(g) {
        return None;
    }
    let n_groups = n_users / g;
    let mut count: u128 = 1;
    for k in (n_groups + 1)..=n_users {
        count = count.checked_mul(k as u128)?;
    }
    Some(count)
}

/// Enumerate every distinct grouping exactly once, in a deterministic
/// lexicographic order, calling `visit` for each. The canonical
/// representative has its groups sorted by first element, so group-order
/// duplicates are never produced.
///
/// Fails with `BudgetExceeded` (before visiting anything) when the count
/// exceeds `budget`.
pub fn enumerate_groupings(
    n_users: usize,
    g: usize,
    budget: u128,
    mut visit: impl FnMut(&Grouping),
) -> Result<u128> {
    if g == 0 || !n_users.is_multiple_of(g) {
        return Err(Error::InvalidGrouping(format!(
            "group size {g} does not divide {n_users} users"
        )));
    }
    let count = count_groupings(n_users, g)
        .ok_or_else(|| Error::BudgetExceeded("grouping count overflows u128".into()))?;
    if count > budget {
        return Err(Error::BudgetExceeded(format!(
            "{count} groupings exceed budget {budget}"
        )));
    }

    let mut remaining: Vec<usize> = (0..n_users).collect();
    let mut groups: Vec<Vec<usize>> = Vec::with_capacity(n_users / g);
    let mut visited = 0u128;
    recurse(
        &mut remaining,
        &mut groups,
        None,
        g,
        n_users,
        &mut visited,
        &mut visit,
    );
    debug_assert_eq!(visited, count);
    Ok(visited)
}

/// Pick the next group: its first element must exceed the previous group's
/// first element (canonical order); the tail is any ordered arrangement of
/// `g - 1` of the remaining users.
fn recurse(
    remaining: &mut Vec<usize>,
    groups: &mut Vec<Vec<usize>>,
    prev_first: Option<usize>,
    g: usize,
    n_users: usize,
    visited: &mut u128,
    visit: &mut impl FnMut(&Grouping),
) {
    if remaining.is_empty() {
        *visited += 1;
        let grouping = Grouping {
            groups: groups.clone(),
            n_users,
            group_size: g,
        };
        visit(&grouping);
        return;
    }
    let candidates: Vec<usize> = remaining
        .iter()
        .copied()
        .filter(|&f| prev_first.is_none_or(|p| f > p))
        .collect();
    for first in candidates {
        remaining.retain(|&u| u != first);
        groups.push(vec![first]);
        extend_group(remaining, groups, first, g, n_users, visited, visit);
        groups.pop();
        // Restore ascending order.
        let pos = remaining.partition_point(|&u| u < first);
        remaining.insert(pos, first);
    }
}

fn extend_group(
    remaining: &mut Vec<usize>,
    groups: &mut Vec<Vec<usize>>,
    first: usize,
    g: usize,
    n_users: usize,
    visited: &mut u128,
    visit: &mut impl FnMut(&Grouping),
) {
    if groups.last().unwrap().len() == g {
        recurse(remaining, groups, Some(first), g, n_users, visited, visit);
        return;
    }
    let candidates: Vec<usize> = remaining.clone();
    for user in candidates {
        remaining.retain(|&u| u != user);
        groups.last_mut().unwrap().push(user);
        extend_group(remaining, groups, first, g, n_users, visited, visit);
        groups.last_mut().unwrap().pop();
        let pos = remaining.partition_point(|&u| u < user);
        remaining.insert(pos, user);
    }
}

/// Collect every grouping into a vector (desk-scale sizes only).
pub fn collect_groupings(n_users: usize, g: usize, budget: u128) -> Result<Vec<Grouping>> {
    let mut out = Vec::new();
    enumerate_groupings(n_users, g, budget, |grouping| out.push(grouping.clone()))?;
    Ok(out)
}

/// A grouping drawn uniformly from the grouping space: shuffle the users
/// and split into consecutive blocks. Every grouping has exactly
/// `(n/g)!` generating permutations, so the result is uniform.
pub fn random_grouping(n_users: usize, g: usize, seed: RngSeed) -> Result<Grouping> {
    if g == 0 || !n_users.is_multiple_of(g) {
        return Err(Error::InvalidGrouping(format!(
            "group size {g} does not divide {n_users} users"
        )));
    }
    let mut rng = seed.rng();
    let mut users: Vec<usize> = (0..n_users).collect();
    for i in (1..n_users).rev() {
        let j = rng.gen_range(0..=i);
        users.swap(i, j);
    }
    let groups = users.chunks(g).map(|c| c.to_vec()).collect();
    Ok(Grouping {
        groups,
        n_users,
        group_size: g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn validate_accepts_reference_example() {
        // {{U1,U4},{U2,U3}} with N_u = 4, g = 2 (1-based).
        let g = Grouping::from_one_based(&[vec![1, 4], vec![2, 3]], 4).unwrap();
        assert_eq!(g.group_size(), 2);
        assert_eq!(g.n_groups(), 2);
        assert_eq!(g.complement(0), vec![1, 2]);
    }

    #[test]
    fn validate_rejects_duplicates_and_gaps() {
        assert!(matches!(
            Grouping::from_one_based(&[vec![1, 1], vec![2, 3]], 4),
            Err(Error::InvalidGrouping(_))
        ));
        assert!(matches!(
            Grouping::new(vec![vec![0, 1], vec![2, 4]], 5),
            Err(Error::InvalidGrouping(_))
        ));
        assert!(matches!(
            Grouping::new(vec![vec![0, 1], vec![2]], 3),
            Err(Error::InvalidGrouping(_))
        ));
    }

    #[test]
    fn single_full_group_is_valid() {
        let g = Grouping::from_one_based(&[vec![1, 2, 3]], 3).unwrap();
        assert_eq!(g.n_groups(), 1);
        assert!(g.complement(0).is_empty());
    }

    #[test]
    fn counts_match_reference_values() {
        assert_eq!(count_groupings(4, 2), Some(12));
        assert_eq!(count_groupings(6, 2), Some(120));
        assert_eq!(count_groupings(12, 2), Some(665_280));
        assert_eq!(count_groupings(6, 3), Some(360));
        assert_eq!(count_groupings(2, 2), Some(2));
    }

    #[test]
    fn enumeration_yields_each_grouping_once() {
        let all = collect_groupings(4, 2, 1_000).unwrap();
        assert_eq!(all.len(), 12);
        let mut canon: Vec<Vec<Vec<usize>>> = all
            .iter()
            .map(|g| g.canonical().groups().to_vec())
            .collect();
        canon.sort();
        canon.dedup();
        assert_eq!(canon.len(), 12);
        // The twelve pairings of four users, written out by hand.
        let expected: Vec<Vec<Vec<usize>>> = vec![
            vec![vec![1, 2], vec![3, 4]],
            vec![vec![2, 1], vec![3, 4]],
            vec![vec![1, 2], vec![4, 3]],
            vec![vec![2, 1], vec![4, 3]],
            vec![vec![1, 3], vec![2, 4]],
            vec![vec![3, 1], vec![2, 4]],
            vec![vec![1, 3], vec![4, 2]],
            vec![vec![3, 1], vec![4, 2]],
            vec![vec![1, 4], vec![3, 2]],
            vec![vec![4, 1], vec![3, 2]],
            vec![vec![1, 4], vec![2, 3]],
            vec![vec![4, 1], vec![2, 3]],
        ];
        let mut expected_canon: Vec<Vec<Vec<usize>>> = expected
            .iter()
            .map(|g| {
                Grouping::from_one_based(g, 4)
                    .unwrap()
                    .canonical()
                    .groups()
                    .to_vec()
            })
            .collect();
        expected_canon.sort();
        assert_eq!(canon, expected_canon);
    }

    #[test]
    fn enumeration_counts_agree_with_double_factorial() {
        // For g = 2 and even n: 2^(n/2) * (n-1)(n-3)...1... matches
        // n!/( (n/g)! ); check both against the actual enumeration.
        for n in [2usize, 4, 6, 8] {
            let mut double_fact: u128 = 1;
            let mut k = n as u128 - 1;
            while k >= 1 {
                double_fact *= k;
                if k < 2 {
                    break;
                }
                k -= 2;
            }
            let formula = (1u128 << (n / 2)) * double_fact;
            assert_eq!(count_groupings(n, 2), Some(formula));
            let mut seen = 0u128;
            enumerate_groupings(n, 2, u128::MAX, |_| seen += 1).unwrap();
            assert_eq!(seen, formula);
        }
    }

    #[test]
    fn enumeration_respects_budget() {
        assert!(matches!(
            enumerate_groupings(6, 2, 100, |_| {}),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn every_enumerated_grouping_validates() {
        enumerate_groupings(6, 3, u128::MAX, |g| {
            Grouping::new(g.groups().to_vec(), 6).unwrap();
        })
        .unwrap();
    }

    #[test]
    fn random_grouping_is_deterministic_and_valid() {
        let a = random_grouping(6, 2, RngSeed::new(3, 1)).unwrap();
        let b = random_grouping(6, 2, RngSeed::new(3, 1)).unwrap();
        assert_eq!(a, b);
        Grouping::new(a.groups().to_vec(), 6).unwrap();

        let t = random_grouping(2, 2, RngSeed::new(5, 0)).unwrap();
        assert_eq!(t.n_groups(), 1);
    }

    #[test]
    fn random_grouping_is_uniform_over_the_12_pairings() {
        let mut freq: HashMap<Vec<Vec<usize>>, usize> = HashMap::new();
        let draws = 100_000;
        for t in 0..draws {
            let g = random_grouping(4, 2, RngSeed::new(99, t)).unwrap();
            *freq.entry(g.canonical().groups().to_vec()).or_default() += 1;
        }
        assert_eq!(freq.len(), 12);
        for (grouping, count) in freq {
            let f = count as f64 / draws as f64;
            assert!(
                (f - 1.0 / 12.0).abs() < 0.01,
                "grouping {grouping:?} frequency {f}"
            );
        }
    }
}
