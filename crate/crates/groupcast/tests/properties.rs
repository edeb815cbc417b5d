//! Property tests for the algebraic invariants.

use num_complex::Complex64;
use proptest::prelude::*;

use groupcast::channel::RngSeed;
use groupcast::grouping;
use groupcast::numkit::{self, CMatrix};
use groupcast::powalloc;

fn complex_entry() -> impl Strategy<Value = Complex64> {
    (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

fn tall_matrix() -> impl Strategy<Value = CMatrix> {
    (2usize..=8, 1usize..=3).prop_flat_map(|(n, g)| {
        let g = g.min(n);
        proptest::collection::vec(complex_entry(), n * g)
            .prop_map(move |data| CMatrix::from_fn(n, g, |r, c| data[r * g + c]))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn qr_reconstructs_and_is_orthonormal(f in tall_matrix()) {
        // Skip numerically rank-deficient draws; those must error instead.
        let svals = numkit::singular_values(&f);
        let smin = svals[svals.len() - 1];
        match numkit::qr_positive(&f) {
            Ok((q, r)) => {
                let resid = q.mul(&r).sub(&f).max_abs();
                prop_assert!(resid < 1e-10 * f.max_abs().max(1.0));
                let g = f.cols();
                let ortho = q.adjoint().mul(&q).sub(&CMatrix::identity(g)).max_abs();
                prop_assert!(ortho < 1e-10);
                for j in 0..g {
                    prop_assert!(r[(j, j)].re > 0.0 && r[(j, j)].im == 0.0);
                }
            }
            Err(_) => prop_assert!(smin <= numkit::rank_tol(svals[0]) * 1.01),
        }
    }

    #[test]
    fn cholesky_of_gram_matrices_reconstructs(f in tall_matrix()) {
        let m = f.adjoint().mul(&f);
        if let Ok(r) = numkit::cholesky_upper(&m) {
            let resid = r.adjoint().mul(&r).sub(&m).max_abs();
            prop_assert!(resid < 1e-9 * m.max_abs().max(1.0));
        }
    }

    #[test]
    fn waterfill_satisfies_budget_and_kkt(
        gains in proptest::collection::vec(1e-3..10.0f64, 1..10),
        p_t in 1e-3..100.0f64,
    ) {
        let pa = powalloc::waterfill(&gains, p_t).unwrap();
        let sum: f64 = pa.powers.iter().sum();
        prop_assert!((sum - p_t).abs() <= 1e-9 * p_t);
        prop_assert!(pa.water_level > 0.0);
        for (i, &p) in pa.powers.iter().enumerate() {
            prop_assert!(p >= 0.0);
            let a = 1.0 / gains[i];
            if p == 0.0 {
                prop_assert!(pa.water_level <= a + 1e-9);
            } else {
                prop_assert!((p - (pa.water_level - a)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn random_groupings_always_validate(
        n_groups in 1usize..5,
        g in 1usize..4,
        master in any::<u64>(),
        stream in any::<u64>(),
    ) {
        let n = n_groups * g;
        let grouping = grouping::random_grouping(n, g, RngSeed::new(master, stream)).unwrap();
        // Reconstructing through the validating constructor must succeed.
        let rebuilt = grouping::Grouping::new(grouping.groups().to_vec(), n).unwrap();
        prop_assert_eq!(rebuilt.group_size(), g);
        let ones = grouping.to_one_based();
        let back = grouping::Grouping::from_one_based(&ones, n).unwrap();
        prop_assert_eq!(back, grouping);
    }

    #[test]
    fn enumeration_count_matches_formula(n_groups in 1usize..4, g in 1usize..3) {
        let n = n_groups * g;
        let mut seen = 0u128;
        grouping::enumerate_groupings(n, g, u128::MAX, |_| seen += 1).unwrap();
        prop_assert_eq!(Some(seen), grouping::count_groupings(n, g));
    }
}
