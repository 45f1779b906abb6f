mod common;

use proptest::prelude::*;
use qbd_tails::oracle::{truncate, truncate_and_solve};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn doubling_within_estimate(seed in any::<u64>()) {
        let q = common::random_qbd(seed);
        let coarse = truncate_and_solve(&q, 200).unwrap();
        let fine = truncate_and_solve(&q, 400).unwrap();
        let d = coarse.tails.max_abs_diff(&fine.tails, 20);
        prop_assert!(d <= 10.0 * coarse.error_estimate, "diff {} estimate {}", d, coarse.error_estimate);
    }

    #[test]
    fn stationary_vector_is_a_distribution(seed in any::<u64>()) {
        let model = common::random_ldqbd(seed, 6);
        let sol = truncate_and_solve(&model, 200).unwrap();
        let total: f64 = sol.x.iter().flatten().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(sol.x.iter().flatten().all(|v| *v >= -1e-15));
    }

    #[test]
    fn truncated_rows_balance(seed in any::<u64>()) {
        prop_assert!(truncate(&common::random_qbd(seed), 30).unwrap().row_sum_defect() < 1e-12);
        prop_assert!(truncate(&common::random_gim1(seed), 30).unwrap().row_sum_defect() < 1e-12);
        prop_assert!(truncate(&common::random_mg1(seed), 30).unwrap().row_sum_defect() < 1e-12);
    }
}
