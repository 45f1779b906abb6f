mod common;

use proptest::prelude::*;
use qbd_tails::oracle::truncate_and_solve;
use qbd_tails::qbd::{
    factorize, solve_r, tails_lu, tails_matrix_geometric, tails_ul, FactorizationKind,
    FixedPointOptions, LuOptions,
};
use qbd_tails::{Mat, TailSeries};

const K: usize = 20;

fn all_routes(seed: u64) -> (qbd_tails::qbd::QbdModel, [TailSeries; 3]) {
    let q = common::random_qbd(seed);
    let (r, b) = q.stationary(FixedPointOptions::default()).unwrap();
    let mg = tails_matrix_geometric(&b.x0, &b.x1, &r.matrix, K).unwrap();
    let ul = tails_ul(&q, &r.matrix, &b, K).unwrap();
    let lu = tails_lu(&q, &b.x0, K, LuOptions::default()).unwrap();
    (q, [mg, ul, lu])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn routes_agree(seed in any::<u64>()) {
        let (_, [mg, ul, lu]) = all_routes(seed);
        prop_assert!(mg.max_abs_diff(&ul, K) < 1e-8);
        prop_assert!(mg.max_abs_diff(&lu, K) < 1e-8);
        prop_assert!(ul.max_abs_diff(&lu, K) < 1e-8);
        prop_assert!(ul.report.get("ul.identity_residual").unwrap() < 1e-8);
    }

    #[test]
    fn tails_monotone_and_mass_balanced(seed in any::<u64>()) {
        let (_, [mg, ul, lu]) = all_routes(seed);
        for t in [&mg, &ul, &lu] {
            prop_assert!(t.is_monotone(1e-14));
            let mass: f64 = t.x0.iter().sum::<f64>() + t.pi(1).iter().sum::<f64>();
            prop_assert!((mass - 1.0).abs() < 1e-9, "mass {}", mass);
        }
    }

    #[test]
    fn minimal_r_iterates_stay_below(seed in any::<u64>()) {
        let q = common::random_qbd(seed);
        let r = solve_r(q.a0(), q.a1(), q.a2(), FixedPointOptions::default()).unwrap().matrix;
        prop_assert!(r.is_nonnegative(0.0));
        // a truncated run of the same iteration is a lower iterate
        for iters in [1usize, 5, 25] {
            let early = solve_r(q.a0(), q.a1(), q.a2(), FixedPointOptions { tol: 1e-12, max_iter: iters });
            if let Ok(e) = early {
                prop_assert!((&r - &e.matrix).min_entry() >= -1e-12);
            }
        }
    }

    #[test]
    fn factorizations_reconstruct(seed in any::<u64>(), lu in any::<bool>()) {
        let q = common::random_qbd(seed);
        let kind = if lu { FactorizationKind::Lu } else { FactorizationKind::Ul };
        let f = factorize(&q, kind, 30).unwrap();
        let e = f.reconstruction_error(&q);
        prop_assert!(e.interior < 1e-9, "interior {}", e.interior);
        prop_assert!(f.sign_pattern_holds(1e-12));
    }
}

#[test]
fn oracle_agreement_on_random_instances() {
    for seed in 0..12u64 {
        let (q, routes) = all_routes(seed);
        let oracle = truncate_and_solve(&q, 400).unwrap();
        for t in &routes {
            let d = t.max_abs_diff(&oracle.tails, K);
            assert!(d < 1e-7, "seed {seed} {:?}: {d}", t.method);
        }
    }
}

#[test]
fn minimal_root_in_scalar_case() {
    // λ=1, μ=2: roots of 2r² − 3r + 1 are 1/2 and 1
    let r = solve_r(
        &Mat::scalar(1.0),
        &Mat::scalar(-3.0),
        &Mat::scalar(2.0),
        FixedPointOptions::default(),
    )
    .unwrap();
    assert!((r.matrix[(0, 0)] - 0.5).abs() < 1e-12);
    assert!(r.matrix[(0, 0)] <= 1.0);
}
