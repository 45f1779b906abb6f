mod common;

use proptest::prelude::*;
use qbd_tails::ldqbd::solve_all;
use qbd_tails::models::{
    meanfield_ode, mn_mn_1_ldqbd, mn_mn_1_tails, repairable_qbd, repairable_tails, retrial_ldqbd,
    retrial_tails, supermarket_tail, vacation_qbd, vacation_tails, MeanFieldParams,
    RepairableParams, RepairableRoute, RetrialParams, VacationParams,
};
use qbd_tails::oracle::truncate_and_solve;
use qbd_tails::qbd::{tails_matrix_geometric, FixedPointOptions};

const K: usize = 20;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn retrial_matches_oracle(lambda in 0.1f64..0.8, theta in 0.5f64..2.0) {
        let p = RetrialParams { lambda, mu: 1.0, theta };
        let tails = retrial_tails(p, K, 200, 1e-12).unwrap();
        let oracle = truncate_and_solve(&retrial_ldqbd(p, 301).unwrap(), 300).unwrap();
        prop_assert!(tails.max_abs_diff(&oracle.tails, K) < 1e-7);
        for k in 1..K {
            prop_assert!(tails.pi(k).iter().sum::<f64>() >= tails.pi(k + 1).iter().sum::<f64>() - 1e-15);
        }
        // μ x_{W,k} = (λ + kθ) x_{I,k} with x_k = π_k − π_{k+1}
        for k in 1..K {
            let xw = tails.pi(k)[0] - tails.pi(k + 1)[0];
            let xi = tails.pi(k)[1] - tails.pi(k + 1)[1];
            prop_assert!((xw - (lambda + k as f64 * theta) * xi).abs() < 1e-7);
            let ow = oracle.x[k][0];
            prop_assert!((xw - ow).abs() < 1e-7);
        }
    }

    #[test]
    fn retrial_product_route_matches(lambda in 0.1f64..0.8, theta in 0.5f64..2.0) {
        let p = RetrialParams { lambda, mu: 1.0, theta };
        let tails = retrial_tails(p, K, 200, 1e-12).unwrap();
        let (product, lu) = solve_all(&retrial_ldqbd(p, 200).unwrap(), K).unwrap();
        prop_assert!(tails.max_abs_diff(&product, K) < 1e-7);
        prop_assert!(tails.max_abs_diff(&lu, K) < 1e-7);
    }

    #[test]
    fn vacation_geometric_and_oracle(lambda in 0.1f64..0.9, theta in 0.2f64..3.0) {
        let p = VacationParams { lambda, theta };
        let tails = vacation_tails(p, K).unwrap();
        let q = lambda / (lambda + theta);
        for k in 1..K {
            prop_assert!((tails.pi(k + 1)[0] - q * tails.pi(k)[0]).abs() < 1e-15);
            prop_assert!(tails.pi(k)[1] >= tails.pi(k + 1)[1] - 1e-15);
        }
        let model = vacation_qbd(p).unwrap();
        let oracle = truncate_and_solve(&model, 400).unwrap();
        prop_assert!(tails.max_abs_diff(&oracle.tails, K) < 1e-7);
        let (r, b) = model.stationary(FixedPointOptions::default()).unwrap();
        let mg = tails_matrix_geometric(&b.x0, &b.x1, &r.matrix, K).unwrap();
        prop_assert!(tails.max_abs_diff(&mg, K) < 1e-7);
    }

    #[test]
    fn repairable_routes_and_oracle(lambda in 0.05f64..0.4, alpha in 0.1f64..1.0, beta in 0.5f64..2.0) {
        let p = RepairableParams { lambda, mu: 1.0, alpha, beta };
        prop_assume!(p.rho() < 0.9);
        let it = repairable_tails(p, K, RepairableRoute::Iterative).unwrap();
        let mg = repairable_tails(p, K, RepairableRoute::MatrixGeometric).unwrap();
        prop_assert!(it.max_abs_diff(&mg, K) < 1e-9);
        let model = repairable_qbd(p).unwrap();
        let oracle = truncate_and_solve(&model, 400).unwrap();
        prop_assert!(it.max_abs_diff(&oracle.tails, K) < 1e-7);
        prop_assert!(mg.max_abs_diff(&oracle.tails, K) < 1e-7);
    }

    #[test]
    fn birth_death_series_matches_ldqbd(lambda in 0.5f64..3.0, c in 1usize..5) {
        let mu = move |n: usize| (n.min(c) as f64) * 1.0 + 0.5;
        prop_assume!(lambda < mu(c) * 0.95);
        let series = mn_mn_1_tails(|_| lambda, mu, K, 1e-14).unwrap();
        let ld = mn_mn_1_ldqbd(move |_| lambda, mu, c + 2).unwrap();
        let (product, lu) = solve_all(&ld, K).unwrap();
        prop_assert!(series.max_abs_diff(&product, K) < 1e-7);
        prop_assert!(series.max_abs_diff(&lu, K) < 1e-7);
    }

    #[test]
    fn supermarket_balance(rho in 0.05f64..0.95, d in 1u32..5) {
        for k in 1..=10 {
            let (prev, cur, next) = (
                supermarket_tail(rho, d, k - 1).unwrap(),
                supermarket_tail(rho, d, k).unwrap(),
                supermarket_tail(rho, d, k + 1).unwrap(),
            );
            let residual = rho * (prev.powi(d as i32) - cur.powi(d as i32)) - (cur - next);
            prop_assert!(residual.abs() < 1e-12);
        }
        if d == 1 {
            for k in 0..30 {
                prop_assert_eq!(supermarket_tail(rho, 1, k).unwrap(), rho.powi(k as i32));
            }
        }
    }
}

#[test]
fn meanfield_converges_to_fixed_point() {
    for d in [1u32, 2, 3] {
        let traj = meanfield_ode(MeanFieldParams::new(0.5, d, 40)).unwrap();
        assert!(traj.monotone);
        for (i, u) in traj.final_state.iter().take(10).enumerate() {
            assert!(
                (u - supermarket_tail(0.5, d, i + 1).unwrap()).abs() < 1e-8,
                "d={d} k={}",
                i + 1
            );
        }
    }
}
