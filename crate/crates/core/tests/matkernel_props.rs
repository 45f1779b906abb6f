mod common;

use proptest::prelude::*;
use qbd_tails::matkernel::{
    inverse, solve_linear, solve_right, spectral_radius, spectral_radius_or_bound,
};
use qbd_tails::Mat;
use rand::Rng;

fn well_conditioned(seed: u64, n: usize) -> Mat {
    let mut r = common::rng(seed);
    let mut a = Mat::from_vec(n, n, (0..n * n).map(|_| r.gen_range(-1.0..1.0)).collect());
    for i in 0..n {
        let off: f64 = a.row(i).iter().map(|v| v.abs()).sum();
        a[(i, i)] = if r.gen_bool(0.5) {
            off + 1.0
        } else {
            -(off + 1.0)
        };
    }
    a
}

fn stochastic(seed: u64, n: usize) -> Mat {
    let mut r = common::rng(seed);
    let mut a = Mat::from_vec(n, n, (0..n * n).map(|_| r.gen_range(0.0..1.0)).collect());
    for i in 0..n {
        let s: f64 = a.row(i).iter().sum();
        for j in 0..n {
            a[(i, j)] /= s;
        }
    }
    a
}

proptest! {
    #[test]
    fn solve_recovers_x(seed in any::<u64>(), n in 1usize..=20, cols in 1usize..4) {
        let a = well_conditioned(seed, n);
        let mut r = common::rng(seed ^ 0x5eed);
        let x = Mat::from_vec(n, cols, (0..n * cols).map(|_| r.gen_range(-5.0..5.0)).collect());
        let got = solve_linear(&a, &(&a * &x)).unwrap();
        prop_assert!(got.max_abs_diff(&x) < 1e-9);
    }

    #[test]
    fn right_solve_and_inverse_agree(seed in any::<u64>(), n in 1usize..=12) {
        let a = well_conditioned(seed, n);
        let b = well_conditioned(seed.wrapping_add(1), n);
        let via_inv = &b * &inverse(&a).unwrap();
        prop_assert!(solve_right(&b, &a).unwrap().max_abs_diff(&via_inv) < 1e-10);
    }

    #[test]
    fn stochastic_radius_is_one(seed in any::<u64>(), n in 1usize..=15) {
        let p = stochastic(seed, n);
        let rho = spectral_radius(&p, 1e-12, 10_000).unwrap();
        prop_assert!((rho - 1.0).abs() < 1e-8, "rho {}", rho);
        prop_assert!((spectral_radius_or_bound(&p) - 1.0).abs() < 1e-8);
    }
}
