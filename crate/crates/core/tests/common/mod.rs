#![allow(dead_code)]

use qbd_tails::ldqbd::{LdQbdModel, LevelBlocks};
use qbd_tails::matkernel::stationary_vector;
use qbd_tails::qbd::QbdModel;
use qbd_tails::skipfree::{mg1_drift, SkipFreeModel};
use qbd_tails::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn positive(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Mat {
    let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
    Mat::from_vec(rows, cols, data)
}

/// Sets the diagonal of `a1` so that each row of `[others.., a1]` sums to zero.
fn close_rows(a1: &mut Mat, others: &[&Mat]) {
    for i in 0..a1.rows() {
        a1[(i, i)] = 0.0;
        let mut s: f64 = a1.row(i).iter().sum();
        for o in others {
            s += o.row(i).iter().sum::<f64>();
        }
        a1[(i, i)] = -s;
    }
}

fn off_diagonal(rng: &mut ChaCha8Rng, m: usize) -> Mat {
    let mut a = positive(rng, m, m, 0.05, 1.0);
    for i in 0..m {
        a[(i, i)] = 0.0;
    }
    a
}

/// Mean drift `θA0e / θA2e` of a level-independent block triple.
pub fn drift_ratio(a0: &Mat, a1: &Mat, a2: &Mat) -> f64 {
    let gen = &(a0 + a1) + a2;
    let theta = Mat::row_vector(&stationary_vector(&gen).unwrap());
    let up = (&theta * a0).sum();
    let down = (&theta * a2).sum();
    up / down
}

/// Repeating blocks `(A0, A1, A2)` with drift ratio at most `max_ratio`.
pub fn repeating_blocks(rng: &mut ChaCha8Rng, m: usize, max_ratio: f64) -> (Mat, Mat, Mat) {
    let a0 = positive(rng, m, m, 0.05, 1.0);
    let mut a2 = positive(rng, m, m, 0.05, 1.0);
    let mut a1 = off_diagonal(rng, m);
    close_rows(&mut a1, &[&a0, &a2]);
    let ratio = drift_ratio(&a0, &a1, &a2);
    let target = rng.gen_range(0.3..max_ratio);
    a2 = a2.scale(ratio / target);
    close_rows(&mut a1, &[&a0, &a2]);
    (a0, a1, a2)
}

/// Random positive-recurrent QBD with `m0, m ∈ 1..=4`.
pub fn random_qbd(seed: u64) -> QbdModel {
    let mut r = rng(seed);
    let m = r.gen_range(1..=4);
    let m0 = r.gen_range(1..=4);
    let (a0, a1, a2) = repeating_blocks(&mut r, m, 0.85);
    let b0 = positive(&mut r, m0, m, 0.05, 1.0);
    let mut b1 = off_diagonal(&mut r, m0);
    close_rows(&mut b1, &[&b0]);
    let mut b2 = positive(&mut r, m, m0, 0.05, 1.0);
    let a2_rows = a2.row_sums();
    for (i, target) in a2_rows.iter().enumerate() {
        let s: f64 = b2.row(i).iter().sum();
        for j in 0..m0 {
            b2[(i, j)] *= target / s;
        }
    }
    QbdModel::new(b1, b0, b2, a0, a1, a2).unwrap()
}

/// Random LD-QBD whose blocks vary on levels `0..=horizon` and freeze after.
pub fn random_ldqbd(seed: u64, horizon: usize) -> LdQbdModel {
    let mut r = rng(seed);
    let m = r.gen_range(1..=4);
    let m0 = r.gen_range(1..=4);
    let (fa0, _, fa2) = repeating_blocks(&mut r, m, 0.8);
    let mut levels = Vec::with_capacity(horizon + 1);
    let a0 = positive(&mut r, m0, m, 0.05, 1.0);
    let mut a1 = off_diagonal(&mut r, m0);
    close_rows(&mut a1, &[&a0]);
    levels.push(LevelBlocks {
        a0,
        a1,
        a2: Mat::zeros(m0, 0),
    });
    for k in 1..=horizon {
        let last = k == horizon;
        let a0 = if last {
            fa0.clone()
        } else {
            positive(&mut r, m, m, 0.05, 1.5)
        };
        let a2 = if k == 1 {
            positive(&mut r, m, m0, 0.05, 1.5)
        } else if last {
            fa2.clone()
        } else {
            positive(&mut r, m, m, 0.05, 1.5)
        };
        let mut a1 = off_diagonal(&mut r, m);
        close_rows(&mut a1, &[&a0, &a2]);
        levels.push(LevelBlocks { a0, a1, a2 });
    }
    if horizon == 1 {
        unreachable!("horizon must be at least 2");
    }
    LdQbdModel::from_table(levels, horizon).unwrap()
}

fn stochastic_split(rng: &mut ChaCha8Rng, m: usize, parts: usize) -> Vec<Mat> {
    let mut blocks: Vec<Mat> = (0..parts).map(|_| positive(rng, m, m, 0.05, 1.0)).collect();
    for i in 0..m {
        let s: f64 = blocks.iter().map(|b| b.row(i).iter().sum::<f64>()).sum();
        for b in blocks.iter_mut() {
            for j in 0..m {
                b[(i, j)] /= s;
            }
        }
    }
    blocks
}

/// Random positive-recurrent GI/M/1-type chain with `m` phases everywhere.
pub fn random_gim1(seed: u64) -> SkipFreeModel {
    let mut r = rng(seed);
    let m = r.gen_range(1..=3);
    let depth = r.gen_range(3..=4);
    loop {
        let mut a = stochastic_split(&mut r, m, depth);
        // shift mass towards the downward blocks so the chain is recurrent
        a[0] = a[0].scale(0.5);
        let lost: Vec<f64> = (0..m)
            .map(|i| 1.0 - a.iter().map(|b| b.row(i).iter().sum::<f64>()).sum::<f64>())
            .collect();
        for (i, l) in lost.iter().enumerate() {
            a[depth - 1][(i, i)] += l;
        }
        // B_{k+1} = Σ_{j>k} A_j makes every row stochastic
        let mut b = Vec::with_capacity(depth + 1);
        b.push(a[0].clone());
        let mut rest: Vec<Mat> = (1..=depth)
            .map(|k| a[k..].iter().fold(Mat::zeros(m, m), |acc, x| &acc + x))
            .collect();
        b.append(&mut rest);
        if let Ok(model) = SkipFreeModel::gim1(b, a) {
            let asum = model
                .a_blocks()
                .iter()
                .fold(Mat::zeros(m, m), |acc, x| &acc + x);
            let theta = Mat::row_vector(&stationary_vector(&(&asum - &Mat::identity(m))).unwrap());
            let up = (&theta * &model.a_blocks()[0]).sum();
            let down: f64 = model
                .a_blocks()
                .iter()
                .enumerate()
                .map(|(k, ak)| (k as f64 - 1.0).max(0.0) * (&theta * ak).sum())
                .sum();
            if up < 0.9 * down {
                return model;
            }
        }
    }
}

/// Random positive-recurrent M/G/1-type chain with `m` phases everywhere.
pub fn random_mg1(seed: u64) -> SkipFreeModel {
    let mut r = rng(seed);
    let m = r.gen_range(1..=3);
    let depth = r.gen_range(3..=4);
    loop {
        let mut a = stochastic_split(&mut r, m, depth);
        // move half of each upward block onto the down block
        for k in 2..depth {
            let half = a[k].scale(0.5);
            a[k] = half.clone();
            a[0] = &a[0] + &half;
        }
        let mut b0 = positive(&mut r, m, m, 0.05, 1.0);
        for i in 0..m {
            let s: f64 = b0.row(i).iter().sum();
            let target: f64 = a[0].row(i).iter().sum();
            for j in 0..m {
                b0[(i, j)] *= target / s;
            }
        }
        let mut b = vec![b0];
        b.extend(stochastic_split(&mut r, m, depth - 1));
        let model = SkipFreeModel::mg1(b, a).unwrap();
        if mg1_drift(&model).unwrap() < -0.05 {
            return model;
        }
    }
}

pub fn max_diff_vec(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
