//! Brute-force reference solutions from a truncated chain.
//!
//! The chain is cut at level `L`. Rates (continuous time) that leave the
//! window are folded into the diagonal; probabilities (discrete time) that
//! leave it are redirected to level `L` in the same phase. The finite system
//! is solved densely.

use crate::error::{Error, Result};
use crate::ldqbd::LdQbdModel;
use crate::matkernel::{solve_right, Mat};
use crate::qbd::QbdModel;
use crate::skipfree::{SkipFreeKind, SkipFreeModel};
use crate::tails::{Method, TailSeries};

/// Largest dense system accepted.
pub const MAX_UNKNOWNS: usize = 5000;

const REFINE_STEPS: usize = 4;

/// `(sum, carry)` running compensated sum.
fn two_sum_acc((s, c): (f64, f64), v: f64) -> (f64, f64) {
    let t = s + v;
    let e = if s.abs() >= v.abs() {
        (s - t) + v
    } else {
        (v - t) + s
    };
    (t, c + e)
}

/// Dot product evaluated as if in twice the working precision.
fn compensated_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        if *y == 0.0 || *x == 0.0 {
            continue;
        }
        let p = x * y;
        let e = x.mul_add(*y, -p);
        acc = two_sum_acc(acc, p);
        acc.1 += e;
    }
    acc.0 + acc.1
}

/// Level-structured chain seen row by row.
pub trait BlockProvider {
    /// Generator (`true`) or transition matrix (`false`).
    fn continuous(&self) -> bool;
    /// Number of phases at level `k`.
    fn level_size(&self, k: usize) -> usize;
    /// Nonzero blocks `(j, block)` leaving level `i`.
    fn row_blocks(&self, i: usize) -> Vec<(usize, Mat)>;
}

impl BlockProvider for QbdModel {
    fn continuous(&self) -> bool {
        true
    }
    fn level_size(&self, k: usize) -> usize {
        if k == 0 {
            self.m0()
        } else {
            self.m()
        }
    }
    fn row_blocks(&self, i: usize) -> Vec<(usize, Mat)> {
        match i {
            0 => vec![(0, self.b1().clone()), (1, self.b0().clone())],
            1 => vec![
                (0, self.b2().clone()),
                (1, self.a1().clone()),
                (2, self.a0().clone()),
            ],
            _ => vec![
                (i - 1, self.a2().clone()),
                (i, self.a1().clone()),
                (i + 1, self.a0().clone()),
            ],
        }
    }
}

impl BlockProvider for LdQbdModel {
    fn continuous(&self) -> bool {
        true
    }
    fn level_size(&self, k: usize) -> usize {
        if k == 0 {
            self.m0()
        } else {
            self.m()
        }
    }
    fn row_blocks(&self, i: usize) -> Vec<(usize, Mat)> {
        let b = self.block_at(i);
        let mut out = Vec::with_capacity(3);
        if i > 0 {
            out.push((i - 1, b.a2));
        }
        out.push((i, b.a1));
        out.push((i + 1, b.a0));
        out
    }
}

impl BlockProvider for SkipFreeModel {
    fn continuous(&self) -> bool {
        false
    }
    fn level_size(&self, k: usize) -> usize {
        if k == 0 {
            self.m0()
        } else {
            self.m()
        }
    }
    fn row_blocks(&self, i: usize) -> Vec<(usize, Mat)> {
        let (a, b) = (self.a_blocks(), self.b_blocks());
        let mut out = Vec::new();
        match (self.kind(), i) {
            (SkipFreeKind::Gim1, 0) => {
                out.push((0, b[1].clone()));
                out.push((1, b[0].clone()));
            }
            (SkipFreeKind::Gim1, _) => {
                if let Some(bi) = b.get(i + 1) {
                    out.push((0, bi.clone()));
                }
                for (j, aj) in a.iter().enumerate().take(i + 1) {
                    out.push((i + 1 - j, aj.clone()));
                }
            }
            (SkipFreeKind::Mg1, 0) => {
                for (j, bj) in b.iter().enumerate().skip(1) {
                    out.push((j - 1, bj.clone()));
                }
            }
            (SkipFreeKind::Mg1, _) => {
                if i == 1 {
                    out.push((0, b[0].clone()));
                } else {
                    out.push((i - 1, a[0].clone()));
                }
                for (j, aj) in a.iter().enumerate().skip(1) {
                    out.push((i - 1 + j, aj.clone()));
                }
            }
        }
        out
    }
}

/// The finite chain on levels `0..=L`.
#[derive(Debug, Clone)]
pub struct TruncatedChain {
    /// Generator (continuous) or transition matrix (discrete).
    pub matrix: Mat,
    pub continuous: bool,
    pub levels: usize,
    pub augmentation: &'static str,
    offsets: Vec<usize>,
}

impl TruncatedChain {
    pub fn offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    /// Largest deviation of a row sum from 0 (continuous) or 1 (discrete).
    pub fn row_sum_defect(&self) -> f64 {
        let target = if self.continuous { 0.0 } else { 1.0 };
        self.matrix
            .row_sums()
            .iter()
            .map(|s| (s - target).abs())
            .fold(0.0, f64::max)
    }
}

pub fn truncate(model: &dyn BlockProvider, levels: usize) -> Result<TruncatedChain> {
    if levels < 10 {
        return Err(Error::InvalidModel(format!(
            "truncation level must be at least 10, got {levels}"
        )));
    }
    let mut offsets = Vec::with_capacity(levels + 2);
    let mut n = 0;
    for k in 0..=levels {
        offsets.push(n);
        n += model.level_size(k);
        if n > MAX_UNKNOWNS {
            return Err(Error::SizeLimit {
                size: n,
                limit: MAX_UNKNOWNS,
            });
        }
    }
    offsets.push(n);
    let continuous = model.continuous();
    let mut q = Mat::zeros(n, n);
    for i in 0..=levels {
        let ri = offsets[i];
        for (j, blk) in model.row_blocks(i) {
            if j <= levels {
                q.add_block(ri, offsets[j], &blk);
            } else if continuous {
                for (r, s) in blk.row_sums().into_iter().enumerate() {
                    q[(ri + r, ri + r)] += s;
                }
            } else {
                q.add_block(ri, offsets[levels], &blk);
            }
        }
    }
    let augmentation = if continuous {
        "rates leaving level L folded into the diagonal"
    } else {
        "probability leaving level L redirected to level L, same phase"
    };
    Ok(TruncatedChain {
        matrix: q,
        continuous,
        levels,
        augmentation,
        offsets,
    })
}

/// Reference solution on the truncated chain.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// `x_0..x_L`.
    pub x: Vec<Vec<f64>>,
    /// `π_1..π_L` by compensated partial sums.
    pub tails: TailSeries,
    /// `‖x_L‖₁`, the mass sitting at the cut.
    pub boundary_mass: f64,
    /// Tail change made by the last refinement step plus `n·ε·max|x|` for
    /// `n` unknowns, the absolute noise that partial sums over deep levels
    /// can accumulate.
    pub rounding_floor: f64,
    /// `boundary_mass + rounding_floor`.
    pub error_estimate: f64,
}

pub fn truncate_and_solve(model: &dyn BlockProvider, levels: usize) -> Result<OracleSolution> {
    let chain = truncate(model, levels)?;
    let mut sys = chain.matrix.clone();
    if !chain.continuous {
        for i in 0..sys.rows() {
            sys[(i, i)] -= 1.0;
        }
    }
    // normalization replaces the last balance column
    let n = sys.rows();
    for i in 0..n {
        sys[(i, n - 1)] = 1.0;
    }
    let mut rhs = Mat::zeros(1, n);
    rhs[(0, n - 1)] = 1.0;
    let ctx = |e: Error| e.in_context("oracle: truncated chain");
    let cols = sys.transpose();
    let mut z = solve_right(&rhs, &sys).map_err(ctx)?.into_row_vec();
    let mut last_delta = vec![0.0; n];
    for _ in 0..REFINE_STEPS {
        let r: Vec<f64> = (0..n)
            .map(|j| rhs[(0, j)] - compensated_dot(&z, cols.row(j)))
            .collect();
        let delta = solve_right(&Mat::row_vector(&r), &sys)
            .map_err(ctx)?
            .into_row_vec();
        for (zi, di) in z.iter_mut().zip(&delta) {
            *zi += di;
        }
        let scale = z.iter().fold(0.0, |r: f64, v| r.max(v.abs()));
        let small = delta.iter().all(|d| d.abs() <= 1e-3 * f64::EPSILON * scale);
        last_delta = delta;
        if small {
            break;
        }
    }
    let x: Vec<Vec<f64>> = (0..=levels)
        .map(|k| z[chain.offset(k)..chain.offset(k + 1)].to_vec())
        .collect();

    let m = model.level_size(levels);
    let mut pis = vec![vec![0.0; m]; levels];
    let mut acc = vec![(0.0, 0.0); m];
    let mut dacc = vec![0.0; m];
    let mut rounding_floor: f64 = 0.0;
    for k in (1..=levels).rev() {
        let span = chain.offset(k)..chain.offset(k + 1);
        for (a, v) in acc.iter_mut().zip(&z[span.clone()]) {
            *a = two_sum_acc(*a, *v);
        }
        for (a, v) in dacc.iter_mut().zip(&last_delta[span]) {
            *a += v;
        }
        pis[k - 1] = acc.iter().map(|(s, c)| s + c).collect();
        rounding_floor = dacc.iter().fold(rounding_floor, |r, v| r.max(v.abs()));
    }
    let zmax = z.iter().fold(0.0, |r: f64, v| r.max(v.abs()));
    rounding_floor += n as f64 * f64::EPSILON * zmax;
    let boundary_mass: f64 = x[levels].iter().map(|v| v.abs()).sum();
    let error_estimate = boundary_mass + rounding_floor;
    let mut tails = TailSeries::new(pis, x[0].clone(), Method::Oracle);
    tails.report.push("oracle.levels", levels as f64);
    tails.report.push("oracle.boundary_mass", boundary_mass);
    tails.report.push("oracle.rounding_floor", rounding_floor);
    tails.report.push("oracle.error_estimate", error_estimate);
    Ok(OracleSolution {
        x,
        tails,
        boundary_mass,
        rounding_floor,
        error_estimate,
    })
}
