//! Level-dependent continuous-time QBD processes.
//!
//! Level `k` carries blocks `A0^(k)` (up), `A1^(k)` (local) and `A2^(k)`
//! (down); level 0 has `m0` phases and every other level `m`. Blocks at
//! levels beyond the horizon `H` are frozen at their level-`H` values.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matkernel::{inverse, left_null_normalized, solve_right, Mat};
use crate::qbd::{check_generator_rows, check_stable, solve_r, FixedPointOptions, QbdModel};
use crate::tails::{Method, TailSeries};

/// Blocks of one level. At level 0 `a2` has zero columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelBlocks {
    pub a0: Mat,
    pub a1: Mat,
    pub a2: Mat,
}

type Rule = Arc<dyn Fn(usize) -> LevelBlocks + Send + Sync>;

#[derive(Clone)]
enum Provider {
    Table(Vec<LevelBlocks>),
    Rule(Rule),
}

/// Level-dependent QBD generator backed by a table or a rule.
#[derive(Clone)]
pub struct LdQbdModel {
    provider: Provider,
    m0: usize,
    m: usize,
    horizon: usize,
}

impl fmt::Debug for LdQbdModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.provider {
            Provider::Table(ref t) => format!("table({} levels)", t.len()),
            Provider::Rule(_) => "rule".to_string(),
        };
        f.debug_struct("LdQbdModel")
            .field("provider", &kind)
            .field("m0", &self.m0)
            .field("m", &self.m)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl LdQbdModel {
    /// Table of levels `0..=T`; levels past `T` repeat the last entry.
    pub fn from_table(levels: Vec<LevelBlocks>, horizon: usize) -> Result<Self> {
        if levels.len() < 3 {
            return Err(Error::InvalidModel(
                "level table needs at least levels 0, 1 and 2".into(),
            ));
        }
        let m0 = levels[0].a1.rows();
        let m = levels[1].a1.rows();
        Self::validated(Provider::Table(levels), m0, m, horizon)
    }

    /// Blocks produced by `rule(k)` for `k ≤ horizon`.
    pub fn from_rule(
        m0: usize,
        m: usize,
        horizon: usize,
        rule: impl Fn(usize) -> LevelBlocks + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::validated(Provider::Rule(Arc::new(rule)), m0, m, horizon)
    }

    /// The level-independent chain seen through the level-dependent interface.
    pub fn from_qbd(q: &QbdModel, horizon: usize) -> Result<Self> {
        let level0 = LevelBlocks {
            a0: q.b0().clone(),
            a1: q.b1().clone(),
            a2: Mat::zeros(q.m0(), 0),
        };
        let level1 = LevelBlocks {
            a0: q.a0().clone(),
            a1: q.a1().clone(),
            a2: q.b2().clone(),
        };
        let level2 = LevelBlocks {
            a0: q.a0().clone(),
            a1: q.a1().clone(),
            a2: q.a2().clone(),
        };
        Self::from_table(vec![level0, level1, level2], horizon)
    }

    fn validated(provider: Provider, m0: usize, m: usize, horizon: usize) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::InvalidModel(format!(
                "horizon must be at least 2, got {horizon}"
            )));
        }
        let model = LdQbdModel {
            provider,
            m0,
            m,
            horizon,
        };
        for k in 0..=horizon {
            let b = model.block_at(k);
            let (rows, up, down) = match k {
                0 => (m0, m, 0),
                1 => (m, m, m0),
                _ => (m, m, m),
            };
            let shape_ok = b.a1.rows() == rows
                && b.a1.cols() == rows
                && b.a0.rows() == rows
                && b.a0.cols() == up
                && b.a2.rows() == rows
                && b.a2.cols() == down;
            if !shape_ok {
                return Err(Error::InvalidModel(format!(
                    "level {k}: block shapes do not match m0={m0}, m={m}"
                )));
            }
            check_generator_rows(&[&b.a2, &b.a1, &b.a0], 1, &format!("level {k}"))?;
        }
        Ok(model)
    }

    /// Blocks of level `k`, frozen at the horizon.
    pub fn block_at(&self, k: usize) -> LevelBlocks {
        let k = k.min(self.horizon);
        match &self.provider {
            Provider::Table(t) => t[k.min(t.len() - 1)].clone(),
            Provider::Rule(f) => f(k),
        }
    }

    pub fn m0(&self) -> usize {
        self.m0
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Same blocks with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        Self::validated(self.provider.clone(), self.m0, self.m, horizon)
    }
}

/// Rate matrices `R_0..R_H`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSequence {
    pub r_seq: Vec<Mat>,
    /// `‖A0^(l) + R_l A1^(l+1) + R_l R_{l+1} A2^(l+2)‖∞` per level.
    pub residuals: Vec<f64>,
    pub backward_sweeps: usize,
}

impl RateSequence {
    /// `R_l`, frozen at `R_H` past the horizon.
    pub fn r(&self, l: usize) -> &Mat {
        &self.r_seq[l.min(self.r_seq.len() - 1)]
    }
}

/// Solve `A0^(l) + R_l A1^(l+1) + R_l R_{l+1} A2^(l+2) = 0` for `l ≥ 0`.
///
/// `R_H` is the minimal solution of the frozen level-independent equation;
/// the remaining levels follow from backward sweeps
/// `R_l = −A0^(l) [A1^(l+1) + R_{l+1} A2^(l+2)]⁻¹`, repeated until the largest
/// per-level change is below `tol`.
pub fn solve_rate_sequence(
    model: &LdQbdModel,
    tol: f64,
    max_sweeps: usize,
) -> Result<RateSequence> {
    let h = model.horizon();
    let top = model.block_at(h);
    let rh = solve_r(
        &top.a0,
        &top.a1,
        &top.a2,
        FixedPointOptions {
            tol,
            ..Default::default()
        },
    )?
    .matrix;

    let mut r_seq: Vec<Mat> = (0..h)
        .map(|l| Mat::zeros(if l == 0 { model.m0() } else { model.m() }, model.m()))
        .collect();
    r_seq.push(rh);

    let mut sweeps = 0;
    loop {
        if sweeps >= max_sweeps {
            return Err(Error::NoConvergence {
                iterations: sweeps,
                last_change: f64::INFINITY,
            });
        }
        sweeps += 1;
        let mut change: f64 = 0.0;
        for l in (0..h).rev() {
            let cur = model.block_at(l);
            let next = model.block_at(l + 1);
            let after = model.block_at(l + 2);
            let denom = &next.a1 + &(&r_seq[l + 1] * &after.a2);
            let rl = -&solve_right(&cur.a0, &denom)
                .map_err(|e| e.in_context(format!("rate sequence level {l}")))?;
            change = change.max(rl.max_abs_diff(&r_seq[l]));
            r_seq[l] = rl;
        }
        if change < tol {
            break;
        }
    }

    let residuals = (0..=h)
        .map(|l| {
            let cur = model.block_at(l);
            let next = model.block_at(l + 1);
            let after = model.block_at(l + 2);
            let rl = &r_seq[l];
            let rn = &r_seq[(l + 1).min(h)];
            (&cur.a0 + &(rl * &next.a1) + &(&(rl * rn) * &after.a2)).norm_inf()
        })
        .collect();
    Ok(RateSequence {
        r_seq,
        residuals,
        backward_sweeps: sweeps,
    })
}

/// Matrix-product route: `v U_0 = 0` with `U_0 = A1^(0) + R_0 A2^(1)`,
/// `x_k = κ v R_0⋯R_{k−1}`, `π_k = x_k (I + R_k + R_k R_{k+1} + …)`.
///
/// Past the horizon the bracket is `(I − R_H)⁻¹`, so the sums close exactly
/// for the frozen model. The report carries `κ`, `‖π_H‖∞` and the largest
/// rate residual.
pub fn stationary_product(
    model: &LdQbdModel,
    rates: &RateSequence,
    levels: usize,
) -> Result<TailSeries> {
    let h = model.horizon();
    let m = model.m();
    let rh = rates.r(h);
    check_stable(rh)?;

    let b0 = model.block_at(0);
    let b1 = model.block_at(1);
    let u0 = &b0.a1 + &(rates.r(0) * &b1.a2);
    let v = left_null_normalized(&u0, &vec![1.0; model.m0()])
        .map_err(|e| e.in_context("censored level 0"))?;

    // N_k = I + R_k N_{k+1} for 1 ≤ k < H, N_k = (I − R_H)⁻¹ for k ≥ H
    let closure = inverse(&(&Mat::identity(m) - rh)).map_err(|e| e.in_context("I - R_H"))?;
    let last = levels.max(1).max(h);
    let mut ns = vec![Mat::zeros(0, 0); last + 1];
    for k in (1..=last).rev() {
        ns[k] = if k >= h {
            closure.clone()
        } else {
            &Mat::identity(m) + &(rates.r(k) * &ns[k + 1])
        };
    }

    let vrow = Mat::row_vector(&v);
    let mut xk = &vrow * rates.r(0);
    let mass_above = (&xk * &ns[1]).sum();
    let kappa = 1.0 / (1.0 + mass_above);
    xk = xk.scale(kappa);
    let x0: Vec<f64> = v.iter().map(|a| a * kappa).collect();

    let mut pis = Vec::with_capacity(levels);
    let mut at_horizon = f64::NAN;
    for k in 1..=last {
        let pi = &xk * &ns[k];
        if k == h {
            at_horizon = pi.max_abs();
        }
        if k <= levels {
            pis.push(pi.into_row_vec());
        }
        xk = &xk * rates.r(k);
    }
    let mut out = TailSeries::new(pis, x0, Method::MatrixProduct);
    out.report.push("product.kappa", kappa);
    out.report.push("product.horizon_tail", at_horizon);
    out.report.push(
        "product.max_rate_residual",
        rates.residuals.iter().cloned().fold(0.0, f64::max),
    );
    Ok(out)
}

/// LU-type measures of the generator restricted to levels `≥ 1`:
/// `Ψ_0 = A1^(1)`, `Ψ_k = A1^(k+1) + A2^(k+1)(−Ψ_{k−1}⁻¹)A0^(k)`,
/// `R_k = A2^(k+1)(−Ψ_{k−1}⁻¹)`, `G_{k−1} = (−Ψ_{k−1}⁻¹)A0^(k)`.
#[derive(Debug, Clone)]
pub struct LdMeasures {
    pub psis: Vec<Mat>,
    /// `R_1..R_{D−1}`; `rs[k − 1]` is `R_k`.
    pub rs: Vec<Mat>,
    /// `G_0..G_{D−2}`.
    pub gs: Vec<Mat>,
    neg_inv: Vec<Mat>,
}

impl LdMeasures {
    /// Number of levels covered (`D`).
    pub fn depth(&self) -> usize {
        self.psis.len()
    }

    /// `−Ψ_k⁻¹`.
    pub fn neg_psi_inv(&self, k: usize) -> &Mat {
        &self.neg_inv[k]
    }

    pub fn sign_pattern_holds(&self, tol: f64) -> bool {
        self.neg_inv.iter().all(|n| n.is_nonnegative(tol))
            && self.rs.iter().all(|r| r.is_nonnegative(tol))
            && self.gs.iter().all(|g| g.is_nonnegative(tol))
    }
}

/// Forward recursion for `Ψ_0..Ψ_{depth−1}` and the matching `R`/`G` blocks.
pub fn lu_measures(model: &LdQbdModel, depth: usize) -> Result<LdMeasures> {
    assert!(depth >= 1, "depth must cover at least one level");
    let mut psis = Vec::with_capacity(depth);
    let mut neg_inv: Vec<Mat> = Vec::with_capacity(depth);
    let mut rs = Vec::with_capacity(depth);
    let mut gs = Vec::with_capacity(depth);
    let mut lower = model.block_at(1);
    for k in 0..depth {
        let upper = model.block_at(k + 1);
        let psi = if k == 0 {
            upper.a1.clone()
        } else {
            &upper.a1 + &(&(&upper.a2 * &neg_inv[k - 1]) * &lower.a0)
        };
        if k >= 1 {
            rs.push(&upper.a2 * &neg_inv[k - 1]);
            gs.push(&neg_inv[k - 1] * &lower.a0);
        }
        let inv = inverse(&-&psi).map_err(|e| e.in_context(format!("Psi_{k}")))?;
        psis.push(psi);
        neg_inv.push(inv);
        lower = upper;
    }
    // R_k and G_{k−1} for k = 1..D−1 are filled above
    Ok(LdMeasures {
        psis,
        rs,
        gs,
        neg_inv,
    })
}

/// Neumann-series controls for [`tails_lu_ld`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesOptions {
    pub series_tol: f64,
    pub series_cap: usize,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions {
            series_tol: 1e-12,
            series_cap: 500,
        }
    }
}

/// `y (−Q̂⁻¹)` over the measures' window, through the factorization
/// `Q̂ = (I − R_L) diag(Ψ) (I − G_U)`.
fn apply_neg_inverse(meas: &LdMeasures, y: &[Mat]) -> Vec<Mat> {
    let d = meas.depth();
    let mut z: Vec<Mat> = Vec::with_capacity(d);
    for j in 0..d {
        let zj = if j == 0 {
            y[0].clone()
        } else {
            &y[j] + &(&z[j - 1] * &meas.gs[j - 1])
        };
        z.push(zj);
    }
    let mut w: Vec<Mat> = z
        .iter()
        .enumerate()
        .map(|(j, zj)| zj * &meas.neg_inv[j])
        .collect();
    for j in (0..d - 1).rev() {
        let carry = &w[j + 1] * &meas.rs[j];
        w[j] += &carry;
    }
    w
}

/// `y Q̂` over the window, with `Q̂` block tridiagonal on levels `1..=D`.
fn apply_generator(model: &LdQbdModel, y: &[Mat]) -> Vec<Mat> {
    let d = y.len();
    let mut out: Vec<Mat> = Vec::with_capacity(d);
    for j in 0..d {
        let level = j + 1;
        let here = model.block_at(level);
        let mut acc = &y[j] * &here.a1;
        if j >= 1 {
            acc += &(&y[j - 1] * &model.block_at(level - 1).a0);
        }
        if j + 1 < d {
            acc += &(&y[j + 1] * &model.block_at(level + 1).a2);
        }
        out.push(acc);
    }
    out
}

/// LU-type route for the tails:
/// `π = (x0 A0^(0), 0, …)(−Q̂⁻¹) Σ_n (ℚ Q̂⁻¹)^n`, where `y ℚ` is `y` shifted
/// down one level and multiplied by `Q̂`, so each Neumann term is the
/// previous one advanced by a level.
///
/// `Q̂⁻¹` is applied over the `depth()` levels of `measures`; the report
/// carries the mass left at the window edge and the number of series terms.
pub fn tails_lu_ld(
    model: &LdQbdModel,
    measures: &LdMeasures,
    x0: &[f64],
    levels: usize,
    opts: SeriesOptions,
) -> Result<TailSeries> {
    let d = measures.depth();
    let m = model.m();
    if d < levels + 1 {
        return Err(Error::TruncationFailure {
            terms: d,
            bound: f64::INFINITY,
        });
    }
    let mut b = vec![Mat::zeros(1, m); d];
    b[0] = &Mat::row_vector(x0) * &model.block_at(0).a0;
    let x = apply_neg_inverse(measures, &b);
    let edge = x[d - 1].max_abs();
    if edge > opts.series_tol {
        return Err(Error::TruncationFailure {
            terms: d,
            bound: edge,
        });
    }

    let mut total = x.clone();
    let mut term = x;
    let mut terms = 0;
    loop {
        let norm = term[..levels.min(d)]
            .iter()
            .map(|t| t.norm_inf())
            .fold(0.0, f64::max);
        if norm < opts.series_tol {
            break;
        }
        if terms >= opts.series_cap {
            return Err(Error::TruncationFailure { terms, bound: norm });
        }
        terms += 1;
        let mut shifted: Vec<Mat> = term[1..].to_vec();
        shifted.push(Mat::zeros(1, m));
        term = apply_neg_inverse(
            measures,
            &apply_generator(model, &shifted)
                .iter()
                .map(|t| -t)
                .collect::<Vec<_>>(),
        );
        for (acc, t) in total.iter_mut().zip(&term) {
            *acc += t;
        }
    }

    let pis = total
        .into_iter()
        .take(levels)
        .map(Mat::into_row_vec)
        .collect();
    let mut out = TailSeries::new(pis, x0.to_vec(), Method::LuRg);
    out.report.push("lu_ld.window", d as f64);
    out.report.push("lu_ld.edge_mass", edge);
    out.report.push("lu_ld.series_terms", terms as f64);
    Ok(out)
}

/// Default window for [`lu_measures`] when `K` tails are wanted.
pub fn default_lu_depth(model: &LdQbdModel, levels: usize) -> usize {
    model.horizon().max(levels) + 300
}

/// Largest window tried by [`tails_lu_ld_auto`].
pub const MAX_LU_DEPTH: usize = 20_000;

/// [`tails_lu_ld`] from the default window, doubling the window (and the
/// series cap with it) on `TruncationFailure` up to [`MAX_LU_DEPTH`].
pub fn tails_lu_ld_auto(
    model: &LdQbdModel,
    x0: &[f64],
    levels: usize,
    opts: SeriesOptions,
) -> Result<TailSeries> {
    let mut depth = default_lu_depth(model, levels);
    loop {
        let meas = lu_measures(model, depth)?;
        let run = SeriesOptions {
            series_cap: opts.series_cap.max(depth),
            ..opts
        };
        match tails_lu_ld(model, &meas, x0, levels, run) {
            Err(Error::TruncationFailure { .. }) if depth < MAX_LU_DEPTH => {
                depth = (2 * depth).min(MAX_LU_DEPTH)
            }
            other => return other,
        }
    }
}

/// Both routes with default controls.
pub fn solve_all(model: &LdQbdModel, levels: usize) -> Result<(TailSeries, TailSeries)> {
    let rates = solve_rate_sequence(model, 1e-12, 10_000)?;
    let product = stationary_product(model, &rates, levels)?;
    let lu = tails_lu_ld_auto(model, &product.x0, levels, SeriesOptions::default())?;
    Ok((product, lu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qbd::{tails_lu, LuOptions};

    /// Scalar birth-death chain with birth rate λ_n at level n and unit death rate.
    fn scalar_bd(
        lambda: impl Fn(usize) -> f64 + Send + Sync + 'static,
        horizon: usize,
    ) -> LdQbdModel {
        LdQbdModel::from_rule(1, 1, horizon, move |k| {
            let l = lambda(k);
            let mu = if k == 0 { 0.0 } else { 1.0 };
            LevelBlocks {
                a0: Mat::scalar(l),
                a1: Mat::scalar(-(l + mu)),
                a2: if k == 0 {
                    Mat::zeros(1, 0)
                } else {
                    Mat::scalar(mu)
                },
            }
        })
        .unwrap()
    }

    #[test]
    fn level_independent_reduction() {
        let q = QbdModel::mm1(1.0, 2.0).unwrap();
        let ld = LdQbdModel::from_qbd(&q, 10).unwrap();
        let rates = solve_rate_sequence(&ld, 1e-12, 100).unwrap();
        for l in 1..=10 {
            assert!((rates.r(l)[(0, 0)] - 0.5).abs() < 1e-10, "R_{l}");
        }
        let p = stationary_product(&ld, &rates, 5).unwrap();
        let lu = tails_lu(&q, &[0.5], 5, LuOptions::default()).unwrap();
        assert!(p.max_abs_diff(&lu, 5) < 1e-9);
        assert!((p.x0[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_upward_rates() {
        let ld = scalar_bd(|_| 0.0, 5);
        let rates = solve_rate_sequence(&ld, 1e-12, 100).unwrap();
        assert!(rates.r_seq.iter().all(Mat::is_zero));
    }

    #[test]
    fn poisson_tails() {
        // λ_n = 1/(n+1): x_j = e⁻¹/j!
        let ld = scalar_bd(|n| 1.0 / (n as f64 + 1.0), 60);
        let (p, lu) = solve_all(&ld, 8).unwrap();
        let mut fact = 1.0;
        let mut tails = vec![0.0; 40];
        for j in 1..40 {
            fact *= j as f64;
            tails[j] = 1.0 / fact;
        }
        for k in 1..=8 {
            let want: f64 = tails[k..].iter().sum::<f64>() / std::f64::consts::E;
            assert!((p.pi(k)[0] - want).abs() < 1e-12, "product k={k}");
            assert!((lu.pi(k)[0] - want).abs() < 1e-12, "lu k={k}");
        }
    }

    #[test]
    fn scalar_measures() {
        // M/M/1 with λ = 1, μ = 2: Ψ_0 = −3, Ψ_k = −3 + 2/(−Ψ_{k−1})
        let q = QbdModel::mm1(1.0, 2.0).unwrap();
        let ld = LdQbdModel::from_qbd(&q, 5).unwrap();
        let meas = lu_measures(&ld, 30).unwrap();
        let mut psi = -3.0;
        let mut last_g = 0.0;
        for k in 0..30 {
            assert!((meas.psis[k][(0, 0)] - psi).abs() < 1e-12);
            if k >= 1 {
                let g = meas.gs[k - 1][(0, 0)];
                assert!(g > 0.0 && g < 1.0 && g >= last_g);
                last_g = g;
            }
            psi = -3.0 + 2.0 / -psi;
        }
        assert!(meas.sign_pattern_holds(0.0));
    }

    #[test]
    fn zero_blocks_in_measures() {
        let ld = scalar_bd(|_| 0.0, 5);
        let meas = lu_measures(&ld, 6).unwrap();
        assert!(meas.gs.iter().all(Mat::is_zero));

        let up_only = LdQbdModel::from_rule(1, 1, 4, |k| LevelBlocks {
            a0: Mat::scalar(1.0),
            a1: Mat::scalar(-1.0),
            a2: if k == 0 {
                Mat::zeros(1, 0)
            } else {
                Mat::scalar(0.0)
            },
        })
        .unwrap();
        let meas = lu_measures(&up_only, 6).unwrap();
        assert!(meas.rs.iter().all(Mat::is_zero));
        assert!(meas.psis.iter().all(|p| p[(0, 0)] == -1.0));
    }

    #[test]
    fn window_too_short_is_reported() {
        let q = QbdModel::mm1(1.0, 2.0).unwrap();
        let ld = LdQbdModel::from_qbd(&q, 5).unwrap();
        let meas = lu_measures(&ld, 10).unwrap();
        let r = tails_lu_ld(&ld, &meas, &[0.5], 5, SeriesOptions::default());
        assert!(matches!(r, Err(Error::TruncationFailure { .. })));
    }

    #[test]
    fn level_independent_lu_matches() {
        let q = QbdModel::mm1(1.0, 3.0).unwrap();
        let ld = LdQbdModel::from_qbd(&q, 4).unwrap();
        let (_, lu) = solve_all(&ld, 6).unwrap();
        let direct = tails_lu(&q, &[2.0 / 3.0], 6, LuOptions::default()).unwrap();
        assert!(lu.max_abs_diff(&direct, 6) < 1e-8);
    }
}
