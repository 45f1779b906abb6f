//! Discrete-time chains of GI/M/1 type and of M/G/1 type.
//!
//! Blocks are stored by their index: `b[k]` is `B_k` and `a[k]` is `A_k`;
//! blocks past the stored depth are zero.
//!
//! GI/M/1 layout: level 0 goes to 0 by `B1` and to 1 by `B0`; level `i ≥ 1`
//! goes to 0 by `B_{i+1}` and to `i + 1 − j` by `A_j`.
//!
//! M/G/1 layout: level 0 goes to 0 by `B1` and to `j ≥ 1` by `B_{j+1}`;
//! level 1 goes to 0 by `B0`; level `i ≥ 1` goes to `i − 1 + j` by `A_j`.

use crate::error::{Error, Result};
use crate::matkernel::{inverse, left_null_normalized, solve_right, Mat};
use crate::qbd::{check_stable, monotone_fixed_point, FixedPointOptions, RateSolveResult};
use crate::tails::{Method, TailSeries};

/// Row-sum tolerance for stochastic validation, scaled by the row magnitude.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Drift band treated as critical.
pub const NEAR_CRITICAL_BAND: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipFreeKind {
    Gim1,
    Mg1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipFreeModel {
    kind: SkipFreeKind,
    b: Vec<Mat>,
    a: Vec<Mat>,
    m0: usize,
    m: usize,
}

fn check_stochastic_row(blocks: &[&Mat], what: &str) -> Result<()> {
    let rows = blocks[0].rows();
    for i in 0..rows {
        let mut sum = 0.0;
        let mut scale: f64 = 1.0;
        for b in blocks {
            for &v in b.row(i) {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "{what}: entry {v} in row {i} is not a probability"
                    )));
                }
                sum += v;
                scale = scale.max(v);
            }
        }
        if (sum - 1.0).abs() > STOCHASTIC_TOL * scale {
            return Err(Error::InvalidModel(format!(
                "{what}: row {i} sums to {sum}, expected 1"
            )));
        }
    }
    Ok(())
}

impl SkipFreeModel {
    /// GI/M/1-type chain with `b = [B0, B1, B2, …]`, `a = [A0, A1, …]`.
    pub fn gim1(b: Vec<Mat>, a: Vec<Mat>) -> Result<Self> {
        Self::new(SkipFreeKind::Gim1, b, a)
    }

    /// M/G/1-type chain with `b = [B0, B1, B2, …]`, `a = [A0, A1, …]`.
    pub fn mg1(b: Vec<Mat>, a: Vec<Mat>) -> Result<Self> {
        Self::new(SkipFreeKind::Mg1, b, a)
    }

    pub fn new(kind: SkipFreeKind, b: Vec<Mat>, a: Vec<Mat>) -> Result<Self> {
        if b.len() < 2 || a.len() < 2 {
            return Err(Error::InvalidModel(
                "need at least B0, B1 and A0, A1".into(),
            ));
        }
        let m0 = b[1].rows();
        let m = a[0].rows();
        let shape = |name: String, x: &Mat, r: usize, c: usize| {
            if x.rows() != r || x.cols() != c {
                Err(Error::InvalidModel(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    x.rows(),
                    x.cols()
                )))
            } else {
                Ok(())
            }
        };
        for (k, x) in a.iter().enumerate() {
            shape(format!("A{k}"), x, m, m)?;
        }
        shape("B1".into(), &b[1], m0, m0)?;
        match kind {
            SkipFreeKind::Gim1 => {
                shape("B0".into(), &b[0], m0, m)?;
                for (k, x) in b.iter().enumerate().skip(2) {
                    shape(format!("B{k}"), x, m, m0)?;
                }
            }
            SkipFreeKind::Mg1 => {
                shape("B0".into(), &b[0], m, m0)?;
                for (k, x) in b.iter().enumerate().skip(2) {
                    shape(format!("B{k}"), x, m0, m)?;
                }
            }
        }
        let model = SkipFreeModel { kind, b, a, m0, m };
        model.validate_rows()?;
        Ok(model)
    }

    fn validate_rows(&self) -> Result<()> {
        let (a, b) = (&self.a, &self.b);
        match self.kind {
            SkipFreeKind::Gim1 => {
                check_stochastic_row(&[&b[1], &b[0]], "level 0")?;
                for i in 1..=a.len().max(b.len()) {
                    let mut row: Vec<&Mat> = a.iter().take(i + 1).collect();
                    if let Some(bi) = b.get(i + 1) {
                        row.push(bi);
                    }
                    check_stochastic_row(&row, &format!("level {i}"))?;
                }
            }
            SkipFreeKind::Mg1 => {
                let row0: Vec<&Mat> = b.iter().skip(1).collect();
                check_stochastic_row(&row0, "level 0")?;
                let mut row1: Vec<&Mat> = vec![&b[0]];
                row1.extend(a.iter().skip(1));
                check_stochastic_row(&row1, "level 1")?;
                let rowk: Vec<&Mat> = a.iter().collect();
                check_stochastic_row(&rowk, "level k>=2")?;
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> SkipFreeKind {
        self.kind
    }
    pub fn b_blocks(&self) -> &[Mat] {
        &self.b
    }
    pub fn a_blocks(&self) -> &[Mat] {
        &self.a
    }
    pub fn m0(&self) -> usize {
        self.m0
    }
    pub fn m(&self) -> usize {
        self.m
    }

    /// `B_k`, zero past the stored depth.
    pub fn b_at(&self, k: usize) -> Mat {
        self.b
            .get(k)
            .cloned()
            .unwrap_or_else(|| match (self.kind, k) {
                (SkipFreeKind::Gim1, _) => Mat::zeros(self.m, self.m0),
                (SkipFreeKind::Mg1, _) => Mat::zeros(self.m0, self.m),
            })
    }

    /// `A_k`, zero past the stored depth.
    pub fn a_at(&self, k: usize) -> Mat {
        self.a
            .get(k)
            .cloned()
            .unwrap_or_else(|| Mat::zeros(self.m, self.m))
    }

    /// `‖xP − x‖∞` over all but the last supplied level; `levels[k]` is `x_k`.
    pub fn stationarity_residual(&self, levels: &[Vec<f64>]) -> f64 {
        let n = levels.len();
        let x: Vec<Mat> = levels.iter().map(|v| Mat::row_vector(v)).collect();
        let mut worst: f64 = 0.0;
        for j in 0..n.saturating_sub(1) {
            let mut acc = Mat::zeros(1, if j == 0 { self.m0 } else { self.m });
            match self.kind {
                SkipFreeKind::Gim1 => {
                    if j == 0 {
                        acc += &(&x[0] * &self.b[1]);
                        for (i, xi) in x.iter().enumerate().skip(1) {
                            acc += &(xi * &self.b_at(i + 1));
                        }
                    } else {
                        let from_below = if j == 1 {
                            &x[0] * &self.b[0]
                        } else {
                            &x[j - 1] * &self.a[0]
                        };
                        acc += &from_below;
                        for (i, xi) in x.iter().enumerate().skip(j) {
                            acc += &(xi * &self.a_at(i + 1 - j));
                        }
                    }
                }
                SkipFreeKind::Mg1 => {
                    if j == 0 {
                        acc += &(&x[0] * &self.b[1]);
                        acc += &(&x[1] * &self.b[0]);
                    } else {
                        acc += &(&x[0] * &self.b_at(j + 1));
                        for (i, xi) in x.iter().enumerate().take(j + 2).skip(1) {
                            acc += &(xi * &self.a_at(j + 1 - i));
                        }
                    }
                }
            }
            worst = worst.max(acc.max_abs_diff(&x[j]));
        }
        worst
    }
}

/// `Σ_{k≥start} M^{k−start} X_k` by Horner's rule.
fn left_series(m: &Mat, blocks: &[Mat], start: usize, zero: &Mat) -> Mat {
    if blocks.len() <= start {
        return zero.clone();
    }
    let mut acc = blocks[blocks.len() - 1].clone();
    for k in (start..blocks.len() - 1).rev() {
        acc = &blocks[k] + &(m * &acc);
    }
    acc
}

/// `Σ_{k≥start} X_k M^{k−start}` by Horner's rule.
fn right_series(blocks: &[Mat], m: &Mat, start: usize, zero: &Mat) -> Mat {
    if blocks.len() <= start {
        return zero.clone();
    }
    let mut acc = blocks[blocks.len() - 1].clone();
    for k in (start..blocks.len() - 1).rev() {
        acc = &blocks[k] + &(&acc * m);
    }
    acc
}

fn scale_of(blocks: &[Mat]) -> f64 {
    blocks.iter().map(Mat::norm_inf).sum::<f64>().max(1.0)
}

/// Minimal nonnegative solution of `R = Σ R^k A_k` by iteration from `R = 0`.
pub fn solve_r_series(a: &[Mat], opts: FixedPointOptions) -> Result<RateSolveResult> {
    let m = a[0].rows();
    let zero = Mat::zeros(m, m);
    monotone_fixed_point(
        m,
        m,
        opts,
        scale_of(a),
        |r| left_series(r, a, 0, &zero),
        |r| (&left_series(r, a, 0, &zero) - r).norm_inf(),
    )
}

/// Minimal nonnegative solution of `G = Σ A_k G^k` by iteration from `G = 0`.
pub fn solve_g_series(a: &[Mat], opts: FixedPointOptions) -> Result<RateSolveResult> {
    let m = a[0].rows();
    let zero = Mat::zeros(m, m);
    monotone_fixed_point(
        m,
        m,
        opts,
        scale_of(a),
        |g| right_series(a, g, 0, &zero),
        |g| (&right_series(a, g, 0, &zero) - g).norm_inf(),
    )
}

/// Censored quantities of a GI/M/1-type chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Gim1Measures {
    pub r: Mat,
    /// `B0 (I − Σ_{k≥1} R^{k−1} A_k)⁻¹`.
    pub r1: Mat,
    /// `B1 + R_1 Σ_{k≥2} R^{k−2} B_k`, stochastic.
    pub psi0: Mat,
    /// `(A0 + A1) + R Σ_{k≥2} R^{k−2} A_k`.
    pub psi_hat0: Mat,
    /// `Σ_{k≥1} R^{k−1} A_k`.
    pub psi_hat: Mat,
    pub y0: Vec<f64>,
    pub tau: f64,
}

/// `x0 = τ y0` and the censored measures. Level vectors follow as
/// `x_k = x0 R_1 R^{k−1}`.
pub fn gim1_stationary(model: &SkipFreeModel, r: &Mat) -> Result<(Vec<f64>, Gim1Measures)> {
    assert_eq!(
        model.kind,
        SkipFreeKind::Gim1,
        "GI/M/1 solver called on an M/G/1 model"
    );
    check_stable(r)?;
    if model.b[0].is_zero() {
        return Err(Error::Reducible(
            "B0 is zero: level 0 never reaches level 1".into(),
        ));
    }
    let m = model.m;
    let zero = Mat::zeros(m, m);
    let eye = Mat::identity(m);
    let psi_hat = left_series(r, &model.a, 1, &zero);
    let r1 = solve_right(&model.b[0], &(&eye - &psi_hat))
        .map_err(|e| e.in_context("GI/M/1: I - Psi_hat"))?;
    let down = left_series(r, &model.b, 2, &Mat::zeros(m, model.m0));
    let psi0 = &model.b[1] + &(&r1 * &down);
    let y0 = left_null_normalized(&(&psi0 - &Mat::identity(model.m0)), &vec![1.0; model.m0])
        .map_err(|e| e.in_context("GI/M/1: censored level 0"))?;
    let geo = inverse(&(&eye - r)).map_err(|e| e.in_context("GI/M/1: I - R"))?;
    let above = (&(&Mat::row_vector(&y0) * &r1) * &geo).sum();
    let tau = 1.0 / (1.0 + above);
    let psi_hat0 = &(&model.a[0] + &model.a[1]) + &(r * &left_series(r, &model.a, 2, &zero));
    let x0 = y0.iter().map(|v| v * tau).collect();
    Ok((
        x0,
        Gim1Measures {
            r: r.clone(),
            r1,
            psi0,
            psi_hat0,
            psi_hat,
            y0,
            tau,
        },
    ))
}

/// `x_0..x_L` from the matrix-geometric form.
pub fn gim1_levels(x0: &[f64], meas: &Gim1Measures, last: usize) -> Vec<Vec<f64>> {
    let mut out = vec![x0.to_vec()];
    let mut x = &Mat::row_vector(x0) * &meas.r1;
    for _ in 1..=last {
        out.push(x.as_slice().to_vec());
        x = &x * &meas.r;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gim1Route {
    MatrixGeometric,
    UlRg,
}

/// Tails `π_1..π_K`.
///
/// Matrix-geometric: `π_k = x0 R_1 (I − R)⁻¹ R^{k−1}`. UL-type:
/// `π_k = x0 B0 (I − Ψ̂_0)⁻¹ R^{k−1}`, with the gap between the two leading
/// vectors reported as `"ul.identity_residual"`.
pub fn gim1_tails(
    model: &SkipFreeModel,
    meas: &Gim1Measures,
    x0: &[f64],
    levels: usize,
    route: Gim1Route,
) -> Result<TailSeries> {
    let m = model.m;
    let eye = Mat::identity(m);
    let mg = solve_right(&(&Mat::row_vector(x0) * &meas.r1), &(&eye - &meas.r))
        .map_err(|e| e.in_context("GI/M/1: I - R"))?;
    let (lead, method, identity) = match route {
        Gim1Route::MatrixGeometric => (mg, Method::MatrixGeometric, None),
        Gim1Route::UlRg => {
            let ul = solve_right(
                &(&Mat::row_vector(x0) * &model.b[0]),
                &(&eye - &meas.psi_hat0),
            )
            .map_err(|e| e.in_context("GI/M/1: I - Psi_hat_0"))?;
            let gap = ul.max_abs_diff(&mg);
            (ul, Method::UlRg, Some(gap))
        }
    };
    let mut pis = Vec::with_capacity(levels);
    let mut pi = lead;
    for _ in 0..levels {
        pis.push(pi.as_slice().to_vec());
        pi = &pi * &meas.r;
    }
    let mut out = TailSeries::new(pis, x0.to_vec(), method);
    if let Some(gap) = identity {
        out.report.push("ul.identity_residual", gap);
    }
    Ok(out)
}

/// Censored quantities of an M/G/1-type chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Mg1Measures {
    pub g: Mat,
    /// Level 1 → 0 first-passage matrix, `(I − Ψ)⁻¹ B0`.
    pub g1: Mat,
    /// `B1 + Σ_{k≥2} B_k G^{k−2} G_1`, stochastic.
    pub psi0: Mat,
    /// `Σ_{k≥1} A_k G^{k−1}`.
    pub psi: Mat,
    /// `R_{0,1}, R_{0,2}, …` with `R_{0,j} = (Σ_{k≥j+1} B_k G^{k−j−1})(I − Ψ)⁻¹`.
    pub r0: Vec<Mat>,
    /// `R_1, R_2, …` with `R_j = (Σ_{k≥j+1} A_k G^{k−j−1})(I − Ψ)⁻¹`.
    pub r: Vec<Mat>,
    pub y0: Vec<f64>,
    pub tau: f64,
}

impl Mg1Measures {
    fn r0_at(&self, j: usize) -> Option<&Mat> {
        self.r0.get(j.wrapping_sub(1))
    }
    fn r_at(&self, j: usize) -> Option<&Mat> {
        self.r.get(j.wrapping_sub(1))
    }
}

/// Mean drift `a Σ_k (k − 1) A_k e` with `a` stationary for `Σ A_k`.
pub fn mg1_drift(model: &SkipFreeModel) -> Result<f64> {
    let m = model.m;
    let mut total = Mat::zeros(m, m);
    let mut moment = Mat::zeros(m, m);
    for (k, ak) in model.a.iter().enumerate() {
        total += ak;
        moment += &ak.scale(k as f64 - 1.0);
    }
    let a = left_null_normalized(&(&total - &Mat::identity(m)), &vec![1.0; m])
        .map_err(|e| e.in_context("M/G/1: stationary vector of A"))?;
    Ok((&Mat::row_vector(&a) * &moment).sum())
}

/// Level vectors `x_0..x_L` by `x_k = x0 R_{0,k} + Σ_{i=1}^{k−1} x_i R_{k−i}`,
/// normalised exactly through `Σ_{k≥1} x_k = x0 (Σ_j R_{0,j})(I − Σ_j R_j)⁻¹`.
pub fn mg1_stationary(
    model: &SkipFreeModel,
    g: &Mat,
    last: usize,
) -> Result<(Vec<Vec<f64>>, Mg1Measures)> {
    assert_eq!(
        model.kind,
        SkipFreeKind::Mg1,
        "M/G/1 solver called on a GI/M/1 model"
    );
    let drift = mg1_drift(model)?;
    if drift.abs() < NEAR_CRITICAL_BAND {
        return Err(Error::NearCritical { drift });
    }
    if drift > 0.0 {
        return Err(Error::Unstable {
            spectral_radius: crate::matkernel::spectral_radius_or_bound(g),
        });
    }
    if model.b[0].is_zero() {
        return Err(Error::Reducible(
            "B0 is zero: level 1 never returns to level 0".into(),
        ));
    }
    let (m0, m) = (model.m0, model.m);
    let zero = Mat::zeros(m, m);
    let eye = Mat::identity(m);
    let psi = right_series(&model.a, g, 1, &zero);
    let i_psi = &eye - &psi;
    let g1 = crate::matkernel::solve_linear(&i_psi, &model.b[0])
        .map_err(|e| e.in_context("M/G/1: I - Psi"))?;
    let zero_b = Mat::zeros(m0, m);
    let psi0 = &model.b[1] + &(&right_series(&model.b, g, 2, &zero_b) * &g1);
    let r0: Vec<Mat> = (1..model.b.len().saturating_sub(1))
        .map(|j| solve_right(&right_series(&model.b, g, j + 1, &zero_b), &i_psi))
        .collect::<Result<_>>()?;
    let r: Vec<Mat> = (1..model.a.len().saturating_sub(1))
        .map(|j| solve_right(&right_series(&model.a, g, j + 1, &zero), &i_psi))
        .collect::<Result<_>>()?;

    let y0 = left_null_normalized(&(&psi0 - &Mat::identity(m0)), &vec![1.0; m0])
        .map_err(|e| e.in_context("M/G/1: censored level 0"))?;
    let sum_r0 = r0.iter().fold(zero_b.clone(), |acc, x| &acc + x);
    let sum_r = r.iter().fold(zero.clone(), |acc, x| &acc + x);
    let geo = inverse(&(&eye - &sum_r)).map_err(|e| e.in_context("M/G/1: I - sum R_j"))?;
    let above = (&(&Mat::row_vector(&y0) * &sum_r0) * &geo).sum();
    let tau = 1.0 / (1.0 + above);
    let meas = Mg1Measures {
        g: g.clone(),
        g1,
        psi0,
        psi,
        r0,
        r,
        y0,
        tau,
    };

    let x0 = Mat::row_vector(&meas.y0).scale(tau);
    let mut xs: Vec<Mat> = vec![x0];
    for k in 1..=last {
        let mut xk = match meas.r0_at(k) {
            Some(r0k) => &xs[0] * r0k,
            None => Mat::zeros(1, m),
        };
        let lo = k.saturating_sub(meas.r.len()).max(1);
        for (i, xi) in xs.iter().enumerate().take(k).skip(lo) {
            if let Some(rj) = meas.r_at(k - i) {
                xk += &(xi * rj);
            }
        }
        xs.push(xk);
    }
    Ok((xs.into_iter().map(Mat::into_row_vec).collect(), meas))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mg1Route {
    Iterative,
    UlRg,
}

/// Tails `π_1..π_K` of an M/G/1-type chain.
///
/// Iterative: `π_k = x0 Σ_{j≥k} R_{0,j} + Σ_{i≥1} x_i Σ_{j≥max(k,i+1)} R_{j−i}`,
/// with the outer sum cut once `‖x_i‖∞ < tol` (cap `10·K + 100000` levels).
///
/// UL-type: the tails solve `π = π𝐏 + c` with `c_k = x0 Σ_{j≥k+1} B_j`, where
/// 𝐏 is M/G/1 type with boundary blocks `B̂_0 = A0`, `B̂_k = Σ_{j≥k} A_j`.
/// Then `π = c (I − G_L)⁻¹ (I − Ψ_D)⁻¹ (I − R_U)⁻¹`, each factor applied by
/// substitution.
pub fn mg1_tails(
    model: &SkipFreeModel,
    meas: &Mg1Measures,
    x0: &[f64],
    levels: usize,
    route: Mg1Route,
    tol: f64,
) -> Result<TailSeries> {
    match route {
        Mg1Route::Iterative => mg1_tails_iterative(model, meas, x0, levels, tol),
        Mg1Route::UlRg => mg1_tails_ul(model, meas, x0, levels),
    }
}

fn mg1_tails_iterative(
    model: &SkipFreeModel,
    meas: &Mg1Measures,
    x0: &[f64],
    levels: usize,
    tol: f64,
) -> Result<TailSeries> {
    let m = model.m;
    let zero = Mat::zeros(m, m);
    // suffix sums S0_k = Σ_{j≥k} R_{0,j}, S_k = Σ_{j≥k} R_j
    let suffix = |v: &[Mat], z: &Mat| {
        let mut s = vec![z.clone(); v.len() + 2];
        for j in (1..=v.len()).rev() {
            s[j] = &s[j + 1] + &v[j - 1];
        }
        s
    };
    let s0 = suffix(&meas.r0, &Mat::zeros(model.m0, m));
    let s = suffix(&meas.r, &zero);
    let s0_at = |k: usize| s0.get(k).unwrap_or(&s0[s0.len() - 1]);
    let s_at = |k: usize| s.get(k).unwrap_or(&s[s.len() - 1]);

    // level vectors until they fall below tol
    let cap = 10 * levels + 100_000;
    let x0m = Mat::row_vector(x0);
    let mut xs: Vec<Mat> = vec![x0m.clone()];
    let mut last_norm = f64::INFINITY;
    let mut k = 0;
    while k < levels || last_norm >= tol {
        if k >= cap {
            return Err(Error::TruncationFailure {
                terms: k,
                bound: last_norm,
            });
        }
        k += 1;
        let mut xk = match meas.r0_at(k) {
            Some(r0k) => &x0m * r0k,
            None => Mat::zeros(1, m),
        };
        let lo = k.saturating_sub(meas.r.len()).max(1);
        for i in lo..k {
            if let Some(rj) = meas.r_at(k - i) {
                xk += &(&xs[i] * rj);
            }
        }
        last_norm = xk.norm_inf();
        xs.push(xk);
    }
    let depth = k;

    let mut pis = Vec::with_capacity(levels);
    for k in 1..=levels {
        let mut pi = &x0m * s0_at(k);
        for (i, xi) in xs.iter().enumerate().skip(1) {
            let from = if i < k { k - i } else { 1 };
            pi += &(xi * s_at(from));
        }
        pis.push(pi.into_row_vec());
    }
    let mut out = TailSeries::new(pis, x0.to_vec(), Method::MatrixIterative);
    out.report.push("iterative.depth", depth as f64);
    out.report.push("iterative.last_term", last_norm);
    Ok(out)
}

fn mg1_tails_ul(
    model: &SkipFreeModel,
    meas: &Mg1Measures,
    x0: &[f64],
    levels: usize,
) -> Result<TailSeries> {
    let m = model.m;
    let zero = Mat::zeros(m, m);
    let eye = Mat::identity(m);
    let g = &meas.g;
    let na = model.a.len();
    let nb = model.b.len();

    // B̂_k = Σ_{j≥k} A_j for k ≥ 1
    let mut hat = vec![zero.clone(); na + 1];
    for k in (1..na).rev() {
        hat[k] = &hat[k + 1] + &model.a[k];
    }
    hat[0] = model.a[0].clone();
    hat.truncate(na);

    // Ψ̂_0 = B̂_1 + Σ_{k≥2} B̂_k G^{k−2} G, R̂_{0,j} = (Σ_{k≥j+1} B̂_k G^{k−j−1})(I − Ψ)⁻¹
    let psi_hat0 = &hat[1] + &(&right_series(&hat, g, 2, &zero) * g);
    let i_psi = &eye - &meas.psi;
    let r_hat0: Vec<Mat> = (1..na.saturating_sub(1))
        .map(|j| solve_right(&right_series(&hat, g, j + 1, &zero), &i_psi))
        .collect::<Result<_>>()?;

    // c_j = x0 Σ_{i≥j+1} B_i, j ≥ 1; zero for j ≥ nb − 1
    let x0m = Mat::row_vector(x0);
    let mut c = vec![Mat::zeros(1, m); nb.max(2)];
    let mut acc = Mat::zeros(model.m0, m);
    for j in (1..nb.max(2)).rev() {
        if j + 1 < nb {
            acc += &model.b[j + 1];
        }
        c[j] = &x0m * &acc;
    }
    let c_at = |j: usize| c.get(j).cloned().unwrap_or_else(|| Mat::zeros(1, m));

    // a_j = c_j + a_{j+1} G, exact once c vanishes
    let top = levels.max(c.len());
    let mut a = vec![Mat::zeros(1, m); top + 2];
    for j in (1..=top).rev() {
        a[j] = &c_at(j) + &(&a[j + 1] * g);
    }

    // b_1 = a_1 (I − Ψ̂_0)⁻¹, b_j = a_j (I − Ψ)⁻¹
    let b1 = solve_right(&a[1], &(&eye - &psi_hat0))
        .map_err(|e| e.in_context("M/G/1: I - Psi_hat_0"))?;
    let inv_psi = inverse(&i_psi).map_err(|e| e.in_context("M/G/1: I - Psi"))?;

    // π_j = b_j + π_1 R̂_{0,j−1} + Σ_{i=2}^{j−1} π_i R_{j−i}
    let mut pis: Vec<Mat> = Vec::with_capacity(levels);
    for j in 1..=levels {
        let mut pj = if j == 1 { b1.clone() } else { &a[j] * &inv_psi };
        if j >= 2 {
            if let Some(r) = r_hat0.get(j - 2) {
                pj += &(&pis[0] * r);
            }
            let lo = j.saturating_sub(meas.r.len()).max(2);
            for i in lo..j {
                if let Some(r) = meas.r_at(j - i) {
                    pj += &(&pis[i - 1] * r);
                }
            }
        }
        pis.push(pj);
    }
    Ok(TailSeries::new(
        pis.into_iter().map(Mat::into_row_vec).collect(),
        x0.to_vec(),
        Method::UlRg,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Mat {
        Mat::scalar(v)
    }

    fn scalar_gim1() -> SkipFreeModel {
        SkipFreeModel::gim1(
            vec![s(0.3), s(0.7), s(0.4), s(0.0)],
            vec![s(0.3), s(0.3), s(0.4)],
        )
        .unwrap()
    }

    /// M/M/1 with λ = 1, μ = 2 uniformized at rate 4.
    fn uniform_mm1_gim1() -> SkipFreeModel {
        SkipFreeModel::gim1(
            vec![s(0.25), s(0.75), s(0.5)],
            vec![s(0.25), s(0.25), s(0.5)],
        )
        .unwrap()
    }

    fn uniform_mm1_mg1() -> SkipFreeModel {
        SkipFreeModel::mg1(
            vec![s(0.5), s(0.75), s(0.25)],
            vec![s(0.5), s(0.25), s(0.25)],
        )
        .unwrap()
    }

    #[test]
    fn r_series_scalar() {
        let m = scalar_gim1();
        let r = solve_r_series(m.a_blocks(), Default::default()).unwrap();
        assert!((r.matrix[(0, 0)] - 0.75).abs() < 1e-10);
        let r = solve_r_series(&[s(0.0), s(0.5), s(0.5)], Default::default()).unwrap();
        assert!(r.matrix.is_zero());
        let r = solve_r_series(&[s(0.2), s(0.5)], Default::default()).unwrap();
        assert!((r.matrix[(0, 0)] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn g_series_scalar() {
        let g = solve_g_series(&[s(0.6), s(0.2), s(0.2)], Default::default()).unwrap();
        assert!((g.matrix[(0, 0)] - 1.0).abs() < 1e-9);
        let g = solve_g_series(&[s(1.0)], Default::default()).unwrap();
        assert_eq!(g.matrix[(0, 0)], 1.0);
        let g = solve_g_series(&[s(0.2), s(0.2), s(0.6)], Default::default()).unwrap();
        assert!((g.matrix[(0, 0)] - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn gim1_uniformized_mm1() {
        let m = uniform_mm1_gim1();
        let r = solve_r_series(m.a_blocks(), Default::default())
            .unwrap()
            .matrix;
        let (x0, meas) = gim1_stationary(&m, &r).unwrap();
        assert!((x0[0] - 0.5).abs() < 1e-10);
        for route in [Gim1Route::MatrixGeometric, Gim1Route::UlRg] {
            let t = gim1_tails(&m, &meas, &x0, 5, route).unwrap();
            for k in 1..=5 {
                assert!(
                    (t.pi(k)[0] - 0.5f64.powi(k as i32)).abs() < 1e-10,
                    "{route:?} k={k}"
                );
            }
        }
        let xs = gim1_levels(&x0, &meas, 60);
        assert!(m.stationarity_residual(&xs) < 1e-9);
    }

    #[test]
    fn gim1_scalar_routes_agree() {
        let m = scalar_gim1();
        let r = solve_r_series(m.a_blocks(), Default::default())
            .unwrap()
            .matrix;
        let (x0, meas) = gim1_stationary(&m, &r).unwrap();
        let mg = gim1_tails(&m, &meas, &x0, 10, Gim1Route::MatrixGeometric).unwrap();
        let ul = gim1_tails(&m, &meas, &x0, 10, Gim1Route::UlRg).unwrap();
        assert!(mg.max_abs_diff(&ul, 10) < 1e-9);
        assert!(ul.report.get("ul.identity_residual").unwrap() < 1e-9);
        assert!((mg.pi(1)[0] - (1.0 - x0[0])).abs() < 1e-12);
        assert!(m.stationarity_residual(&gim1_levels(&x0, &meas, 150)) < 1e-9);
    }

    #[test]
    fn gim1_reducible() {
        let m = SkipFreeModel::gim1(vec![s(0.0), s(1.0), s(0.5)], vec![s(0.25), s(0.25), s(0.5)])
            .unwrap();
        let r = solve_r_series(m.a_blocks(), Default::default())
            .unwrap()
            .matrix;
        assert!(matches!(gim1_stationary(&m, &r), Err(Error::Reducible(_))));
    }

    #[test]
    fn mg1_uniformized_mm1() {
        let m = uniform_mm1_mg1();
        let g = solve_g_series(m.a_blocks(), Default::default())
            .unwrap()
            .matrix;
        let (xs, meas) = mg1_stationary(&m, &g, 40).unwrap();
        for (k, x) in xs.iter().enumerate().take(10) {
            assert!((x[0] - 0.5 * 0.5f64.powi(k as i32)).abs() < 1e-10, "x_{k}");
        }
        assert!(m.stationarity_residual(&xs) < 1e-12);
        for route in [Mg1Route::Iterative, Mg1Route::UlRg] {
            let t = mg1_tails(&m, &meas, &xs[0], 6, route, 1e-12).unwrap();
            for k in 1..=6 {
                assert!(
                    (t.pi(k)[0] - 0.5f64.powi(k as i32)).abs() < 1e-10,
                    "{route:?} k={k}"
                );
            }
        }
    }

    #[test]
    fn mg1_unstable_and_critical() {
        let transient =
            SkipFreeModel::mg1(vec![s(0.2), s(0.4), s(0.6)], vec![s(0.2), s(0.2), s(0.6)]).unwrap();
        let g = solve_g_series(transient.a_blocks(), Default::default())
            .unwrap()
            .matrix;
        assert!(g[(0, 0)] < 1.0 - 1e-6);
        assert!(matches!(
            mg1_stationary(&transient, &g, 5),
            Err(Error::Unstable { .. })
        ));

        let critical =
            SkipFreeModel::mg1(vec![s(0.5), s(0.5), s(0.5)], vec![s(0.5), s(0.0), s(0.5)]).unwrap();
        assert!(matches!(
            mg1_stationary(&critical, &Mat::scalar(1.0), 5),
            Err(Error::NearCritical { .. })
        ));
    }

    #[test]
    fn mg1_scalar_routes_agree() {
        let m =
            SkipFreeModel::mg1(vec![s(0.6), s(0.8), s(0.2)], vec![s(0.6), s(0.2), s(0.2)]).unwrap();
        let g = solve_g_series(m.a_blocks(), Default::default())
            .unwrap()
            .matrix;
        let (xs, meas) = mg1_stationary(&m, &g, 200).unwrap();
        let it = mg1_tails(&m, &meas, &xs[0], 10, Mg1Route::Iterative, 1e-14).unwrap();
        let ul = mg1_tails(&m, &meas, &xs[0], 10, Mg1Route::UlRg, 1e-14).unwrap();
        assert!(it.max_abs_diff(&ul, 10) < 1e-8);
        for k in 1..=10 {
            let direct: f64 = xs[k..].iter().map(|x| x[0]).sum();
            assert!((it.pi(k)[0] - direct).abs() < 1e-9);
        }
        let total: f64 = xs.iter().map(|x| x[0]).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn non_stochastic_rejected() {
        let bad = SkipFreeModel::gim1(
            vec![s(0.3), s(0.7), s(0.4), s(0.3)],
            vec![s(0.3), s(0.3), s(0.4)],
        );
        assert!(matches!(bad, Err(Error::InvalidModel(_))));
    }
}
