//! Level-independent continuous-time QBD processes.
//!
//! The generator has boundary blocks `B1` (level 0 → 0), `B0` (0 → 1) and
//! `B2` (1 → 0) and repeating blocks `A0` (up), `A1` (local), `A2` (down).
//! Tail vectors `π_k = Σ_{j≥k} x_j` are produced by three independent routes:
//! the matrix-geometric form, the UL-type RG-factorization of the shifted
//! generator, and the LU-type RG-factorization with its truncated sums.

use crate::error::{Error, Result};
use crate::matkernel::{inverse, left_null_normalized, solve_right, spectral_radius_or_bound, Mat};
use crate::tails::{Method, TailSeries};

/// Row-sum tolerance for generator validation, scaled by the row magnitude.
pub const GENERATOR_TOL: f64 = 1e-12;

/// `sp(R)` must stay below `1 - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Validate that `blocks` (laid side by side) form generator rows.
///
/// `diag` is the index of the block holding the diagonal entries.
pub(crate) fn check_generator_rows(blocks: &[&Mat], diag: usize, what: &str) -> Result<()> {
    let rows = blocks[diag].rows();
    for (bi, b) in blocks.iter().enumerate() {
        if b.rows() != rows {
            return Err(Error::InvalidModel(format!(
                "{what}: block {bi} has {} rows, expected {rows}",
                b.rows()
            )));
        }
        if !b.is_finite() {
            return Err(Error::InvalidModel(format!(
                "{what}: block {bi} has non-finite entries"
            )));
        }
    }
    if !blocks[diag].is_square() {
        return Err(Error::InvalidModel(format!(
            "{what}: diagonal block is not square"
        )));
    }
    for i in 0..rows {
        let mut sum = 0.0;
        let mut scale: f64 = 1.0;
        for (bi, b) in blocks.iter().enumerate() {
            for (j, &v) in b.row(i).iter().enumerate() {
                let on_diag = bi == diag && i == j;
                if on_diag && v > 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "{what}: positive diagonal entry in row {i}"
                    )));
                }
                if !on_diag && v < 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "{what}: negative off-diagonal rate {v} in row {i}"
                    )));
                }
                sum += v;
                scale = scale.max(v.abs());
            }
        }
        if sum.abs() > GENERATOR_TOL * scale {
            return Err(Error::InvalidModel(format!(
                "{what}: row {i} sums to {sum:e}, expected 0"
            )));
        }
    }
    Ok(())
}

/// Continuous-time level-independent QBD generator.
#[derive(Debug, Clone, PartialEq)]
pub struct QbdModel {
    b1: Mat,
    b0: Mat,
    b2: Mat,
    a0: Mat,
    a1: Mat,
    a2: Mat,
}

impl QbdModel {
    pub fn new(b1: Mat, b0: Mat, b2: Mat, a0: Mat, a1: Mat, a2: Mat) -> Result<Self> {
        let m0 = b1.rows();
        let m = a1.rows();
        let shape = |name: &str, b: &Mat, r: usize, c: usize| {
            if b.rows() != r || b.cols() != c {
                Err(Error::InvalidModel(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    b.rows(),
                    b.cols()
                )))
            } else {
                Ok(())
            }
        };
        shape("B1", &b1, m0, m0)?;
        shape("B0", &b0, m0, m)?;
        shape("B2", &b2, m, m0)?;
        shape("A0", &a0, m, m)?;
        shape("A1", &a1, m, m)?;
        shape("A2", &a2, m, m)?;
        check_generator_rows(&[&b1, &b0], 0, "level 0 [B1 B0]")?;
        check_generator_rows(&[&b2, &a1, &a0], 1, "level 1 [B2 A1 A0]")?;
        check_generator_rows(&[&a2, &a1, &a0], 1, "level k>=2 [A2 A1 A0]")?;
        Ok(QbdModel {
            b1,
            b0,
            b2,
            a0,
            a1,
            a2,
        })
    }

    /// Scalar birth-death chain with constant rates (an M/M/1 queue).
    pub fn mm1(lambda: f64, mu: f64) -> Result<Self> {
        QbdModel::new(
            Mat::scalar(-lambda),
            Mat::scalar(lambda),
            Mat::scalar(mu),
            Mat::scalar(lambda),
            Mat::scalar(-(lambda + mu)),
            Mat::scalar(mu),
        )
    }

    pub fn b1(&self) -> &Mat {
        &self.b1
    }
    pub fn b0(&self) -> &Mat {
        &self.b0
    }
    pub fn b2(&self) -> &Mat {
        &self.b2
    }
    pub fn a0(&self) -> &Mat {
        &self.a0
    }
    pub fn a1(&self) -> &Mat {
        &self.a1
    }
    pub fn a2(&self) -> &Mat {
        &self.a2
    }
    pub fn m0(&self) -> usize {
        self.b1.rows()
    }
    pub fn m(&self) -> usize {
        self.a1.rows()
    }

    /// R, then the boundary vectors.
    pub fn stationary(
        &self,
        opts: FixedPointOptions,
    ) -> Result<(RateSolveResult, BoundarySolution)> {
        let r = solve_r(&self.a0, &self.a1, &self.a2, opts)?;
        let bnd = boundary_solve(self, &r.matrix)?;
        Ok((r, bnd))
    }
}

/// Stopping controls for the R/G fixed-point iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

/// Solution of a rate-matrix equation.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSolveResult {
    pub matrix: Mat,
    pub iterations: usize,
    /// ∞-norm of the defining equation at `matrix`.
    pub residual: f64,
}

/// Monotone fixed-point driver shared by the R/G solvers here and in
/// `skipfree`. Starts from zero; stops once both the successive change and
/// the geometric extrapolation of the remaining error are below `tol`, and
/// the residual is below `10·tol·scale`.
pub(crate) fn monotone_fixed_point(
    rows: usize,
    cols: usize,
    opts: FixedPointOptions,
    scale: f64,
    mut step: impl FnMut(&Mat) -> Mat,
    residual: impl Fn(&Mat) -> f64,
) -> Result<RateSolveResult> {
    let mut cur = Mat::zeros(rows, cols);
    let mut prev_change = f64::INFINITY;
    let mut change = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let next = step(&cur);
        if !next.is_finite() {
            return Err(Error::NoConvergence {
                iterations: it,
                last_change: f64::INFINITY,
            });
        }
        change = next.max_abs_diff(&cur);
        cur = next;
        if change < opts.tol {
            let rate = change / prev_change;
            let remaining = if change == 0.0 {
                0.0
            } else if rate < 1.0 {
                change * rate / (1.0 - rate)
            } else {
                f64::INFINITY
            };
            if remaining < opts.tol {
                let res = residual(&cur);
                if res < 10.0 * opts.tol * scale {
                    return Ok(RateSolveResult {
                        matrix: cur,
                        iterations: it,
                        residual: res,
                    });
                }
            }
        }
        prev_change = change;
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        last_change: change,
    })
}

fn block_scale(blocks: &[&Mat]) -> f64 {
    blocks.iter().map(|b| b.norm_inf()).sum::<f64>().max(1.0)
}

/// Minimal nonnegative solution of `A0 + R A1 + R² A2 = 0` by
/// `R ← (A0 + R² A2)(−A1)⁻¹` from `R = 0`.
pub fn solve_r(a0: &Mat, a1: &Mat, a2: &Mat, opts: FixedPointOptions) -> Result<RateSolveResult> {
    let neg_a1_inv = inverse(&-a1).map_err(|e| e.in_context("solve_R: A1"))?;
    let m = a1.rows();
    monotone_fixed_point(
        m,
        m,
        opts,
        block_scale(&[a0, a1, a2]),
        |r| &(a0 + &(&(r * r) * a2)) * &neg_a1_inv,
        |r| (a0 + &(r * a1) + &(&(r * r) * a2)).norm_inf(),
    )
}

/// Minimal nonnegative solution of `A0 G² + A1 G + A2 = 0` by
/// `G ← (−A1)⁻¹(A2 + A0 G²)` from `G = 0`.
pub fn solve_g(a0: &Mat, a1: &Mat, a2: &Mat, opts: FixedPointOptions) -> Result<RateSolveResult> {
    let neg_a1_inv = inverse(&-a1).map_err(|e| e.in_context("solve_G: A1"))?;
    let m = a1.rows();
    monotone_fixed_point(
        m,
        m,
        opts,
        block_scale(&[a0, a1, a2]),
        |g| &neg_a1_inv * &(a2 + &(&(a0 * g) * g)),
        |g| (&(&(a0 * g) * g) + &(a1 * g) + a2).norm_inf(),
    )
}

/// Spectral radius of `R`, or `Unstable` when it reaches `1 − 1e-9`.
pub fn check_stable(r: &Mat) -> Result<f64> {
    let sp = spectral_radius_or_bound(r);
    if sp >= 1.0 - STABILITY_MARGIN {
        Err(Error::Unstable {
            spectral_radius: sp,
        })
    } else {
        Ok(sp)
    }
}

/// Boundary stationary vectors `x0`, `x1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySolution {
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
}

/// Solve `x0 B1 + x1 B2 = 0`, `x0 B0 + x1 (A1 + R A2) = 0`,
/// `x0 e + x1 (I − R)⁻¹ e = 1` as one system; the last balance column is
/// dropped in favour of the normalization.
pub fn boundary_solve(model: &QbdModel, r: &Mat) -> Result<BoundarySolution> {
    check_stable(r)?;
    if model.b0.is_zero() || model.b2.is_zero() {
        return Err(Error::Reducible(
            "boundary level is disconnected (B0 or B2 is zero)".into(),
        ));
    }
    let (m0, m) = (model.m0(), model.m());
    let n = m0 + m;
    let mut sys = Mat::zeros(n, n);
    sys.set_block(0, 0, &model.b1);
    sys.set_block(0, m0, &model.b0);
    sys.set_block(m0, 0, &model.b2);
    sys.set_block(m0, m0, &(&model.a1 + &(r * &model.a2)));

    let i_minus_r = &Mat::identity(m) - r;
    let geo = crate::matkernel::solve_linear(&i_minus_r, &Mat::col_ones(m))
        .map_err(|e| e.in_context("boundary_solve: I - R"))?;
    let mut w = vec![1.0; m0];
    w.extend_from_slice(geo.as_slice());

    let z = left_null_normalized(&sys, &w).map_err(|e| e.in_context("boundary_solve"))?;
    Ok(BoundarySolution {
        x0: z[..m0].to_vec(),
        x1: z[m0..].to_vec(),
    })
}

/// `π_k = x1 (I − R)⁻¹ R^{k−1}` for `k = 1..K`.
pub fn tails_matrix_geometric(
    x0: &[f64],
    x1: &[f64],
    r: &Mat,
    levels: usize,
) -> Result<TailSeries> {
    check_stable(r)?;
    let m = r.rows();
    let mut pis = Vec::with_capacity(levels);
    if levels > 0 {
        let mut pi = solve_right(&Mat::row_vector(x1), &(&Mat::identity(m) - r))
            .map_err(|e| e.in_context("tails_matrix_geometric: I - R"))?;
        for _ in 0..levels {
            pis.push(pi.as_slice().to_vec());
            pi = &pi * r;
        }
    }
    Ok(TailSeries::new(pis, x0.to_vec(), Method::MatrixGeometric))
}

/// UL-type route: `π_1 = x0 B0 (−Φ0⁻¹)` with `Φ0 = (A0 + A1) + R A2`, then
/// `π_k = π_1 R^{k−1}`. The report carries `‖x0 B0 (−Φ0⁻¹) − x1 (I − R)⁻¹‖∞`
/// under `"ul.identity_residual"`.
pub fn tails_ul(
    model: &QbdModel,
    r: &Mat,
    boundary: &BoundarySolution,
    levels: usize,
) -> Result<TailSeries> {
    check_stable(r)?;
    let m = model.m();
    let phi0 = &(&model.a0 + &model.a1) + &(r * &model.a2);
    let x0b0 = &Mat::row_vector(&boundary.x0) * &model.b0;
    let pi1 = solve_right(&x0b0, &-&phi0).map_err(|e| e.in_context("tails_ul: Phi0"))?;

    let geo = solve_right(&Mat::row_vector(&boundary.x1), &(&Mat::identity(m) - r))
        .map_err(|e| e.in_context("tails_ul: I - R"))?;
    let identity = pi1.max_abs_diff(&geo);

    let mut pis = Vec::with_capacity(levels);
    let mut pi = pi1;
    for _ in 0..levels {
        pis.push(pi.as_slice().to_vec());
        pi = &pi * r;
    }
    let mut out = TailSeries::new(pis, boundary.x0.clone(), Method::UlRg);
    out.report.push("ul.identity_residual", identity);
    Ok(out)
}

/// Truncation controls for the LU-type sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LuOptions {
    /// Fixed summation depth; `None` extends until the added term is below `tol`.
    pub depth: Option<usize>,
    pub tol: f64,
}

impl Default for LuOptions {
    fn default() -> Self {
        LuOptions {
            depth: None,
            tol: 1e-14,
        }
    }
}

/// LU-type measures of the shifted generator: `U = diag(Ψ_0, Ψ_1, …)`,
/// `R_k = A2 (−Ψ_{k−1}⁻¹)`, `G_{k−1} = (−Ψ_{k−1}⁻¹) A0`.
#[derive(Debug, Clone)]
struct LuRecursion<'a> {
    a0: &'a Mat,
    a1: &'a Mat,
    a2: &'a Mat,
    psis: Vec<Mat>,
    neg_inv: Vec<Mat>,
}

impl<'a> LuRecursion<'a> {
    fn new(model: &'a QbdModel) -> Result<Self> {
        let psi0 = &model.a0 + &model.a1;
        let inv0 = inverse(&-&psi0).map_err(|e| e.in_context("LU: Psi_0"))?;
        Ok(LuRecursion {
            a0: &model.a0,
            a1: &model.a1,
            a2: &model.a2,
            psis: vec![psi0],
            neg_inv: vec![inv0],
        })
    }

    /// Extend so that `Ψ_k` exists.
    fn ensure(&mut self, k: usize) -> Result<()> {
        while self.psis.len() <= k {
            let prev = self.neg_inv.last().unwrap();
            let psi = self.a1 + &(&(self.a2 * prev) * self.a0);
            let inv = inverse(&-&psi)
                .map_err(|e| e.in_context(format!("LU: Psi_{}", self.psis.len())))?;
            self.psis.push(psi);
            self.neg_inv.push(inv);
        }
        Ok(())
    }

    /// `R_k`, `k ≥ 1`.
    fn r(&self, k: usize) -> Mat {
        self.a2 * &self.neg_inv[k - 1]
    }

    /// `G_k`, `k ≥ 0`.
    fn g(&self, k: usize) -> Mat {
        &self.neg_inv[k] * self.a0
    }
}

/// LU-type route:
/// `π_n = x0 B0 [Y_{n−1}(−Ψ_{n−1}⁻¹) + Σ_{k≥n} Y_k (−Ψ_k⁻¹) X_{k−n+1}^{(k)}]`
/// with `Y_k = G_0⋯G_{k−1}` and `X_j^{(k)} = R_k R_{k−1}⋯R_{k−j+1}`.
///
/// Writing `w_k = x0 B0 Y_k (−Ψ_k⁻¹)`, the sums are evaluated by the nesting
/// `T_n = w_n + T_{n+1} R_{n+1}`, `π_n = w_{n−1} + T_n R_n`. The depth grows
/// until every added term `w_k R_k⋯R_n` (`n ≤ K`) is below `tol`, with a hard
/// cap of `10·K + 200` terms.
pub fn tails_lu(
    model: &QbdModel,
    x0: &[f64],
    levels: usize,
    opts: LuOptions,
) -> Result<TailSeries> {
    let mut rec = LuRecursion::new(model)?;
    let x0b0 = &Mat::row_vector(x0) * &model.b0;
    let cap = 10 * levels + 200;

    // w_0 and the running Y-product row vector y_k = x0 B0 Y_k
    let mut y = x0b0.clone();
    let mut w = vec![&y * &rec.neg_inv[0]];
    let mut rs: Vec<Mat> = vec![Mat::zeros(model.m(), model.m())]; // R_0 placeholder
    let mut last_term = f64::INFINITY;

    let mut k = 0;
    loop {
        let done = match opts.depth {
            Some(d) => k >= d.max(levels),
            None => k >= levels && last_term < opts.tol,
        };
        if done {
            break;
        }
        if k >= cap {
            return Err(Error::TruncationFailure {
                terms: k,
                bound: last_term,
            });
        }
        k += 1;
        rec.ensure(k)?;
        y = &y * &rec.g(k - 1);
        let wk = &y * &rec.neg_inv[k];
        rs.push(rec.r(k));

        // largest added term w_k R_k ⋯ R_n over n ≤ K
        let mut t = wk.clone();
        let mut worst: f64 = 0.0;
        for n in (1..=k).rev() {
            t = &t * &rs[n];
            if n <= levels {
                worst = worst.max(t.max_abs());
            }
            if t.is_zero() {
                break;
            }
        }
        last_term = worst;
        w.push(wk);
    }
    let depth = k;

    let m = model.m();
    let mut pis = vec![Vec::new(); levels];
    if levels > 0 {
        // T_n for n = depth down to 1
        let mut t = if depth >= 1 {
            w[depth].clone()
        } else {
            Mat::zeros(1, m)
        };
        let mut tails_t: Vec<Mat> = vec![Mat::zeros(1, m); depth + 2];
        if depth >= 1 {
            tails_t[depth] = t.clone();
            for n in (1..depth).rev() {
                t = &w[n] + &(&t * &rs[n + 1]);
                tails_t[n] = t.clone();
            }
        }
        for n in 1..=levels {
            let mut pi = w[n - 1].clone();
            if n <= depth {
                pi += &(&tails_t[n] * &rs[n]);
            }
            pis[n - 1] = pi.as_slice().to_vec();
        }
    }
    let mut out = TailSeries::new(pis, x0.to_vec(), Method::LuRg);
    out.report.push("lu.depth", depth as f64);
    out.report.push("lu.last_term", last_term);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorizationKind {
    Ul,
    Lu,
}

/// Blocks of an RG-factorization over the first `window` levels of the
/// shifted generator `𝕼`.
///
/// UL: `𝕼 = (I − R_U) diag(Φ0, Φ, …) (I − G_L)` with `R` on the
/// superdiagonal and `G` on the subdiagonal. LU: `𝕼 = (I − R_L) diag(Ψ_0,
/// Ψ_1, …) (I − G_U)` with `R_k` on the subdiagonal and `G_k` on the
/// superdiagonal.
#[derive(Debug, Clone)]
pub struct RgFactorization {
    pub kind: FactorizationKind,
    pub r_blocks: Vec<Mat>,
    pub u_blocks: Vec<Mat>,
    pub g_blocks: Vec<Mat>,
    pub window: usize,
}

/// Reconstruction error split into interior rows and the last window row,
/// which is affected by the cut for the UL kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionError {
    pub interior: f64,
    pub last_level: f64,
}

impl RgFactorization {
    fn block_size(&self) -> usize {
        self.u_blocks[0].rows()
    }

    /// Dense product of the three factors over the window.
    pub fn reconstruct(&self) -> Mat {
        let m = self.block_size();
        let w = self.window;
        let n = w * m;
        let mut left = Mat::identity(n);
        let mut diag = Mat::zeros(n, n);
        let mut right = Mat::identity(n);
        for (i, u) in self.u_blocks.iter().enumerate() {
            diag.set_block(i * m, i * m, u);
        }
        match self.kind {
            FactorizationKind::Ul => {
                for (i, r) in self.r_blocks.iter().enumerate() {
                    left.set_block(i * m, (i + 1) * m, &-r);
                }
                for (i, g) in self.g_blocks.iter().enumerate() {
                    right.set_block((i + 1) * m, i * m, &-g);
                }
            }
            FactorizationKind::Lu => {
                for (i, r) in self.r_blocks.iter().enumerate() {
                    left.set_block((i + 1) * m, i * m, &-r);
                }
                for (i, g) in self.g_blocks.iter().enumerate() {
                    right.set_block(i * m, (i + 1) * m, &-g);
                }
            }
        }
        &(&left * &diag) * &right
    }

    /// Compare the reconstruction against the window of `𝕼`.
    pub fn reconstruction_error(&self, model: &QbdModel) -> ReconstructionError {
        let m = self.block_size();
        let target = shifted_generator_window(model, self.window);
        let rec = self.reconstruct();
        let n = self.window * m;
        let split = (self.window - 1) * m;
        let mut interior: f64 = 0.0;
        let mut last: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = (rec[(i, j)] - target[(i, j)]).abs();
                if i < split {
                    interior = interior.max(d);
                } else {
                    last = last.max(d);
                }
            }
        }
        ReconstructionError {
            interior,
            last_level: last,
        }
    }

    /// Every `−U_k⁻¹ ≥ -tol` and every `R`/`G` block `≥ -tol`.
    pub fn sign_pattern_holds(&self, tol: f64) -> bool {
        self.u_blocks.iter().all(|u| {
            inverse(&-u)
                .map(|inv| inv.is_nonnegative(tol))
                .unwrap_or(false)
        }) && self.r_blocks.iter().all(|r| r.is_nonnegative(tol))
            && self.g_blocks.iter().all(|g| g.is_nonnegative(tol))
    }
}

/// First `window` block levels of the shifted generator whose level-1
/// diagonal block is `A0 + A1`.
pub fn shifted_generator_window(model: &QbdModel, window: usize) -> Mat {
    let m = model.m();
    let mut q = Mat::zeros(window * m, window * m);
    for i in 0..window {
        let d = if i == 0 {
            &model.a0 + &model.a1
        } else {
            model.a1.clone()
        };
        q.set_block(i * m, i * m, &d);
        if i + 1 < window {
            q.set_block(i * m, (i + 1) * m, &model.a0);
            q.set_block((i + 1) * m, i * m, &model.a2);
        }
    }
    q
}

pub fn factorize(
    model: &QbdModel,
    kind: FactorizationKind,
    window: usize,
) -> Result<RgFactorization> {
    assert!(window >= 1, "window must cover at least one level");
    let opts = FixedPointOptions::default();
    match kind {
        FactorizationKind::Ul => {
            let r = solve_r(&model.a0, &model.a1, &model.a2, opts)?.matrix;
            let g = solve_g(&model.a0, &model.a1, &model.a2, opts)?.matrix;
            let phi = &model.a1 + &(&r * &model.a2);
            let phi0 = &phi + &model.a0;
            let mut u_blocks = vec![phi0];
            u_blocks.extend(std::iter::repeat(phi).take(window - 1));
            Ok(RgFactorization {
                kind,
                r_blocks: vec![r; window - 1],
                u_blocks,
                g_blocks: vec![g; window - 1],
                window,
            })
        }
        FactorizationKind::Lu => {
            let mut rec = LuRecursion::new(model)?;
            rec.ensure(window - 1)?;
            Ok(RgFactorization {
                kind,
                r_blocks: (1..window).map(|k| rec.r(k)).collect(),
                u_blocks: rec.psis[..window].to_vec(),
                g_blocks: (0..window - 1).map(|k| rec.g(k)).collect(),
                window,
            })
        }
    }
}
