//! Queueing models with closed-form or recursive tail expressions, plus the
//! supermarket mean-field system.

use crate::error::{Error, Result};
use crate::ldqbd::{LdQbdModel, LevelBlocks};
use crate::matkernel::{solve_right, Mat};
use crate::qbd::{self, FixedPointOptions, QbdModel};
use crate::tails::{Method, TailSeries};

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!(
            "{name} must be a positive rate, got {v}"
        )))
    }
}

/// M/M/1 retrial queue. Phases are (W, I): server busy or idle; the level is
/// the orbit size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrialParams {
    pub lambda: f64,
    pub mu: f64,
    pub theta: f64,
}

impl RetrialParams {
    pub fn rho(&self) -> f64 {
        self.lambda / self.mu
    }

    pub fn validate(&self) -> Result<()> {
        positive("lambda", self.lambda)?;
        positive("mu", self.mu)?;
        positive("theta", self.theta)
    }
}

/// Blocks of the tail equation `Π Q = (−λρ, 0, 0, …)`.
struct RetrialBlocks {
    p: RetrialParams,
    c: Mat,
    d: Mat,
}

impl RetrialBlocks {
    fn new(p: RetrialParams) -> Self {
        RetrialBlocks {
            p,
            c: Mat::diag(&[p.lambda, 0.0]),
            d: Mat::from_rows(&[[0.0, 0.0], [p.theta, -p.theta]]),
        }
    }

    fn a(&self, k: usize) -> Mat {
        let RetrialParams { lambda, mu, theta } = self.p;
        Mat::from_rows(&[[-(lambda + mu), mu], [lambda, -(lambda + k as f64 * theta)]])
    }

    fn b(&self, k: usize) -> Mat {
        let theta = self.p.theta;
        Mat::from_rows(&[[0.0, 0.0], [k as f64 * theta, -theta]])
    }
}

/// Tails `(π_{W,k}, π_{I,k})`, `k = 1..K`, from the UL-type factorization of
/// the tail equation.
///
/// `R_k = C(−Ψ_{k+1})⁻¹` and `Ψ_k = A_k + R_k B_{k+1} + R_k T_{k+1} D` with
/// `T_j = R_j + R_j R_{j+1} + …`, swept backward from `R_{H+1} = 0`. Then
/// `π_1 = (λρ, 0)(−Ψ_1⁻¹)` and `π_k = π_1 R_1⋯R_{k−1}`. Fails with
/// `TruncationFailure` when `‖π_H‖∞` exceeds `tol`.
pub fn retrial_tails(
    p: RetrialParams,
    levels: usize,
    horizon: usize,
    tol: f64,
) -> Result<TailSeries> {
    p.validate()?;
    let rho = p.rho();
    if rho >= 1.0 {
        return Err(Error::Unstable {
            spectral_radius: rho,
        });
    }
    let blk = RetrialBlocks::new(p);
    let h = horizon.max(levels).max(1);
    let zero = Mat::zeros(2, 2);
    let eye = Mat::identity(2);
    let mut r = vec![zero.clone(); h + 2];
    let mut t = vec![zero.clone(); h + 3];
    for k in (1..=h).rev() {
        let psi_next =
            &(&blk.a(k + 1) + &(&r[k + 1] * &blk.b(k + 2))) + &(&(&r[k + 1] * &t[k + 2]) * &blk.d);
        r[k] = solve_right(&blk.c, &-&psi_next)
            .map_err(|e| e.in_context(format!("retrial Psi_{}", k + 1)))?;
        t[k + 1] = &r[k + 1] * &(&eye + &t[k + 2]);
    }
    let psi1 = &(&blk.a(1) + &(&r[1] * &blk.b(2))) + &(&(&r[1] * &t[2]) * &blk.d);
    let mut pi = solve_right(&Mat::row_vector(&[p.lambda * rho, 0.0]), &-&psi1)
        .map_err(|e| e.in_context("retrial Psi_1"))?;

    let mut pis = Vec::with_capacity(levels);
    let mut at_horizon = 0.0;
    for k in 1..=h {
        if k <= levels {
            pis.push(pi.as_slice().to_vec());
        }
        if k == h {
            at_horizon = pi.max_abs();
        }
        pi = &pi * &r[k];
    }
    if at_horizon > tol {
        return Err(Error::TruncationFailure {
            terms: h,
            bound: at_horizon,
        });
    }
    let x0 = match pis.first() {
        Some(p1) => vec![rho - p1[0], 1.0 - rho - p1[1]],
        None => vec![rho, 1.0 - rho],
    };
    let mut out = TailSeries::new(pis, x0, Method::UlRg);
    out.report.push("retrial.horizon", h as f64);
    out.report.push("retrial.horizon_tail", at_horizon);
    out.report.push("pi_w0", rho);
    out.report.push("pi_i0", 1.0 - rho);
    Ok(out)
}

/// The retrial queue as a level-dependent QBD on orbit sizes, frozen at `H`.
pub fn retrial_ldqbd(p: RetrialParams, horizon: usize) -> Result<LdQbdModel> {
    p.validate()?;
    LdQbdModel::from_rule(2, 2, horizon, move |k| {
        let kt = k as f64 * p.theta;
        LevelBlocks {
            a0: Mat::diag(&[p.lambda, 0.0]),
            a1: Mat::from_rows(&[[-(p.lambda + p.mu), p.mu], [p.lambda, -(p.lambda + kt)]]),
            a2: if k == 0 {
                Mat::zeros(2, 0)
            } else {
                Mat::from_rows(&[[0.0, 0.0], [kt, 0.0]])
            },
        }
    })
}

/// Tails of a birth-death queue with birth rate `λ_n` in state `n` and death
/// rate `μ_n` in state `n ≥ 1`.
///
/// With `P_j = ρ_0⋯ρ_{j−1}`, `ρ_{i} = λ_i/μ_{i+1}` and `S = Σ_{j≥1} P_j`,
/// `π_k = Σ_{j≥k} P_j/(1 + S)`. The series stops once a term drops below
/// `tol`; `Divergent` after a million terms.
pub fn mn_mn_1_tails(
    lambda: impl Fn(usize) -> f64,
    mu: impl Fn(usize) -> f64,
    levels: usize,
    tol: f64,
) -> Result<TailSeries> {
    const MAX_TERMS: usize = 1_000_000;
    let mut terms = vec![1.0];
    let mut p = 1.0;
    let mut j = 0;
    loop {
        let (l, m) = (lambda(j), mu(j + 1));
        if !(l >= 0.0 && m > 0.0 && l.is_finite() && m.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "rates at level {j}: lambda={l}, mu={m}"
            )));
        }
        p *= l / m;
        j += 1;
        terms.push(p);
        if p == 0.0 || (p < tol && j >= levels) {
            break;
        }
        if j >= MAX_TERMS || !p.is_finite() {
            return Err(Error::Divergent { terms: j });
        }
    }
    while terms.len() <= levels {
        terms.push(0.0);
    }
    // suffix sums from the smallest terms up
    let mut suffix = vec![0.0; terms.len() + 1];
    for i in (0..terms.len()).rev() {
        suffix[i] = suffix[i + 1] + terms[i];
    }
    let total = suffix[0];
    let pis = (1..=levels).map(|k| vec![suffix[k] / total]).collect();
    let mut out = TailSeries::new(pis, vec![1.0 / total], Method::Series);
    out.report.push("series.terms", j as f64);
    out.report.push("series.last_term", p);
    Ok(out)
}

/// The birth-death queue as a scalar level-dependent QBD frozen at `H`.
pub fn mn_mn_1_ldqbd(
    lambda: impl Fn(usize) -> f64 + Send + Sync + 'static,
    mu: impl Fn(usize) -> f64 + Send + Sync + 'static,
    horizon: usize,
) -> Result<LdQbdModel> {
    LdQbdModel::from_rule(1, 1, horizon, move |k| {
        let (l, m) = (lambda(k), if k == 0 { 0.0 } else { mu(k) });
        LevelBlocks {
            a0: Mat::scalar(l),
            a1: Mat::scalar(-(l + m)),
            a2: if k == 0 {
                Mat::zeros(1, 0)
            } else {
                Mat::scalar(m)
            },
        }
    })
}

/// M/M/1 queue (unit service rate) whose server takes repeated vacations of
/// rate `θ` whenever the system is empty. Phases are (V, W).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VacationParams {
    pub lambda: f64,
    pub theta: f64,
}

impl VacationParams {
    pub fn validate(&self) -> Result<()> {
        positive("theta", self.theta)?;
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::InvalidModel(format!(
                "lambda must lie in (0, 1), got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// The displayed closed form `λ^k + (1 − λ)(λ²/θ)[1 − (λ/(λ+θ))^{k−1}]`.
pub fn vacation_closed_form(p: VacationParams, k: usize) -> f64 {
    let VacationParams { lambda, theta } = p;
    let q = lambda / (lambda + theta);
    lambda.powi(k as i32) + (1.0 - lambda) * lambda * lambda / theta * (1.0 - q.powi(k as i32 - 1))
}

/// Tails `(π_{V,k}, π_{W,k})`.
///
/// `π_{V,k} = (λ/(λ+θ))^k (1 − λ)`, `π_{W,1} = λ`,
/// `π_{W,2} = λ − λθ(1 − λ)/(λ + θ)` and for `k ≥ 3`
/// `π_{W,k} = π_{W,k−1} − λ(π_{W,k−2} − π_{W,k−1}) − θ π_{V,k−1}`.
/// The largest gap to [`vacation_closed_form`] is reported as
/// `"closed_form.max_gap"`.
pub fn vacation_tails(p: VacationParams, levels: usize) -> Result<TailSeries> {
    p.validate()?;
    let VacationParams { lambda, theta } = p;
    let q = lambda / (lambda + theta);
    let v = |k: usize| q.powi(k as i32) * (1.0 - lambda);
    let mut w = vec![
        1.0,
        lambda,
        lambda - lambda * theta * (1.0 - lambda) / (lambda + theta),
    ];
    for k in 3..=levels {
        let next = w[k - 1] - lambda * (w[k - 2] - w[k - 1]) - theta * v(k - 1);
        w.push(next);
    }
    let pis: Vec<Vec<f64>> = (1..=levels).map(|k| vec![v(k), w[k]]).collect();
    let gap = (1..=levels)
        .map(|k| (vacation_closed_form(p, k) - w[k]).abs())
        .fold(0.0, f64::max);
    let mut out = TailSeries::new(pis, vec![v(0) - v(1)], Method::Recursion);
    out.report.push("closed_form.max_gap", gap);
    out.report.push("pi_v0", 1.0 - lambda);
    Ok(out)
}

/// The vacation queue as a QBD: level 0 is the single state (V, 0).
pub fn vacation_qbd(p: VacationParams) -> Result<QbdModel> {
    p.validate()?;
    let VacationParams { lambda, theta } = p;
    QbdModel::new(
        Mat::scalar(-lambda),
        Mat::from_rows(&[[lambda, 0.0]]),
        Mat::from_rows(&[[0.0], [1.0]]),
        Mat::diag(&[lambda, lambda]),
        Mat::from_rows(&[[-(lambda + theta), theta], [0.0, -(lambda + 1.0)]]),
        Mat::from_rows(&[[0.0, 0.0], [0.0, 1.0]]),
    )
}

/// M/M/1 queue whose server fails at rate `α` while working and is repaired
/// at rate `β`. Phases are (W, R).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepairableParams {
    pub lambda: f64,
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl RepairableParams {
    pub fn rho(&self) -> f64 {
        self.lambda / self.mu * (1.0 + self.alpha / self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        positive("lambda", self.lambda)?;
        positive("mu", self.mu)?;
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "alpha must be nonnegative, got {}",
                self.alpha
            )));
        }
        positive("beta", self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepairableRoute {
    Iterative,
    MatrixGeometric,
}

/// Tails `(π_{W,k}, π_{R,k})`.
///
/// Boundary: `π_{W,0} = 1 − (λ/μ)(α/β)`, `π_{W,1} = λ/μ`,
/// `π_{R,1} = (λ/μ)(α/β)`. Iterative route, `k ≥ 2`:
/// `π_{W,k} = ((λ+μ+α)π_{W,k−1} − λπ_{W,k−2} − βπ_{R,k−1})/μ` and
/// `π_{R,k} = (απ_{W,k} + λπ_{R,k−1})/(λ + β)`. Matrix-geometric route:
/// `Π_k = (λ²/μ, (λ²/μ)(α/β))(−Ψ⁻¹)R^{k−2}` with `Ψ = A + RB` and `R` the
/// minimal solution of `C + RA + R²B = 0`.
pub fn repairable_tails(
    p: RepairableParams,
    levels: usize,
    route: RepairableRoute,
) -> Result<TailSeries> {
    p.validate()?;
    let rho = p.rho();
    if rho >= 1.0 {
        return Err(Error::Unstable {
            spectral_radius: rho,
        });
    }
    let RepairableParams {
        lambda,
        mu,
        alpha,
        beta,
    } = p;
    let ratio = alpha / beta;
    let w0 = 1.0 - lambda / mu * ratio;
    let first = [lambda / mu, lambda / mu * ratio];
    let mut pis: Vec<Vec<f64>> = Vec::with_capacity(levels);
    if levels >= 1 {
        pis.push(first.to_vec());
    }
    let method = match route {
        RepairableRoute::Iterative => {
            let mut prev_w = w0;
            for k in 2..=levels {
                let (w1, r1) = (pis[k - 2][0], pis[k - 2][1]);
                let w = ((lambda + mu + alpha) * w1 - lambda * prev_w - beta * r1) / mu;
                let r = (alpha * w + lambda * r1) / (lambda + beta);
                prev_w = w1;
                pis.push(vec![w, r]);
            }
            Method::Recursion
        }
        RepairableRoute::MatrixGeometric => {
            if levels >= 2 {
                let a =
                    Mat::from_rows(&[[-(lambda + mu + alpha), alpha], [beta, -(lambda + beta)]]);
                let b = Mat::diag(&[mu, 0.0]);
                let c = Mat::diag(&[lambda, lambda]);
                let r = qbd::solve_r(&c, &a, &b, FixedPointOptions::default())?.matrix;
                qbd::check_stable(&r)?;
                let psi = &a + &(&r * &b);
                let seed = Mat::row_vector(&[lambda * lambda / mu, lambda * lambda / mu * ratio]);
                let mut pi =
                    solve_right(&seed, &-&psi).map_err(|e| e.in_context("repairable Psi"))?;
                for _ in 2..=levels {
                    pis.push(pi.as_slice().to_vec());
                    pi = &pi * &r;
                }
            }
            Method::MatrixGeometric
        }
    };
    let mut out = TailSeries::new(pis, vec![w0 - first[0]], method);
    out.report.push("pi_w0", w0);
    Ok(out)
}

/// The repairable-server queue as a QBD: level 0 is the single state (W, 0).
pub fn repairable_qbd(p: RepairableParams) -> Result<QbdModel> {
    p.validate()?;
    let RepairableParams {
        lambda,
        mu,
        alpha,
        beta,
    } = p;
    QbdModel::new(
        Mat::scalar(-lambda),
        Mat::from_rows(&[[lambda, 0.0]]),
        Mat::from_rows(&[[mu], [0.0]]),
        Mat::diag(&[lambda, lambda]),
        Mat::from_rows(&[[-(lambda + mu + alpha), alpha], [beta, -(lambda + beta)]]),
        Mat::diag(&[mu, 0.0]),
    )
}

fn check_supermarket(rho: f64, d: u32) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidModel(format!(
            "rho must lie in (0, 1), got {rho}"
        )));
    }
    if d < 1 {
        return Err(Error::InvalidModel("d must be at least 1".into()));
    }
    Ok(())
}

/// `ρ^{(d^k − 1)/(d − 1)}` (`ρ^k` for `d = 1`). The exponent is formed in
/// floating point, so huge `k` underflows cleanly to 0.
pub fn supermarket_tail(rho: f64, d: u32, k: usize) -> Result<f64> {
    check_supermarket(rho, d)?;
    if k == 0 {
        return Ok(1.0);
    }
    if d == 1 && k <= i32::MAX as usize {
        return Ok(rho.powi(k as i32));
    }
    let exponent = if d == 1 {
        k as f64
    } else {
        let df = d as f64;
        (df.powf(k as f64) - 1.0) / (df - 1.0)
    };
    Ok(rho.powf(exponent))
}

/// Mean-field supermarket ODE setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldParams {
    pub rho: f64,
    pub d: u32,
    /// Number of tracked components `u_1..u_K`.
    pub levels: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Keep every n-th step in the trajectory.
    pub record_every: usize,
}

impl MeanFieldParams {
    pub fn new(rho: f64, d: u32, levels: usize) -> Self {
        MeanFieldParams {
            rho,
            d,
            levels,
            dt: 0.01,
            t_end: 200.0,
            record_every: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldTrajectory {
    pub times: Vec<f64>,
    /// `u_1..u_K` at each recorded time.
    pub states: Vec<Vec<f64>>,
    pub final_state: Vec<f64>,
    pub final_time: f64,
    /// `1 ≥ u_1 ≥ u_2 ≥ … ≥ 0` held at every step.
    pub monotone: bool,
    /// Stopped because the derivative fell below `1e-12`.
    pub settled: bool,
}

/// Integrate `du_k/dt = λ(u_{k−1}^d − u_k^d) − μ(u_k − u_{k+1})` with
/// `u_0 = 1`, `u_{K+1} = 0`, `λ = ρ`, `μ = 1`, by classical RK4 from
/// `u_1(0) = ρ`, `u_k(0) = 0`.
pub fn meanfield_ode(p: MeanFieldParams) -> Result<MeanFieldTrajectory> {
    check_supermarket(p.rho, p.d)?;
    if p.levels < 5 {
        return Err(Error::InvalidModel(format!(
            "need at least 5 levels, got {}",
            p.levels
        )));
    }
    if !(p.dt > 0.0 && p.t_end >= 0.0) {
        return Err(Error::InvalidModel(
            "dt must be positive and t_end nonnegative".into(),
        ));
    }
    let n = p.levels;
    let d = p.d as i32;
    let rhs = |u: &[f64], out: &mut [f64]| {
        for k in 0..n {
            let below = if k == 0 { 1.0 } else { u[k - 1] };
            let above = if k + 1 < n { u[k + 1] } else { 0.0 };
            out[k] = p.rho * (below.powi(d) - u[k].powi(d)) - (u[k] - above);
        }
    };
    let mut u = vec![0.0; n];
    u[0] = p.rho;
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut states = vec![u.clone()];
    let mut monotone = true;
    let mut settled = false;
    let steps = (p.t_end / p.dt).round() as usize;
    let every = p.record_every.max(1);
    for step in 1..=steps {
        rhs(&u, &mut k1);
        if k1.iter().fold(0.0f64, |a, v| a.max(v.abs())) < 1e-12 {
            settled = true;
            break;
        }
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * p.dt * k1[i];
        }
        rhs(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * p.dt * k2[i];
        }
        rhs(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = u[i] + p.dt * k3[i];
        }
        rhs(&tmp, &mut k4);
        for i in 0..n {
            u[i] += p.dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t = step as f64 * p.dt;
        for (i, &v) in u.iter().enumerate() {
            if !(-1e-9..=1.0 + 1e-9).contains(&v) {
                return Err(Error::StepUnstable {
                    time: t,
                    level: i + 1,
                    value: v,
                });
            }
        }
        if u[0] > 1.0 + 1e-12 || u.windows(2).any(|w| w[1] > w[0] + 1e-12) {
            monotone = false;
        }
        if step % every == 0 {
            times.push(t);
            states.push(u.clone());
        }
    }
    Ok(MeanFieldTrajectory {
        times,
        states,
        final_state: u,
        final_time: t,
        monotone,
        settled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retrial_boundary_values() {
        let p = RetrialParams {
            lambda: 0.5,
            mu: 1.0,
            theta: 1.0,
        };
        let t = retrial_tails(p, 10, 200, 1e-12).unwrap();
        assert_eq!(t.report.get("pi_w0"), Some(0.5));
        assert_eq!(t.report.get("pi_i0"), Some(0.5));
        assert!((t.total_mass() - 1.0).abs() < 1e-12);
        assert!(t.is_monotone(0.0));
    }

    #[test]
    fn retrial_unstable() {
        let p = RetrialParams {
            lambda: 1.0,
            mu: 1.0,
            theta: 1.0,
        };
        assert!(matches!(
            retrial_tails(p, 5, 50, 1e-12),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn birth_death_finite_series() {
        let t = mn_mn_1_tails(|n| if n < 2 { 1.0 } else { 0.0 }, |_| 2.0, 3, 1e-14).unwrap();
        assert!((t.pi(1)[0] - 3.0 / 7.0).abs() < 1e-15);
        assert!((t.pi(2)[0] - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(t.pi(3)[0], 0.0);
    }

    #[test]
    fn birth_death_reduces_to_mm1() {
        let t = mn_mn_1_tails(|_| 1.0, |_| 2.0, 6, 1e-16).unwrap();
        for k in 1..=6 {
            assert!((t.pi(k)[0] - 0.5f64.powi(k as i32)).abs() < 1e-14);
        }
    }

    #[test]
    fn birth_death_divergent() {
        let r = mn_mn_1_tails(|_| 1.0, |_| 1.0, 3, 1e-14);
        assert!(matches!(r, Err(Error::Divergent { .. })));
    }

    #[test]
    fn vacation_arithmetic() {
        let p = VacationParams {
            lambda: 0.5,
            theta: 1.0,
        };
        let t = vacation_tails(p, 4).unwrap();
        assert!((t.pi(1)[0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((t.pi(1)[1] - 0.5).abs() < 1e-15);
        assert!((t.pi(2)[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((t.pi(3)[1] - 7.0 / 36.0).abs() < 1e-15);
        assert!((vacation_closed_form(p, 2) - 1.0 / 3.0).abs() < 1e-15);
        assert!((vacation_closed_form(p, 3) - 17.0 / 72.0).abs() < 1e-15);
        assert!(t.report.get("closed_form.max_gap").unwrap() > 0.04);
    }

    #[test]
    fn repairable_arithmetic() {
        let p = RepairableParams {
            lambda: 0.25,
            mu: 1.0,
            alpha: 0.5,
            beta: 1.0,
        };
        let it = repairable_tails(p, 20, RepairableRoute::Iterative).unwrap();
        assert_eq!(it.report.get("pi_w0"), Some(0.875));
        assert_eq!(it.pi(1), &[0.25, 0.125]);
        assert!((it.pi(2)[0] - 0.09375).abs() < 1e-15);
        assert!((it.pi(2)[1] - 0.0625).abs() < 1e-15);
        let mg = repairable_tails(p, 20, RepairableRoute::MatrixGeometric).unwrap();
        assert!(it.max_abs_diff(&mg, 20) < 1e-9);
    }

    #[test]
    fn supermarket_values() {
        assert_eq!(supermarket_tail(0.5, 1, 3).unwrap(), 0.125);
        assert!((supermarket_tail(0.5, 2, 3).unwrap() - 0.0078125).abs() < 1e-16);
        assert_eq!(supermarket_tail(0.3, 3, 0).unwrap(), 1.0);
        assert_eq!(supermarket_tail(0.5, 2, 2000).unwrap(), 0.0);
        for k in 1..=3 {
            let t = |j| supermarket_tail(0.5, 2, j).unwrap();
            let bal = 0.5 * (t(k - 1).powi(2) - t(k).powi(2)) - (t(k) - t(k + 1));
            assert!(bal.abs() < 1e-15);
        }
    }

    #[test]
    fn meanfield_d1_fixed_point() {
        let mut p = MeanFieldParams::new(0.5, 1, 40);
        p.t_end = 200.0;
        let tr = meanfield_ode(p).unwrap();
        assert!(tr.monotone);
        for k in 1..=10 {
            assert!((tr.final_state[k - 1] - 0.5f64.powi(k as i32)).abs() < 1e-8);
        }
    }
}
