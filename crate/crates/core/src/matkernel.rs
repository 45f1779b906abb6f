//! Dense real matrices and the handful of kernels the solvers need.
//!
//! Blocks in this crate are small (a few dozen rows at most) except for the
//! truncated systems built by the oracle, which are block banded. Elimination
//! therefore skips zero multipliers, which keeps banded solves cheap without a
//! separate sparse code path.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

/// Pivot magnitude below which elimination reports a singular matrix.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-14;

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    /// Zero matrix; either dimension may be 0 for an empty boundary block.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn scalar(v: f64) -> Self {
        Mat::from_vec(1, 1, vec![v])
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        assert_eq!(
            data.len(),
            rows * cols,
            "data length does not match {rows}x{cols}"
        );
        Mat { rows, cols, data }
    }

    /// Build from row slices. Panics on ragged or empty input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        assert!(!rows.is_empty(), "matrix needs at least one row");
        let cols = rows[0].as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Mat::from_vec(rows.len(), cols, data)
    }

    pub fn row_vector(v: &[f64]) -> Self {
        Mat::from_vec(1, v.len(), v.to_vec())
    }

    pub fn col_ones(n: usize) -> Self {
        Mat::from_vec(n, 1, vec![1.0; n])
    }

    pub fn diag(v: &[f64]) -> Self {
        let mut m = Mat::zeros(v.len(), v.len());
        for (i, &x) in v.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// Entries of a 1×n matrix as a vector.
    pub fn into_row_vec(self) -> Vec<f64> {
        assert_eq!(self.rows, 1, "not a row vector");
        self.data
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        self.assert_same_shape(other);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// True when every entry is ≥ `-tol`.
    pub fn is_nonnegative(&self, tol: f64) -> bool {
        self.data.iter().all(|&x| x >= -tol)
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Mat {
        let mut b = Mat::zeros(rows, cols);
        for i in 0..rows {
            b.data[i * cols..(i + 1) * cols].copy_from_slice(
                &self.data[(r0 + i) * self.cols + c0..(r0 + i) * self.cols + c0 + cols],
            );
        }
        b
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Mat) {
        assert!(
            r0 + b.rows <= self.rows && c0 + b.cols <= self.cols,
            "block out of range"
        );
        for i in 0..b.rows {
            let dst = (r0 + i) * self.cols + c0;
            self.data[dst..dst + b.cols].copy_from_slice(b.row(i));
        }
    }

    pub fn add_block(&mut self, r0: usize, c0: usize, b: &Mat) {
        assert!(
            r0 + b.rows <= self.rows && c0 + b.cols <= self.cols,
            "block out of range"
        );
        for i in 0..b.rows {
            for j in 0..b.cols {
                self.data[(r0 + i) * self.cols + c0 + j] += b[(i, j)];
            }
        }
    }

    /// `self^k` by repeated squaring; `k = 0` gives the identity.
    pub fn pow(&self, mut k: u32) -> Mat {
        assert!(self.is_square());
        let mut result = Mat::identity(self.rows);
        let mut base = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                result = &result * &base;
            }
            base = &base * &base;
            k >>= 1;
        }
        result
    }

    /// `self · e`.
    pub fn times_ones(&self) -> Vec<f64> {
        self.row_sums()
    }

    fn assert_same_shape(&self, other: &Mat) {
        assert!(
            self.rows == other.rows && self.cols == other.cols,
            "shape mismatch: {}x{} vs {}x{}",
            self.rows,
            self.cols,
            other.rows,
            other.cols
        );
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<'a> Add<&'a Mat> for &'a Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        self.assert_same_shape(rhs);
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl<'a> Sub<&'a Mat> for &'a Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        self.assert_same_shape(rhs);
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl AddAssign<&Mat> for Mat {
    fn add_assign(&mut self, rhs: &Mat) {
        self.assert_same_shape(rhs);
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&Mat> for Mat {
    fn sub_assign(&mut self, rhs: &Mat) {
        self.assert_same_shape(rhs);
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

impl Neg for &Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

impl<'a> Mul<&'a Mat> for &'a Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        assert_eq!(
            self.cols, rhs.rows,
            "product shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in orow.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr<Mat> for Mat {
            type Output = Mat;
            fn $f(self, rhs: Mat) -> Mat {
                (&self).$f(&rhs)
            }
        }
        impl<'a> $tr<&'a Mat> for Mat {
            type Output = Mat;
            fn $f(self, rhs: &Mat) -> Mat {
                (&self).$f(rhs)
            }
        }
        impl<'a> $tr<Mat> for &'a Mat {
            type Output = Mat;
            fn $f(self, rhs: Mat) -> Mat {
                self.$f(&rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

/// Solve `A X = B` by Gaussian elimination with partial pivoting.
pub fn solve_linear(a: &Mat, b: &Mat) -> Result<Mat> {
    solve_linear_with(a, b, DEFAULT_PIVOT_TOL)
}

pub fn solve_linear_with(a: &Mat, b: &Mat, pivot_tol: f64) -> Result<Mat> {
    assert!(
        a.is_square(),
        "solve_linear needs a square matrix, got {}x{}",
        a.rows,
        a.cols
    );
    assert_eq!(
        a.rows, b.rows,
        "right-hand side has {} rows, expected {}",
        b.rows, a.rows
    );
    let n = a.rows;
    let m = b.cols;
    let mut lu = a.data.clone();
    let mut x = b.data.clone();

    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, lu[i * n + k].abs()))
            .fold(
                (k, -1.0),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );
        if !(pmax >= pivot_tol) {
            return Err(Error::singular("solve_linear", pmax));
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            for j in 0..m {
                x.swap(k * m + j, p * m + j);
            }
        }
        let piv = lu[k * n + k];
        for i in k + 1..n {
            let f = lu[i * n + k];
            if f == 0.0 {
                continue;
            }
            let f = f / piv;
            lu[i * n + k] = 0.0;
            for j in k + 1..n {
                let u = lu[k * n + j];
                if u != 0.0 {
                    lu[i * n + j] -= f * u;
                }
            }
            for j in 0..m {
                let u = x[k * m + j];
                if u != 0.0 {
                    x[i * m + j] -= f * u;
                }
            }
        }
    }

    for k in (0..n).rev() {
        let piv = lu[k * n + k];
        for j in 0..m {
            let mut s = x[k * m + j];
            for c in k + 1..n {
                let u = lu[k * n + c];
                if u != 0.0 {
                    s -= u * x[c * m + j];
                }
            }
            x[k * m + j] = s / piv;
        }
    }

    let out = Mat::from_vec(n, m, x);
    if !out.is_finite() {
        return Err(Error::singular("solve_linear (non-finite result)", 0.0));
    }
    Ok(out)
}

/// Solve `X A = B`, i.e. return `B A⁻¹`.
pub fn solve_right(b: &Mat, a: &Mat) -> Result<Mat> {
    Ok(solve_linear(&a.transpose(), &b.transpose())?.transpose())
}

pub fn inverse(a: &Mat) -> Result<Mat> {
    solve_linear(a, &Mat::identity(a.rows))
}

/// Row vector `x` with `x M = 0` and `x · w = 1`.
///
/// The last column of `M` is replaced by `w` and the system `x M' = (0,…,0,1)`
/// is solved; for an irreducible generator (or `P − I`) the dropped column is
/// redundant.
pub fn left_null_normalized(m: &Mat, w: &[f64]) -> Result<Vec<f64>> {
    assert!(m.is_square());
    assert_eq!(w.len(), m.rows);
    let n = m.rows;
    let mut sys = m.clone();
    for (i, &wi) in w.iter().enumerate() {
        sys[(i, n - 1)] = wi;
    }
    let mut rhs = Mat::zeros(1, n);
    rhs[(0, n - 1)] = 1.0;
    Ok(solve_right(&rhs, &sys)?.into_row_vec())
}

/// Stationary row vector of a generator (or of `P − I`).
pub fn stationary_vector(m: &Mat) -> Result<Vec<f64>> {
    left_null_normalized(m, &vec![1.0; m.rows])
}

/// Dominant eigenvalue magnitude of a nonnegative square matrix by power
/// iteration from the all-ones vector.
pub fn spectral_radius(a: &Mat, tol: f64, max_iter: usize) -> Result<f64> {
    assert!(a.is_square());
    let n = a.rows;
    let mut v = Mat::col_ones(n);
    let mut prev = f64::NAN;
    let mut last_change = f64::INFINITY;
    for _ in 0..max_iter {
        let w = a * &v;
        let est = w.max_abs();
        if est == 0.0 {
            return Ok(0.0);
        }
        if prev.is_finite() {
            last_change = (est - prev).abs() / est;
            if last_change < tol {
                return Ok(est);
            }
        }
        prev = est;
        v = w.scale(1.0 / est);
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        last_change,
    })
}

/// Upper estimate `‖A^(2^j)‖∞^(1/2^j)` used when power iteration stalls
/// (e.g. on cyclic structure).
pub fn spectral_radius_bound(a: &Mat, squarings: u32) -> f64 {
    let mut p = a.clone();
    let mut best = a.norm_inf();
    let mut log_scale = 0.0f64;
    for j in 1..=squarings {
        p = &p * &p;
        let nrm = p.norm_inf();
        if nrm == 0.0 {
            return 0.0;
        }
        // renormalise to avoid overflow or underflow across squarings
        log_scale = 2.0 * log_scale + nrm.ln();
        p = p.scale(1.0 / nrm);
        best = best.min((log_scale / 2f64.powi(j as i32)).exp());
    }
    best
}

/// Power iteration with the norm bound as fallback.
pub fn spectral_radius_or_bound(a: &Mat) -> f64 {
    spectral_radius(a, 1e-12, 20_000).unwrap_or_else(|_| spectral_radius_bound(a, 40))
}
