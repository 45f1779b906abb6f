//! Tail-probability series shared by every solver.

use std::fmt;

/// Which route produced a [`TailSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    MatrixGeometric,
    UlRg,
    LuRg,
    MatrixProduct,
    MatrixIterative,
    Recursion,
    Series,
    ClosedForm,
    Oracle,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::MatrixGeometric => "matrix-geometric",
            Method::UlRg => "ul-rg",
            Method::LuRg => "lu-rg",
            Method::MatrixProduct => "matrix-product",
            Method::MatrixIterative => "matrix-iterative",
            Method::Recursion => "recursion",
            Method::Series => "series",
            Method::ClosedForm => "closed-form",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Named diagnostic values attached to a series: truncation depths, the
/// norm of the last retained term, identity residuals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TruncationReport {
    pub entries: Vec<(String, f64)>,
}

impl TruncationReport {
    pub fn push(&mut self, label: impl Into<String>, value: f64) {
        self.entries.push((label.into(), value));
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, v)| *v)
    }
}

/// `π_1..π_K` with `π_k = Σ_{j≥k} x_j`, plus the boundary vector `x_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailSeries {
    pub pis: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    pub method: Method,
    pub report: TruncationReport,
}

impl TailSeries {
    pub fn new(pis: Vec<Vec<f64>>, x0: Vec<f64>, method: Method) -> Self {
        TailSeries {
            pis,
            x0,
            method,
            report: TruncationReport::default(),
        }
    }

    /// Number of levels carried (`K`).
    pub fn len(&self) -> usize {
        self.pis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pis.is_empty()
    }

    /// `π_k` for `k ≥ 1`.
    pub fn pi(&self, k: usize) -> &[f64] {
        assert!(k >= 1, "tail vectors are indexed from 1");
        &self.pis[k - 1]
    }

    /// Stationary level vector `x_k = π_k − π_{k+1}` for `1 ≤ k < K`.
    pub fn level_mass(&self, k: usize) -> Vec<f64> {
        self.pi(k)
            .iter()
            .zip(self.pi(k + 1))
            .map(|(a, b)| a - b)
            .collect()
    }

    /// Largest elementwise gap over the first `upto` levels.
    pub fn max_abs_diff(&self, other: &TailSeries, upto: usize) -> f64 {
        let n = upto.min(self.len()).min(other.len());
        let mut d: f64 = 0.0;
        for k in 0..n {
            assert_eq!(self.pis[k].len(), other.pis[k].len(), "phase counts differ");
            for (a, b) in self.pis[k].iter().zip(&other.pis[k]) {
                d = d.max((a - b).abs());
            }
        }
        d
    }

    /// `π_k ≥ π_{k+1} − tol` elementwise for every stored pair.
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.pis
            .windows(2)
            .all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| *a >= b - tol))
    }

    /// `x_0 · e + π_1 · e`, which is 1 for a stationary distribution.
    pub fn total_mass(&self) -> f64 {
        let x0: f64 = self.x0.iter().sum();
        x0 + self.pis.first().map_or(0.0, |p| p.iter().sum())
    }
}
