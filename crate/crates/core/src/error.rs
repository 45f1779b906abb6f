use thiserror::Error;

/// Failure modes shared by every solver in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("singular matrix in {context} (pivot {pivot:.3e})")]
    SingularMatrix { context: String, pivot: f64 },

    #[error("no convergence after {iterations} iterations (last change {last_change:.3e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("chain is not positive recurrent: spectral radius {spectral_radius:.12}")]
    Unstable { spectral_radius: f64 },

    #[error("drift {drift:.3e} is within the near-critical band")]
    NearCritical { drift: f64 },

    #[error("model is reducible: {0}")]
    Reducible(String),

    #[error("truncation failed after {terms} terms (last term norm {bound:.3e})")]
    TruncationFailure { terms: usize, bound: f64 },

    #[error("series diverges: partial sums unsettled after {terms} terms")]
    Divergent { terms: usize },

    #[error("ODE step left the unit interval at t = {time} (u_{level} = {value})")]
    StepUnstable { time: f64, level: usize, value: f64 },

    #[error("truncated system of {size} unknowns exceeds the limit of {limit}")]
    SizeLimit { size: usize, limit: usize },

    #[error("stationarity check failed: residual {residual:.3e}")]
    StationarityCheck { residual: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),
}

impl Error {
    pub(crate) fn singular(context: impl Into<String>, pivot: f64) -> Self {
        Error::SingularMatrix {
            context: context.into(),
            pivot,
        }
    }

    /// Re-label a singular-matrix error with the solver stage that hit it.
    pub(crate) fn in_context(self, context: impl Into<String>) -> Self {
        match self {
            Error::SingularMatrix { pivot, .. } => Error::SingularMatrix {
                context: context.into(),
                pivot,
            },
            other => other,
        }
    }

    /// Short machine-friendly name used by the CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::SingularMatrix { .. } => "SingularMatrix",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::Unstable { .. } => "Unstable",
            Error::NearCritical { .. } => "NearCritical",
            Error::Reducible(_) => "Reducible",
            Error::TruncationFailure { .. } => "TruncationFailure",
            Error::Divergent { .. } => "Divergent",
            Error::StepUnstable { .. } => "StepUnstable",
            Error::SizeLimit { .. } => "SizeLimit",
            Error::StationarityCheck { .. } => "StationarityCheck",
            Error::InvalidModel(_) => "InvalidModel",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
