//! Stationary and tail-probability vectors for structured Markov chains.
//!
//! For a chain on levels `0, 1, 2, …` with stationary level vectors `x_k`,
//! the tail vectors are `π_k = Σ_{j≥k} x_j`. The crate computes them for
//! level-independent and level-dependent QBD processes and for GI/M/1- and
//! M/G/1-type chains, with several routes per class so that results can be
//! cross-checked, plus a brute-force truncation oracle.

pub mod cli;
pub mod error;
pub mod ldqbd;
pub mod matkernel;
pub mod modelfile;
pub mod models;
pub mod oracle;
pub mod qbd;
pub mod skipfree;
pub mod tails;

pub use error::{Error, Result};
pub use matkernel::Mat;
pub use tails::{Method, TailSeries, TruncationReport};
