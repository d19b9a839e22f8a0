//! Spectral densities of self-adjoint polynomials in two free random
//! variables, computed through linearization and operator-valued
//! subordination, together with random-matrix experiments that test the
//! predictions at finite dimension.
//!
//! The pipeline:
//!
//! 1. [`ncpoly`] — noncommutative *-polynomials in two self-adjoint letters.
//! 2. [`linearize`] — self-adjoint linear pencils whose corner resolvent
//!    reproduces the polynomial's resolvent.
//! 3. [`spectra`] — scalar measures, Cauchy transforms, Lévy distance.
//! 4. [`subordination`] — matrix-valued subordination solver (fixed point +
//!    Newton) and density curves.
//! 5. [`rmt`] — finite-dimensional ensembles: Haar sampling, resolvent
//!    statistics, eigenvalue window counts, eigenvector localization.
//! 6. [`cli`] — configuration, validation, and report output for the binary.

pub mod cli;
pub mod linalg;
pub mod linearize;
pub mod ncpoly;
pub mod rmt;
pub mod spectra;
pub mod subordination;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Input text failed to parse; `pos` is a 0-based byte offset.
    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    /// Matrix arguments with incompatible or invalid shapes.
    #[error("dimension mismatch: {0}")]
    Dim(String),
    /// A self-adjoint input was required.
    #[error("{0}")]
    NotSelfAdjoint(String),
    /// A measure definition violated its invariants.
    #[error("invalid measure: {0}")]
    Measure(String),
    /// An iterative solver failed to converge.
    #[error("solver failed: {0}")]
    Solver(String),
    /// Invalid run configuration.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// Underlying linear-algebra backend failure.
    #[error("linear algebra error: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Convenient result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
