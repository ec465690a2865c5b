//! One-pass spectral sketching of huge PSD matrices with sparse eigenvector
//! recovery.
//!
//! The pipeline: compress an N x N Hermitian PSD matrix `A` into a small
//! m x m sketch `M A M*` in a single pass over its entries (or columns, or
//! low-rank factors), eigendecompose the sketch, then invert the measurement
//! operator `M` on each top eigenvector with a compressive-sensing decoder to
//! recover the sparse eigenvectors of `A` without ever holding `A` in memory.
//!
//! Modules follow the pipeline stages: [`measure`] builds the measurement
//! ensembles, [`stream`] accumulates sketches, [`eig`] decomposes them,
//! [`decode`] inverts measurements, [`synth`] generates planted test
//! matrices, [`metrics`] scores recoveries, and [`cli`] orchestrates the
//! experiment commands.

pub mod cli;
pub mod config;
pub mod decode;
pub mod eig;
pub mod measure;
pub mod metrics;
pub mod stream;
pub mod synth;

use thiserror::Error;

/// Crate-wide error type. Variants map to CLI exit-code classes.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or configuration.
    #[error("config: {0}")]
    Config(String),
    /// I/O failure or malformed file contents.
    #[error("io: {0}")]
    Io(String),
    /// Numerical failure (non-convergence, singular subproblem, ...).
    #[error("numeric: {0}")]
    Numeric(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
