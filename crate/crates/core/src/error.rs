use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while building, reading or validating meshes.
#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh level must be at least 1, got {0}")]
    InvalidLevel(u32),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("triangle {triangle}: {message}")]
    Topology { triangle: usize, message: String },
    #[error("mesh is inconsistent: {0}")]
    Invalid(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Errors from sparse assembly and direct factorizations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("sparse matrix construction failed: {0}")]
    Construction(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("linear solve produced non-finite values (singular matrix)")]
    Singular,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Field/mesh consistency errors and invalid arguments.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("fields live on different meshes")]
    MeshMismatch,
    #[error("discretization mismatch: expected {expected}, got {got}")]
    TagMismatch {
        expected: &'static str,
        got: &'static str,
    },
    #[error("value {value} outside [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Solver(#[from] crate::solver::SolverError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
