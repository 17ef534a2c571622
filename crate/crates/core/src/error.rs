use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum FedError {
    #[error("dimension mismatch in {context}: {left} vs {right}")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    #[error("matrix {name} is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite {
        name: &'static str,
        min_eigenvalue: f64,
    },

    #[error("invalid objective specification: {0}")]
    InvalidSpec(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("label {label} outside class range 0..{classes}")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("inner maximization did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    InnerMaxNotConverged { iterations: usize, grad_norm: f64 },

    #[error("non-finite iterate at {context}, step {step}")]
    Divergence { context: &'static str, step: usize },

    #[error("missing outputs for clients {0:?}")]
    MissingClients(Vec<usize>),

    #[error("client {0} received no data points")]
    EmptyPartition(usize),

    #[error("invalid hyperparameter {field}: {reason}")]
    InvalidHyper { field: &'static str, reason: String },

    #[error("probe pair {0} has identical endpoints")]
    DegeneratePair(usize),

    #[error("no stationarity samples")]
    NoStationaritySamples,

    #[error("holdout set is empty")]
    EmptyHoldout,

    #[error("finite difference step must be positive, got {0}")]
    InvalidStep(f64),

    #[error("non-finite function value at coordinate {0}")]
    NonFiniteValue(usize),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config field {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("referenced file does not exist: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("round {round}: {source}")]
    AtRound {
        round: usize,
        #[source]
        source: Box<FedError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = FedError> = std::result::Result<T, E>;
