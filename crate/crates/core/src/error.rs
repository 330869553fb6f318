//! Error types shared by the solver crates.

use thiserror::Error;

/// Failure modes of grid construction, field algebra and time stepping.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: left is n={left_n}, L={left_l}; right is n={right_n}, L={right_l}")]
    GridMismatch {
        left_n: usize,
        left_l: f64,
        right_n: usize,
        right_l: f64,
    },

    #[error("singular symbol: {0}")]
    SingularSymbol(String),

    #[error("field is flagged complex-valued, expected real-valued: {0}")]
    NotRealValued(String),

    #[error("initial data rejected: {0}")]
    BadData(String),

    #[error("time step rejected: {0}")]
    BadStep(String),

    #[error("solution blew up at t={t:.6}: {detail}")]
    Blowup { t: f64, detail: String },

    #[error("diagnostics error: {0}")]
    Diagnostics(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
