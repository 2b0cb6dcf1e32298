use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("P0 is not an orthogonal projector (residual {residual:.3e})")]
    NotAProjector { residual: f64 },

    #[error("coupling constant is zero")]
    CouplingZero,

    #[error("timescale must be positive and finite, got {0}")]
    InvalidTimescale(f64),

    #[error("von Neumann iteration did not converge after {iterations} sweeps (last increment {increment:.3e})")]
    VolterraDivergence { iterations: usize, increment: f64 },

    #[error("non-finite integrand value at node {node}")]
    IntegrandBlowup { node: f64 },

    #[error("operator is not skew-Hermitian (residual {residual:.3e})")]
    InvalidGenerator { residual: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
