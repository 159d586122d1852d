use thiserror::Error;

pub type Result<T> = std::result::Result<T, GrisError>;

#[derive(Debug, Error)]
pub enum GrisError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate population: all importance weights are zero")]
    DegeneratePopulation,

    #[error("matrix `{name}` is not factorizable even with jitter {max_jitter:e}")]
    NotFactorizable { name: String, max_jitter: f64 },

    #[error("zero ground-truth variance")]
    ZeroVariance,

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },

    #[error("hessian at the mode is not positive definite")]
    NotPositiveDefinite,

    #[error("{path}:{line}: {msg}")]
    Ingest { path: String, line: usize, msg: String },

    #[error("misaligned checkpoints: {0}")]
    Misaligned(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
