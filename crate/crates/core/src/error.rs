use thiserror::Error;

/// Errors produced by the numerical laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("rejected input: {0}")]
    InvalidInput(String),

    #[error("Hermitian symmetry violated: max defect {defect:.3e} exceeds tolerance {tolerance:.1e}")]
    HermitianViolation { defect: f64, tolerance: f64 },

    #[error("block index {j} outside admissible range [{lo}, {hi}]")]
    BlockOutOfRange { j: i32, lo: i32, hi: i32 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("matrix exponential overflow (1-norm of scaled argument {scale:.3e})")]
    Overflow { scale: f64 },

    #[error("exponent tuple violates the balance relation (residual {residual:.3e})")]
    BalanceViolation { residual: f64 },

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("evolution aborted at step {step} (t = {time}): {reason}")]
    Aborted {
        step: usize,
        time: f64,
        reason: String,
    },

    #[error("model descriptor: {0}")]
    Descriptor(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
