use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("division by zero in elementwise div")]
    DivisionByZero,

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    /// Raised by neurons whose parameters are tied to the training length.
    #[error("sequence length {got} does not match the trained length {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("matrix form refused: {0}")]
    StabilityGuard(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("condition is vacuous: {0}")]
    Vacuous(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("malformed parameter container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
