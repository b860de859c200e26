use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature needs {requested} nodes but the budget is {budget}; lower nodes-per-axis or dimension")]
    NodeBudgetExceeded { requested: u128, budget: usize },

    #[error("hermite6 delta {delta} is outside [0, {threshold:.6}): the density 1 + δ·He₆ would be negative")]
    PositivityViolation { delta: f64, threshold: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The moment assumption fails, so the stability bound does not apply.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("numerical conditioning: {0}")]
    Conditioning(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parse error at `{token}`: {message}")]
    Parse { token: String, message: String },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Hypothesis(_) => 2,
            Error::Conditioning(_) => 3,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
