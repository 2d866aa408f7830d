use thiserror::Error;

/// Errors raised by the reduction library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The exact solver refused an instance larger than its enumeration budget.
    #[error(
        "exact solver budget exceeded (m = {models}, k = {k}; limits m <= {max_models}, k <= {max_k}); use the greedy variant instead"
    )]
    BudgetExceeded {
        models: usize,
        k: usize,
        max_models: usize,
        max_k: usize,
    },

    #[error("singular normal equations: {0}; raise the ridge penalty lambda")]
    Singular(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BudgetExceeded { .. } | Error::Infeasible(_) | Error::Singular(_) => 2,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
