use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error)]
pub enum OlmaError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("parse failure at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("channel `{0}` has zero variance in the training split")]
    ZeroVariance(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("odd length {0}: the Haar transform needs an even number of samples")]
    OddLength(usize),

    #[error("matrix is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("precondition violated: covariance has no cross-channel correlation")]
    Uncorrelated,

    #[error("treatment fully explained by confounders (residual variance {0:.3e})")]
    DegenerateTreatment(f64),

    #[error("singular regression system")]
    Singular,

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, OlmaError>;
