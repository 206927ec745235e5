use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("matrix is not Hermitian (max |R - R^H| = {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("system stayed singular after regularization up to {max_regularization:e}")]
    Singular { max_regularization: f64 },

    #[error("statistics not ready: {0}")]
    NotReady(&'static str),

    #[error("unknown algorithm identifier `{0}`")]
    UnknownAlgorithm(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
