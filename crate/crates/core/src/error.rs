use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: u64,
        message: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("non-finite loss on unit `{unit}`")]
    NonFinite { unit: String },
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged {
        epoch: usize,
        loss: f64,
        train_trace: Vec<f64>,
        val_trace: Vec<f64>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(source_name: &str, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    /// Whether this error stems from bad input data (as opposed to bad usage).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::Domain(_)
                | Error::Parameter(_)
                | Error::NonFinite { .. }
                | Error::Diverged { .. }
        )
    }
}
