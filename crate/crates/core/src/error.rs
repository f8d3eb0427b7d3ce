use thiserror::Error;

/// Errors raised across the reduction pipeline.
#[derive(Debug, Error)]
pub enum QmrError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("control value {value} for channel `{label}` is outside its coefficient domain")]
    ControlOutOfDomain { label: String, value: f64 },

    #[error("admissible control set is degenerate: {0}")]
    DegenerateControlSet(String),

    #[error("certificate failure: {0}")]
    Certificate(String),

    #[error("did not converge: {0}")]
    NotConverged(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {message}")]
    Parse { context: String, message: String },
}

impl QmrError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        QmrError::Invalid(msg.into())
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            QmrError::Certificate(_) | QmrError::Numerical(_) => 3,
            QmrError::NotConverged(_) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, QmrError>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(QmrError::DimensionMismatch { expected, got });
    }
    Ok(())
}
