use thiserror::Error;

/// Errors raised anywhere in the model, calibration and pricing pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MrsError {
    /// A caller supplied an argument outside the operation's domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An estimation procedure could not produce a usable fit.
    #[error("fit failed: {message}")]
    Fit {
        message: String,
        /// Best objective value reached before giving up, when one exists.
        best_objective: Option<f64>,
    },

    /// EM calibration failed on the supplied data.
    #[error("calibration failed: {0}")]
    Calibration(String),

    /// A numerical invariant was violated. Indicates a bug, not bad input.
    #[error("internal error: {0}")]
    Internal(String),

    /// Malformed input file or artifact.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl MrsError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        MrsError::Argument(msg.into())
    }

    pub(crate) fn fit(msg: impl Into<String>) -> Self {
        MrsError::Fit {
            message: msg.into(),
            best_objective: None,
        }
    }
}

impl From<std::io::Error> for MrsError {
    fn from(e: std::io::Error) -> Self {
        MrsError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, MrsError>;
