use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Variants are grouped so a front end can map them onto exit codes:
/// configuration/argument problems, data problems and numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("ingest error at {path}:{line}: {message}")]
    Ingest {
        path: String,
        line: usize,
        message: String,
    },

    #[error("basis fit error: {0}")]
    BasisFit(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("initialization error: {message}\n{dump}")]
    Initialization { message: String, dump: String },

    #[error("elicitation error: {0}")]
    Elicitation(String),

    #[error("diagnostic undefined: {0}")]
    Diagnostic(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Broad failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Argument(_) | Error::Json(_) => ErrorClass::Usage,
            Error::Data(_) | Error::Ingest { .. } | Error::Io(_) | Error::Csv(_) => {
                ErrorClass::Data
            }
            Error::Precondition(_)
            | Error::BasisFit(_)
            | Error::Evaluation(_)
            | Error::Initialization { .. }
            | Error::Elicitation(_)
            | Error::Diagnostic(_) => ErrorClass::Numerical,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
