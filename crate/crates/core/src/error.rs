use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at data row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("evaluation infeasible: {0}")]
    EvaluationInfeasible(String),

    #[error("audit infeasible: {0}")]
    AuditInfeasible(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
