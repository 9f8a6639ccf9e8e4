use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimensions or lengths of two values that must agree do not.
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: String, got: String },
    /// The caller asked for something the contract does not allow.
    #[error("usage error: {0}")]
    Usage(String),
    /// Input data is missing, inconsistent or malformed.
    #[error("data error: {0}")]
    Data(String),
    /// A current position outside every trained bank.
    #[error("position m={m} is outside model coverage ({layout})")]
    Coverage { m: usize, layout: String },
    #[error("numerical error: {0}")]
    Numeric(String),
    #[error("csv error at row {row}: {msg}")]
    CsvRow { row: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(what: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::Shape {
        what,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
