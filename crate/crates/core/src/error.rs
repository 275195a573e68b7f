use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected domain of size {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("record {row} has domain index {index}, outside a domain of size {size}")]
    RecordOutOfRange { row: usize, index: usize, size: usize },

    #[error("histogram has zero total mass")]
    ZeroMass,

    #[error("histogram must be integer-valued: weight {value} at index {index}")]
    NonIntegerHistogram { index: usize, value: f64 },

    #[error("bisection bracket has no sign change: {0}")]
    NoSignChange(String),

    #[error(
        "candidate space of size |X|^k = {size} exceeds the enumeration cap {cap}; \
         use a smaller domain or support size"
    )]
    EnumerationCap { size: f64, cap: u64 },

    #[error("unknown label {label:?} at row {row}, column {column:?}")]
    UnknownLabel { row: usize, column: String, label: String },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
