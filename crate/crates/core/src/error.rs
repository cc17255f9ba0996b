//! Error taxonomy shared across the engine.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible shapes; carries both offending shapes.
    #[error("dimension mismatch in {context}: {left} vs {right}")]
    Dimension {
        context: String,
        left: String,
        right: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("unsupported format version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("batch error: {0}")]
    Batch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn dimension(context: impl Into<String>, left: impl ToString, right: impl ToString) -> Self {
        Error::Dimension {
            context: context.into(),
            left: left.to_string(),
            right: right.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
