use thiserror::Error;

/// Errors raised anywhere in the crate.
///
/// The variants map onto the CLI exit-code classes: `Config` is a caller
/// problem (exit 2); everything else is a runtime or contract failure (exit 3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation in {module}::{op}: {detail}")]
    Contract {
        module: &'static str,
        op: &'static str,
        detail: String,
    },

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: u64, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(
        module: &'static str,
        op: &'static str,
        detail: impl Into<String>,
    ) -> Self {
        Error::Contract {
            module,
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn shape(detail: impl Into<String>) -> Self {
        Error::Shape(detail.into())
    }
}
