use thiserror::Error;

/// Errors produced anywhere in the sensing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scenario sampling failed: {0}")]
    Scenario(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not numerically positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("non-finite value in {what} at VI iteration {iteration}")]
    NonFinite { iteration: usize, what: String },

    #[error("unknown preset `{0}` (expected one of fig2, fig3, fig4, table1, smoke)")]
    UnknownPreset(String),

    #[error("malformed container: {0}")]
    Format(String),

    #[error("unsupported {kind} version {found} (this build reads version {expected})")]
    Version {
        kind: &'static str,
        found: u32,
        expected: u32,
    },

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
