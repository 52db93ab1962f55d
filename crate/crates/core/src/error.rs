use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {context} (layer {layer})")]
    NonFinite { context: String, layer: usize },

    #[error("backward already consumed this recording; re-run forward first")]
    BackwardConsumed,

    #[error("backward requires a scalar loss, got a {rows}x{cols} node")]
    NotScalar { rows: usize, cols: usize },

    #[error("communication graph is not a DAG")]
    NotADag,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
