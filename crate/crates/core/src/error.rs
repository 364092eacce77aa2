use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid label `{label}` for {scheme} scheme")]
    InvalidLabel { label: String, scheme: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("scheme mismatch: {left} vs {right}")]
    SchemeMismatch { left: String, right: String },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown personality trait `{0}`")]
    InvalidTrait(String),

    #[error("unknown item type `{0}`")]
    InvalidType(String),

    #[error("could not parse a vote from response {0:?}")]
    UnparseableResponse(String),

    #[error("vote collection failed for item `{item_id}` ({style}, slot {slot}): {reason}")]
    CollectionFailure {
        item_id: String,
        style: String,
        slot: usize,
        reason: String,
    },

    #[error("backend error{}: {message}", item_id.as_ref().map(|i| format!(" on item `{i}`")).unwrap_or_default())]
    Backend {
        item_id: Option<String>,
        message: String,
    },

    #[error("generation failed at call {call_index}: {message}")]
    Generation { call_index: usize, message: String },

    #[error("GA configuration error: {0}")]
    GaConfig(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unpaired responses: {0:?}")]
    Pairing(Vec<String>),

    #[error("model not ready: {0}")]
    NotReady(&'static str),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error{}: {source}", location.as_ref().map(|l| format!(" at {l}")).unwrap_or_default())]
    Json {
        location: Option<String>,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(source: serde_json::Error) -> Self {
        Error::Json {
            location: None,
            source,
        }
    }
}
