//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("unknown node id {0}")]
    UnknownNode(u32),

    #[error("vocabulary error: {0}")]
    Vocabulary(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("{attack} does not support scenario {scenario}")]
    UnsupportedScenario { attack: String, scenario: String },

    #[error("trajectory generation stalled after {restarts} restarts")]
    GenerationStalled { restarts: usize },

    #[error("llm transport error: {0}")]
    LlmTransport(String),

    #[error("llm parse error: {msg}; raw response: {raw:?}")]
    LlmParse { msg: String, raw: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attach a pipeline stage label, preserving the root cause.
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad configuration or malformed input
    /// documents (CLI exit code 2); everything else is a runtime failure
    /// (exit code 1).
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Parse { .. } => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
