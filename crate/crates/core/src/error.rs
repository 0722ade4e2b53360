use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("dimension {dim} = {size} is not divisible by codec factor {factor}")]
    NotDivisible {
        dim: &'static str,
        size: usize,
        factor: usize,
    },

    #[error("latent has {actual} channels, codec expects {expected}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid step indices: t={t}, t_prev={t_prev} (need t_prev < t <= {max})")]
    InvalidStep { t: usize, t_prev: usize, max: usize },

    #[error("out-of-vocabulary token {token:?} in prompt {prompt:?}")]
    UnknownToken { token: String, prompt: String },

    #[error("prompt {prompt:?} does not follow the scene grammar: {reason}")]
    Grammar { prompt: String, reason: String },

    #[error("flow magnitude must be non-negative and finite, got {0}")]
    NegativeMagnitude(f64),

    #[error("{path}:{line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },

    #[error("duplicate task id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("no foreground region found in video")]
    NoForeground,

    #[error("scene leaves the frame: {0}")]
    SceneOutOfBounds(String),

    #[error("vote count must be odd and at least 1, got {0}")]
    EvenVoteCount(usize),

    #[error("comparison {0:?} is missing a score for metric {1}")]
    MissingScore(String, String),

    #[error("spearman correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("embedding dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },

    #[error("edit failed: {0}")]
    Editor(String),

    #[error("bad container {path}: {message}")]
    Container { path: PathBuf, message: String },

    #[error("missing edit output for task {0}")]
    MissingEdit(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("png error: {0}")]
    Png(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(context: &'static str, expected: &[usize], actual: &[usize]) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }
}
