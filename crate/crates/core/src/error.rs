use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("shape mismatch for {what}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        what: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite gradient in tensor `{0}`")]
    NonFiniteGradient(String),
    #[error("forward cache does not match the parameters: {0}")]
    StaleCache(String),
    #[error("unknown task id `{0}`")]
    UnknownTask(String),
    #[error("action {action} is not in the action set of {task}")]
    InvalidAction { task: String, action: usize },
    #[error("replay buffer holds {size} transitions, cannot sample {requested}")]
    UndersizedBuffer { size: usize, requested: usize },
    #[error("replay slot {index} out of range (size {size})")]
    SlotOutOfRange { index: usize, size: usize },
    #[error("head of the source network does not cover task {0}")]
    IncompatibleHead(String),
    #[error("missing provenance labels: {0}")]
    MissingProvenance(String),
    #[error("checkpoint tensor `{tensor}`: {reason}")]
    CorruptTensor { tensor: String, reason: String },
    #[error("checkpoint manifest: {0}")]
    Manifest(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("io error at {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config error: {0}")]
    Config(String),
}

impl LabError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        LabError::InvalidArgument(msg.into())
    }
}
