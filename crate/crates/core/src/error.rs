use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dialogue `{dialogue_id}`: field `{field}`: {message}")]
    Invariant {
        dialogue_id: String,
        field: String,
        message: String,
    },

    #[error("dialogue `{dialogue_id}` turn {index}: no annotations (turn is unlabeled)")]
    Unlabeled { dialogue_id: String, index: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("feature schema mismatch: model expects {expected:016x}, got {actual:016x}")]
    SchemaMismatch { expected: u64, actual: u64 },

    #[error(
        "training diverged at epoch {epoch} (loss {loss:.4e} vs initial {initial:.4e}); \
         try a lower learning rate"
    )]
    Diverged { epoch: usize, loss: f64, initial: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Usage/configuration problems, as opposed to bad input data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
