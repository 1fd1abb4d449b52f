use thiserror::Error;

#[derive(Debug, Error)]
pub enum CrnlError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("mode {mode} out of range for a tensor of order {order}")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Diverged { iteration: usize, loss: f64 },

    #[error("degenerate domain: dimension {dim} has zero extent")]
    DegenerateDomain { dim: usize },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CrnlError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CrnlError>;

impl CrnlError {
    pub fn shape(msg: impl Into<String>) -> Self {
        CrnlError::Shape(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        CrnlError::InvalidArgument(msg.into())
    }

    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        CrnlError::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Tags an error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        CrnlError::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
