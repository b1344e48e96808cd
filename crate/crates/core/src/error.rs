use thiserror::Error;

use crate::filtering::FilterTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("patch too sparse: {found} neighbors, at least {required} required")]
    PatchTooSparse { found: usize, required: usize },

    #[error("degenerate patch: {0}")]
    DegeneratePatch(String),

    #[error("patch holds no points")]
    ZeroPatch,

    #[error("no keypoint produced a descriptor")]
    NoDescriptors,

    #[error("too few correspondences: {found}, at least {required} required")]
    TooFewCorrespondences { found: usize, required: usize },

    #[error("too many correspondences: {found} exceeds the cap of {cap}")]
    TooManyCorrespondences { found: usize, cap: usize },

    #[error("degenerate estimation problem: {0}")]
    EstimationDegenerate(String),

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("synthetic pair spec too aggressive: {0}")]
    SpecTooAggressive(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    /// Carries whatever filtering completed before the failure.
    #[error("registration failed after {} filter layers: {reason}", trace.layers.len())]
    RegistrationFailed {
        reason: String,
        trace: Box<FilterTrace>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// Innermost error once stage wrappers are peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
