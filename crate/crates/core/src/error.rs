use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("enumeration of {requested} items exceeds the cap of {cap}")]
    CapExceeded { requested: String, cap: usize },

    #[error("invalid tree shape: {0}")]
    InvalidShape(String),

    #[error("invalid prefix: {0}")]
    InvalidPrefix(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid automorphism: {0}")]
    InvalidAutomorphism(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("exact equality is not decidable for rule-based kernels")]
    NotDecidable,

    #[error("no activity bound available: {0}")]
    NoActivityBound(String),

    #[error("Radon-Nikodym derivative did not stabilize within {0} levels")]
    NotStabilized(usize),

    #[error("no transporter found: {0}")]
    NotFound(String),

    #[error("element is not depth-compatible at cylinder {witness}")]
    NotDepthCompatible { witness: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("schedule search exceeded its cap: {0}")]
    ScheduleOverflow(String),

    #[error("separation not found: {0}")]
    SeparationNotFound(String),

    #[error("stage {stage} not found: {reason}")]
    StageNotFound { stage: usize, reason: String },

    #[error("condition failed: {condition} at {witness}")]
    ConditionFailed { condition: String, witness: String },

    #[error("no rigid-stabilizer element found at step {0}")]
    NoStabilizerElement(usize),

    #[error("k_eps not found below depth {0}")]
    KEpsNotFound(usize),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn cap(requested: impl ToString, cap: usize) -> Self {
        Error::CapExceeded {
            requested: requested.to_string(),
            cap,
        }
    }
}
