use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("already gray")]
    AlreadyGray,

    #[error("expected {expected} channel(s), got {got}")]
    ChannelCount { expected: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("intensity {value} at index {index} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("empty input")]
    EmptyInput,

    #[error("degenerate mask")]
    DegenerateMask,

    #[error("degenerate channel {0}")]
    DegenerateChannel(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown hair-removal hook `{0}`")]
    UnknownHook(String),

    #[error("hook `{hook}` failed: {reason}")]
    HookFailed { hook: String, reason: String },

    #[error("no salient object")]
    NoSalientObject,

    #[error("non-finite feature at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },

    #[error("insufficient training data: {0}")]
    InsufficientData(String),

    #[error("unstable level-set parameters: mu * dt = {0} (must be < 0.25)")]
    UnstableParams(f64),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
