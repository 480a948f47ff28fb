use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid label sequence: {0}")]
    InvalidLabels(String),

    #[error("invalid posterior grid: {0}")]
    InvalidGrid(String),

    /// No path of `frames` frames collapses to the target.
    #[error("no alignment of {frames} frames exists for the target (needs at least {min_frames})")]
    InfeasibleAlignment { frames: usize, min_frames: usize },

    /// The risk-weighted (or plain) path mass is exactly zero.
    #[error("objective is degenerate: the path mass is zero")]
    DegenerateObjective,

    #[error("ill-conditioned log difference for token {token} at frame {frame}")]
    NumericalCancellation { frame: usize, token: usize },

    #[error("early-emission risk needs a bias frame")]
    MissingBias,

    #[error("invalid risk spec: {0}")]
    InvalidRiskSpec(String),

    #[error("enumeration too large: {count} candidate paths exceed the limit of {limit}")]
    TooLarge { count: f64, limit: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("no hypothesis token matched the reference")]
    NoMatchedTokens,

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    DivergedLoss { epoch: usize, loss: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
