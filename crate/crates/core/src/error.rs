use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(
        "shift of {requested} is not a multiple of the grid step {grid_step} (nearest slot residual {residual:e})"
    )]
    SubGridShift {
        requested: f64,
        grid_step: f64,
        residual: f64,
    },

    #[error("state escaped radius {radius} after {step} steps (|x| = {norm:e})")]
    Blowup { step: u64, norm: f64, radius: f64 },

    #[error("non-finite value in {what} at s = {s}")]
    NonFinite { what: &'static str, s: f64 },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("gap threshold {threshold:e} is below the cloud noise floor {noise_floor:e}")]
    IllPosedClustering { threshold: f64, noise_floor: f64 },

    #[error("branch count mismatch: strip {strip} has {got} branches, expected {expected}")]
    BranchCountMismatch { strip: usize, expected: usize, got: usize },

    #[error("ambiguous continuation in strip {strip} at bin {bin}")]
    AmbiguousContinuation { strip: usize, bin: usize },

    #[error("continuity violated in strip {strip} at bin {bin}: jump {jump:e} > {threshold:e}")]
    ContinuityViolation {
        strip: usize,
        bin: usize,
        jump: f64,
        threshold: f64,
    },

    #[error("no unique overlap match between strips {from} and {to} (best sup distance {best:e})")]
    StitchFailure { from: usize, to: usize, best: f64 },

    #[error("curve count mismatch: {now} curves at the base point, {previous} at the shifted base point")]
    CurveCountMismatch { now: usize, previous: usize },

    #[error("incompatible runs: {0}")]
    Incompatible(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
