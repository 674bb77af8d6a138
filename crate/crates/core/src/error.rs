use thiserror::Error;

/// Errors raised by the simulation, training and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("truncation overflow: {lost:e} of the state norm lies beyond the Fock cutoff {n_fock} (tolerance {tolerance:e})")]
    TruncationOverflow { lost: f64, n_fock: usize, tolerance: f64 },

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    #[error("forced outcome `{outcome}` has probability {probability:e}, branch is effectively impossible")]
    ImpossibleBranch { outcome: char, probability: f64 },

    #[error("branch enumeration depth {depth} exceeds the limit of {limit} half-cycles")]
    DepthLimit { depth: usize, limit: usize },

    #[error("schedule/parameter mismatch: {0}")]
    ScheduleMismatch(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown noise preset `{0}` (expected low, medium, high or custom)")]
    UnknownPreset(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
