use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("capacity maps must be nonnegative and finite: {0}")]
    InvalidCapacity(String),

    #[error("channel {0} has zero variance; cannot standardize")]
    ZeroVariance(usize),

    #[error("expected {expected} raw maps, got {got}")]
    WrongMapCount { expected: usize, got: usize },

    #[error("image dimensions {height}x{width} not divisible by {factor}")]
    BadImageSize {
        height: usize,
        width: usize,
        factor: usize,
    },

    #[error("activation tape does not match the network configuration")]
    TapeMismatch,

    #[error("invalid network configuration: {0}")]
    BadNetConfig(String),

    #[error("checkpoint iteration {checkpoint} exceeds the budget of {budget}")]
    CheckpointOutOfRange { checkpoint: usize, budget: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("split leaves one side empty ({train} train / {test} test)")]
    DegenerateSplit { train: usize, test: usize },

    #[error("failed to place regions after {0} attempts")]
    RegionPlacement(usize),

    #[error("sample invariant violated: {0}")]
    BadSample(String),

    #[error("bad magic: expected \"CMF1\"")]
    BadMagic,

    #[error("truncated payload: expected {expected} bytes, got {got}")]
    TruncatedPayload { expected: usize, got: usize },

    #[error("dimension overflow: {0}")]
    DimensionOverflow(String),

    #[error("tensor \"{0}\" not found in container")]
    MissingTensor(String),

    #[error("unsupported PGM: {0}")]
    UnsupportedPgm(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("metric inputs have mismatched lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
