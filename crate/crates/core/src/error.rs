use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("frame matrix is rank deficient (smallest/largest singular value = {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("invalid Gabor lattice: {0}")]
    InvalidLattice(String),

    #[error("block {index} is not orthonormal (max deviation {deviation:.3e})")]
    NotOrthonormal { index: usize, deviation: f64 },

    #[error("invalid length: {0}")]
    InvalidLength(String),

    #[error("unknown signal `{0}`")]
    UnknownSignal(String),

    #[error("signal has zero standard deviation")]
    DegenerateSignal,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("requested samples {start}..{end} exceed available {available}")]
    OutOfRange { start: usize, end: usize, available: usize },

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("universal threshold needs N >= 3, got {0}")]
    InvalidN(usize),

    #[error("weights sum to {0}, not 1")]
    WeightSumViolation(f64),

    #[error("all prior weights are zero")]
    AllZeroPrior,

    #[error("second-derivative term d is required for this rule")]
    GradientMissing,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("replicate {index} failed: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn dims(expected: usize, got: usize) -> Self {
        Error::DimensionMismatch { expected, got }
    }

    /// True for errors that stem from numerical trouble rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::RankDeficient { .. } | Error::SolveFailure(_) => true,
            Error::Replicate { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::dims(expected, got))
    }
}
