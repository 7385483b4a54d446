use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite after {escalations} jitter escalations (last jitter {jitter:e})")]
    NotPositiveDefinite { escalations: usize, jitter: f64 },

    #[error("empty vector")]
    EmptyVector,

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("non-positive variance: {0:e}")]
    NonPositiveVariance(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("insufficient data: need at least {needed} observations, found {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("ELBO estimate became non-finite at iteration {0}")]
    DivergenceDetected(usize),

    #[error("latent dimension {index} out of range for Q = {latent_dim}")]
    DimensionOutOfRange { index: usize, latent_dim: usize },

    #[error("malformed CSV at line {line}: {message}")]
    MalformedCsv { line: u64, message: String },

    #[error("variable '{0}' has fewer than two observed categories")]
    SingletonVariable(String),

    #[error("empty file")]
    EmptyFile,

    #[error("all {0} candidate fits failed")]
    AllCandidatesFailed(usize),

    #[error("unsupported model format version {found} (this build reads version {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization failure: {0}")]
    Serialization(#[from] serde_json::Error),
}

impl Error {
    /// True for failures that originate in the numerics rather than in the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NonPositiveVariance(_)
                | Error::DivergenceDetected(_)
                | Error::AllCandidatesFailed(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
