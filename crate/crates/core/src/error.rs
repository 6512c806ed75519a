use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid variance profile: {0}")]
    InvalidProfile(String),
    #[error("spectrum violates Hermitian symmetry at flat index {index} (residual {residual:e})")]
    Symmetry { index: usize, residual: f64 },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("infinite SNR at timestep {t}: mixing coefficient is exactly 1")]
    InfiniteSnr { t: usize },
    #[error("timestep {t} out of range 0..={max}")]
    TimestepOutOfRange { t: usize, max: usize },
    #[error("dataset too small: need at least {need} items, got {got}")]
    DatasetTooSmall { need: usize, got: usize },
    #[error("degenerate samples: {0}")]
    Degenerate(String),
    #[error("posterior normalizer underflowed (observation {observed} outside prior support)")]
    Underflow { observed: f64 },
    #[error("sampler diverged at step {step}")]
    SamplerDivergence { step: usize },
    #[error("training diverged at step {step} (loss {loss:e})")]
    TrainingDivergence { step: usize, loss: f64 },
    #[error("single class present; logistic regression needs both labels")]
    SingleClass,
    #[error("degenerate cross-validation fold {fold}")]
    DegenerateFold { fold: usize },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file: missing {missing} bytes")]
    Truncated { missing: usize },
    #[error("dimension overflow in header")]
    DimensionOverflow,
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
