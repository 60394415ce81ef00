use thiserror::Error;

pub type Result<T> = std::result::Result<T, IsacError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IsacError {
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),

    #[error("alphabet not normalized (mean power {mean_power}, |mean| {mean_magnitude})")]
    Unnormalized { mean_power: f64, mean_magnitude: f64 },

    #[error("invalid frame configuration: {0}")]
    InvalidFrame(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("scenario infeasible: {0}")]
    ScenarioInfeasible(String),

    #[error("oracle delay of {delay} samples outside [0, {cp_samples}]")]
    OracleDomain { delay: i64, cp_samples: usize },

    #[error("scene generation failed: {0}")]
    SceneGeneration(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}
