use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),

    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    /// Every particle weight vanished during a Bayes update, even after the
    /// bridged retry.
    #[error("degenerate update: all {particles} likelihoods underflowed (tempering steps tried: {steps})")]
    DegenerateUpdate { particles: usize, steps: usize },

    #[error("gave up after {attempts} attempts drawing a valid {what}")]
    RedrawExhausted { what: &'static str, attempts: usize },

    #[error("prior is inconsistent: {0}")]
    InconsistentPrior(String),

    #[error("checkpoint format: {0}")]
    Serialization(#[from] serde_json::Error),

    #[error("unsupported cloud file version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
}
