use thiserror::Error;

use crate::urn::Violation;

pub type Result<T, E = UrnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum UrnError {
    #[error("model violates tenability assumptions: {}", fmt_violations(.0))]
    Validation(Vec<Violation>),

    #[error("domain error: {0}")]
    Domain(String),

    /// The requested object only exists in some regimes.
    #[error("regime error: {0}")]
    Regime(String),

    #[error("eigenvector normalisation is degenerate (K - lambda2 = 0)")]
    DegenerateNormalization,

    #[error("closed-form self-check failed: {0}")]
    SelfCheck(String),

    #[error("step count {requested} exceeds oracle cap {cap}")]
    CapExceeded { requested: usize, cap: usize },

    #[error("unknown preset {0:?}")]
    UnknownPreset(String),

    #[error("thread pool: {0}")]
    ThreadPool(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl UrnError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        UrnError::Domain(msg.into())
    }

    pub(crate) fn regime(msg: impl Into<String>) -> Self {
        UrnError::Regime(msg.into())
    }
}
