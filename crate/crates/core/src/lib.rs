//! Balanced two-colour urn reinforced by two competing strategies.
//!
//! At every step a coin with success probability `theta` decides who adds the
//! next balls: a history-aware player who draws a ball and keeps its colour
//! with probability `p`, or a memoryless player who picks red with probability
//! `1 - p`. Runs of memoryless steps are the urn's *memory lapses*.
//!
//! The crate is organised by concern:
//!
//! * [`urn`] — model definition, tenability checks, the one-step law, path
//!   simulation and lapse extraction.
//! * [`spectral`] — random-column laws, the mean replacement matrix and its
//!   eigen-structure, second moments, regime classification.
//! * [`limits`] — closed-form limit objects (LLN limit, diffusive and critical
//!   covariances, functional kernels, presets).
//! * [`oracle`] — exact finite-`n` law of the red count by dynamic programming.
//! * [`montecarlo`] — replicated simulation and statistical verification.
//! * [`export`] — CSV writers for the file formats consumed by tooling.

pub mod error;
pub mod export;
pub mod limits;
pub mod linalg;
pub mod montecarlo;
pub mod oracle;
pub mod prob;
pub mod rng;
pub mod spectral;
pub mod urn;

pub use error::{Result, UrnError};
pub use limits::{LimitReport, Preset};
pub use linalg::Mat2;
pub use montecarlo::{EnsembleConfig, EnsembleStats, Execution};
pub use oracle::ExactDistribution;
pub use prob::Probability;
pub use spectral::{Regime, RegimeTag, SpectralData};
pub use urn::{Model, ModelParams, ReplacementMatrix, Trajectory};
