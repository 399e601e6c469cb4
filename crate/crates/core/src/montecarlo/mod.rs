//! Replicated simulation and the statistical checks built on it.
//!
//! Replicate `i` always draws from stream `i` of the master seed, and
//! replicates are grouped into fixed-size chunks that are merged in index
//! order. Results therefore do not depend on the worker count or on the
//! `parallel` feature.

mod accumulate;
mod ensemble;
mod lapses;
mod verify;

pub use accumulate::{CoMoments, Moments};
pub use ensemble::{
    final_reds, run_ensemble, Centering, CrossTimeCov, EnsembleConfig, EnsembleFlag, EnsembleStats, Execution,
    SampleRow, StandardizedMoments, DEFAULT_CHUNK,
};
pub use lapses::{geometric_gof, lapse_statistics, lapse_statistics_from, GoodnessOfFit, LapseHistogram, LapseStatistics};
pub use verify::{
    calibrate_kappa, verify_clt, verify_fclt, verify_lln, CltVerdict, FcltPairVerdict, FcltVerdict, KappaCalibration,
    KappaFlag, KappaPoint, KappaSource, LlnVerdict, TIndependence, TargetBasis, Thresholds,
};
