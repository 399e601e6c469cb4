use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lapse_urn::montecarlo::Thresholds;
use lapse_urn::{Execution, Probability};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "lapse-urn", version, about = "Two-colour urn with memory lapses: simulation, exact laws, limits and checks")]
pub struct Cli {
    /// Plain-text `key = value` file of extra flags; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one path and write it as CSV (`n,R,B,T,y,column`) or JSON.
    Simulate(SimulateArgs),
    /// Exact law of R_n by dynamic programming.
    Exact(ExactArgs),
    /// Closed-form limit objects for one parameter point.
    Limits(LimitsArgs),
    /// Replicated simulation checked against the closed forms.
    #[command(subcommand)]
    Verify(Box<VerifyCommand>),
    /// Regime of every point of a (p, theta) grid, with the critical curve.
    Phase(PhaseArgs),
}

#[derive(Debug, Subcommand)]
pub enum VerifyCommand {
    /// Mean red proportion against its almost-sure limit.
    Lln(EnsembleCmd),
    /// Final scaled variance against the limiting variance.
    Clt(CltArgs),
    /// Scaled cross-time covariances against the limiting kernel.
    Fclt(FcltArgs),
    /// Memory-lapse lengths against the geometric law.
    Lapses(LapsesArgs),
    /// Ratio of scaled variance to the covariance entry across parameter points.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Sign-corrected covariance, exponent lambda2/lambda1.
    Calibrated,
    /// The printed covariance and exponent, scaled by kappa.
    Paper,
}

/// Replacement matrix: a preset or all four entries.
#[derive(Debug, Clone, Args)]
pub struct MatrixArgs {
    /// krw, a3c1, a2c0 or pure (with --K); `pure(3)` also works.
    #[arg(long, alias = "family", conflicts_with_all = ["a", "b", "c", "d"])]
    pub preset: Option<String>,
    /// Balls per step of the `pure` preset.
    #[arg(long = "K", value_name = "K")]
    pub k: Option<i64>,
    /// Red balls added by the R-column.
    #[arg(long, allow_hyphen_values = true, requires_all = ["b", "c", "d"])]
    pub a: Option<i64>,
    /// Black balls added by the R-column.
    #[arg(long, allow_hyphen_values = true, requires_all = ["a", "c", "d"])]
    pub b: Option<i64>,
    /// Red balls added by the B-column.
    #[arg(long, allow_hyphen_values = true, requires_all = ["a", "b", "d"])]
    pub c: Option<i64>,
    /// Black balls added by the B-column.
    #[arg(long, allow_hyphen_values = true, requires_all = ["a", "b", "c"])]
    pub d: Option<i64>,
}

/// A full parameter point.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub matrix: MatrixArgs,
    /// Memory parameter; decimals and fractions such as 3/4 are kept exact.
    #[arg(long, allow_hyphen_values = true)]
    pub p: Option<Probability>,
    /// Probability that the history-aware player acts.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<Probability>,
    /// Initial red balls.
    #[arg(long = "R0", default_value_t = 1, allow_hyphen_values = true)]
    pub r0: i64,
    /// Initial black balls.
    #[arg(long = "B0", default_value_t = 1, allow_hyphen_values = true)]
    pub b0: i64,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output file; standard output when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Output format (defaults depend on the command).
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct SeedArgs {
    /// Master seed; replicate i uses stream i.
    #[arg(long, env = "LAPSE_URN_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct WorkerArgs {
    /// Worker threads; never changes results. Defaults to all cores.
    #[arg(long)]
    pub workers: Option<usize>,
}

impl WorkerArgs {
    pub fn execution(&self) -> Result<Execution, String> {
        match self.workers {
            None => Ok(Execution::Auto),
            Some(0) => Err("--workers must be at least 1".into()),
            Some(w) => Ok(Execution::with_workers(w)),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of steps.
    #[arg(long)]
    pub n: u64,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ExactArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of steps.
    #[arg(long)]
    pub n: u64,
    /// Exact rational arithmetic (needs exact p and theta; small n only).
    #[arg(long)]
    pub rational: bool,
    /// Largest n accepted.
    #[arg(long, default_value_t = lapse_urn::oracle::DEFAULT_CAP)]
    pub cap: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct LimitsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PhaseArgs {
    #[command(flatten)]
    pub matrix: MatrixArgs,
    /// Grid points per axis on [0, 1].
    #[arg(long, default_value_t = 101)]
    pub grid: u32,
    /// Only the critical curve (`theta,p_critical`).
    #[arg(long)]
    pub curve: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

/// Statistical tolerances; every default can be overridden.
#[derive(Debug, Clone, Args)]
pub struct ThresholdArgs {
    /// Standard errors allowed between mean proportion and its limit.
    #[arg(long)]
    pub lln_se: Option<f64>,
    /// Finite-n drift allowance in units of K/T_n.
    #[arg(long)]
    pub lln_bias: Option<f64>,
    /// Relative tolerance of the diffusive variance.
    #[arg(long)]
    pub clt_rel: Option<f64>,
    /// Relative tolerance of the critical variance.
    #[arg(long)]
    pub clt_critical_rel: Option<f64>,
    /// Largest |skewness| accepted.
    #[arg(long)]
    pub max_skewness: Option<f64>,
    /// Largest |excess kurtosis| accepted.
    #[arg(long)]
    pub max_kurtosis: Option<f64>,
    /// Replicates from which the moment windows apply.
    #[arg(long)]
    pub normality_min_replicates: Option<u64>,
    /// Relative tolerance of cross-time covariances.
    #[arg(long)]
    pub fclt_rel: Option<f64>,
    /// Standard errors allowed between covariances that should not depend on t.
    #[arg(long)]
    pub t_independence_se: Option<f64>,
    /// Two-sided confidence of kappa intervals.
    #[arg(long)]
    pub kappa_confidence: Option<f64>,
    /// Share of points whose interval must contain K.
    #[arg(long)]
    pub kappa_min_share: Option<f64>,
}

impl ThresholdArgs {
    pub fn resolve(&self) -> Thresholds {
        let d = Thresholds::default();
        Thresholds {
            lln_se: self.lln_se.unwrap_or(d.lln_se),
            lln_bias: self.lln_bias.unwrap_or(d.lln_bias),
            clt_diffusive_rel: self.clt_rel.unwrap_or(d.clt_diffusive_rel),
            clt_critical_rel: self.clt_critical_rel.unwrap_or(d.clt_critical_rel),
            max_abs_skewness: self.max_skewness.unwrap_or(d.max_abs_skewness),
            max_abs_excess_kurtosis: self.max_kurtosis.unwrap_or(d.max_abs_excess_kurtosis),
            normality_min_replicates: self.normality_min_replicates.unwrap_or(d.normality_min_replicates),
            fclt_rel: self.fclt_rel.unwrap_or(d.fclt_rel),
            t_independence_se: self.t_independence_se.unwrap_or(d.t_independence_se),
            kappa_confidence: self.kappa_confidence.unwrap_or(d.kappa_confidence),
            kappa_min_share: self.kappa_min_share.unwrap_or(d.kappa_min_share),
        }
    }
}

/// Flags shared by every ensemble-based check.
#[derive(Debug, Clone, Args)]
pub struct EnsembleArgs {
    /// Number of steps.
    #[arg(long)]
    pub n: u64,
    /// Independent replicates.
    #[arg(long, default_value_t = 10_000)]
    pub replicates: u64,
    /// Extra recording steps (comma separated); n is always recorded.
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Vec<u64>,
    /// Centre fluctuations at m rho instead of T_m rho.
    #[arg(long)]
    pub paper_centering: bool,
    /// Dump scaled fluctuations as CSV (`replicate,m,R_fluct_scaled`).
    #[arg(long, value_name = "FILE")]
    pub samples: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub workers: WorkerArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EnsembleCmd {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CltArgs {
    #[command(flatten)]
    pub base: EnsembleCmd,
    /// Which covariance the variance is compared with.
    #[arg(long, value_enum, default_value_t = Target::Calibrated)]
    pub target: Target,
    /// Scale factor applied to the printed covariance (implies --target paper).
    #[arg(long)]
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct FcltArgs {
    #[command(flatten)]
    pub base: EnsembleCmd,
    /// Time pairs `s:t` with 0 < s <= t <= 1, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_pair, default_value = "0.5:0.5,0.5:0.75,0.5:1")]
    pub st_pairs: Vec<(f64, f64)>,
    /// Which kernel decides pass or fail.
    #[arg(long, value_enum, default_value_t = Target::Calibrated)]
    pub target: Target,
}

#[derive(Debug, Clone, Args)]
pub struct LapsesArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of steps.
    #[arg(long)]
    pub n: u64,
    /// Independent paths.
    #[arg(long, default_value_t = 1000)]
    pub replicates: u64,
    /// Smallest goodness-of-fit p-value accepted.
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub workers: WorkerArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub matrix: MatrixArgs,
    /// Memory parameters, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0.1,0.3,0.7,0.9")]
    pub p: Vec<Probability>,
    /// Coin probabilities, comma separated; every (p, theta) combination is used.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0.5")]
    pub theta: Vec<Probability>,
    /// Number of steps.
    #[arg(long, default_value_t = 2000)]
    pub n: u64,
    /// Replicates per point.
    #[arg(long, default_value_t = 10_000)]
    pub replicates: u64,
    /// Use exact variances instead of simulation.
    #[arg(long)]
    pub exact: bool,
    /// Covariance the pass/fail decision is based on.
    #[arg(long, value_enum, default_value_t = Target::Calibrated)]
    pub basis: Target,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub workers: WorkerArgs,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected s:t, got {s:?}"))?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    Ok((parse(a)?, parse(b)?))
}
