use serde::{Deserialize, Serialize};

use super::accumulate::{CoMoments, Moments};
use super::lapses::{LapseCounts, LapseHistogram};
use crate::error::{Result, UrnError};
use crate::limits::{limit_report, Scaling};
use crate::linalg::Mat2;
use crate::rng::stream_rng;
use crate::spectral::RegimeTag;
use crate::urn::{Model, ModelParams};

/// Replicates per work unit. Part of the result's definition: merges happen
/// chunk by chunk in index order, whatever the worker count.
pub const DEFAULT_CHUNK: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    /// Rayon pool of the given size. Without the `parallel` feature this
    /// runs sequentially.
    Parallel { workers: usize },
    /// Rayon's global pool.
    #[default]
    Auto,
}

impl Execution {
    pub fn with_workers(workers: usize) -> Self {
        if workers <= 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { workers }
        }
    }
}

/// What a fluctuation is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// `R_m - T_m rho_R`.
    #[default]
    Total,
    /// `R_m - m rho_R`; matches `Total` up to a constant when `K = 1`.
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n: u64,
    pub replicates: u64,
    pub seed: u64,
    /// Steps at which `R_m` is recorded; `n` is always added.
    pub checkpoints: Vec<u64>,
    /// Pairs `0 < s <= t <= 1` for cross-time covariances.
    pub st_pairs: Vec<(f64, f64)>,
    pub centering: Centering,
    pub track_lapses: bool,
    pub keep_samples: bool,
    pub chunk_size: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl EnsembleConfig {
    pub fn new(n: u64, replicates: u64, seed: u64) -> Self {
        EnsembleConfig {
            n,
            replicates,
            seed,
            checkpoints: Vec::new(),
            st_pairs: Vec::new(),
            centering: Centering::Total,
            track_lapses: false,
            keep_samples: false,
            chunk_size: DEFAULT_CHUNK,
            execution: Execution::Auto,
        }
    }

    pub fn checkpoints(mut self, checkpoints: impl IntoIterator<Item = u64>) -> Self {
        self.checkpoints = checkpoints.into_iter().collect();
        self
    }

    pub fn st_pairs(mut self, pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        self.st_pairs = pairs.into_iter().collect();
        self
    }

    pub fn centering(mut self, centering: Centering) -> Self {
        self.centering = centering;
        self
    }

    pub fn track_lapses(mut self, on: bool) -> Self {
        self.track_lapses = on;
        self
    }

    pub fn keep_samples(mut self, on: bool) -> Self {
        self.keep_samples = on;
        self
    }

    pub fn execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StandardizedMoments {
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// Scaled covariance of the red fluctuation at two times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossTimeCov {
    pub s: f64,
    pub t: f64,
    pub m_s: u64,
    pub m_t: u64,
    pub cov: f64,
    pub cov_se: f64,
    pub var_s: f64,
    pub var_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleFlag {
    /// No limit theorem covers the regime; numbers are descriptive only.
    Superdiffusive,
    /// `p = 1/2`.
    OutsideTheorem,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleRow {
    pub replicate: u64,
    pub m: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub params: ModelParams,
    pub n: u64,
    pub replicates: u64,
    pub seed: u64,
    pub regime: RegimeTag,
    pub scaling: Scaling,
    pub centering: Centering,
    pub rho: [f64; 2],
    pub checkpoints: Vec<u64>,
    pub mean_proportion: Vec<f64>,
    pub mean_proportion_se: Vec<f64>,
    pub red_mean: Vec<f64>,
    pub red_mean_se: Vec<f64>,
    pub red_variance: Vec<f64>,
    pub red_variance_se: Vec<f64>,
    /// Covariance of the scaled `(R, B)` fluctuation.
    pub scaled_fluctuation_cov: Vec<Mat2>,
    /// Standard error of the `[0][0]` entry.
    pub scaled_fluctuation_cov_se: Vec<f64>,
    /// Largest absolute row sum of each scaled covariance.
    pub row_sum_defect: Vec<f64>,
    pub cross_time_cov: Vec<CrossTimeCov>,
    /// Of the scaled red fluctuation at the final checkpoint.
    pub standardized_moments: StandardizedMoments,
    pub lapse_histogram: Option<LapseHistogram>,
    /// Final scaled variance over the printed covariance entry.
    pub kappa_estimate: Option<f64>,
    pub flags: Vec<EnsembleFlag>,
    #[serde(skip)]
    pub samples: Option<Vec<SampleRow>>,
}

impl EnsembleStats {
    pub fn final_index(&self) -> usize {
        self.checkpoints.len() - 1
    }

    pub fn final_scaled_variance(&self) -> f64 {
        self.scaled_fluctuation_cov[self.final_index()].get(0, 0)
    }

    pub fn final_scaled_variance_se(&self) -> f64 {
        self.scaled_fluctuation_cov_se[self.final_index()]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialise")
    }
}

/// A recording time and how the pair covariances normalise it.
struct Plan {
    times: Vec<u64>,
    checkpoint_idx: Vec<usize>,
    pairs: Vec<PairPlan>,
}

struct PairPlan {
    s: f64,
    t: f64,
    idx_s: usize,
    idx_t: usize,
    norm_s: f64,
    norm_t: f64,
}

fn plan(config: &EnsembleConfig, critical: bool) -> Result<(Vec<u64>, Plan)> {
    let n = config.n;
    let mut checkpoints = config.checkpoints.clone();
    checkpoints.push(n);
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let lowest = if critical { 2 } else { 1 };
    if let Some(&bad) = checkpoints.iter().find(|&&m| m < lowest || m > n) {
        return Err(UrnError::domain(format!(
            "checkpoint {bad} outside [{lowest}, {n}]"
        )));
    }

    let nf = n as f64;
    let mut pair_times = Vec::new();
    for &(s, t) in &config.st_pairs {
        if !(s > 0.0 && s <= t && t <= 1.0) {
            return Err(UrnError::domain(format!(
                "(s, t) = ({s}, {t}) needs 0 < s <= t <= 1"
            )));
        }
        // Critical runs use the time change m = floor(n^s) and normalise by
        // sqrt(n^s log n); elsewhere m = floor(s n) and sqrt(n).
        let at = |u: f64| -> (u64, f64) {
            if critical {
                let nu = nf.powf(u);
                ((nu + 1e-9).floor() as u64, (nu * nf.ln()).sqrt())
            } else {
                ((u * nf + 1e-9).floor() as u64, nf.sqrt())
            }
        };
        let (ms, norm_s) = at(s);
        let (mt, norm_t) = at(t);
        if ms == 0 {
            return Err(UrnError::domain(format!("s = {s} maps to step 0 for n = {n}")));
        }
        pair_times.push((s, t, ms, mt, norm_s, norm_t));
    }

    let mut times: Vec<u64> = checkpoints
        .iter()
        .copied()
        .chain(pair_times.iter().flat_map(|p| [p.2, p.3]))
        .collect();
    times.sort_unstable();
    times.dedup();
    let index = |m: u64| times.binary_search(&m).expect("time was inserted");
    let checkpoint_idx = checkpoints.iter().map(|&m| index(m)).collect();
    let pairs = pair_times
        .iter()
        .map(|&(s, t, ms, mt, norm_s, norm_t)| PairPlan {
            s,
            t,
            idx_s: index(ms),
            idx_t: index(mt),
            norm_s,
            norm_t,
        })
        .collect();
    Ok((checkpoints, Plan {
        times,
        checkpoint_idx,
        pairs,
    }))
}

/// Runs one replicate, writing `R` at each of `times` into `reds`.
#[inline]
fn run_replicate<const LAPSES: bool>(
    model: &Model,
    seed: u64,
    replicate: u64,
    times: &[u64],
    reds: &mut [i64],
    lapses: &mut LapseCounts,
) {
    let mut rng = stream_rng(seed, replicate);
    let m = model.matrix();
    let (a, c, k) = (m.a, m.c, model.k());
    let (mut r, mut t) = (model.params().r0, model.t0());
    let mut step = 0u64;
    let mut run = 0usize;
    for (slot, &target) in reds.iter_mut().zip(times) {
        while step < target {
            let (y, red) = model.draw(r, t, &mut rng);
            if LAPSES {
                if y {
                    if run > 0 {
                        lapses.complete(run);
                        run = 0;
                    }
                } else {
                    run += 1;
                }
            }
            r += if red { a } else { c };
            t += k;
            step += 1;
        }
        *slot = r;
    }
    if LAPSES {
        if run > 0 {
            lapses.censored(run);
        }
        lapses.trajectory(step);
    }
}

#[derive(Default)]
struct ChunkSummary {
    fluct: Vec<Moments>,
    rb: Vec<CoMoments>,
    cross: Vec<CoMoments>,
    lapses: LapseCounts,
    samples: Vec<f64>,
}

impl ChunkSummary {
    fn merge(&mut self, other: ChunkSummary) {
        for (x, y) in self.fluct.iter_mut().zip(&other.fluct) {
            x.merge(y);
        }
        for (x, y) in self.rb.iter_mut().zip(&other.rb) {
            x.merge(y);
        }
        for (x, y) in self.cross.iter_mut().zip(&other.cross) {
            x.merge(y);
        }
        self.lapses.merge(&other.lapses);
        self.samples.extend(other.samples);
    }
}

struct Runner<'a> {
    model: &'a Model,
    config: &'a EnsembleConfig,
    plan: Plan,
    /// Centering of `R` at every recording time.
    center: Vec<f64>,
    center_b: Vec<f64>,
    scale: Vec<f64>,
}

impl Runner<'_> {
    fn chunk(&self, index: u64) -> ChunkSummary {
        let first = index * self.config.chunk_size;
        let last = (first + self.config.chunk_size).min(self.config.replicates);
        let ncp = self.plan.checkpoint_idx.len();
        let mut out = ChunkSummary {
            fluct: vec![Moments::default(); ncp],
            rb: vec![CoMoments::default(); ncp],
            cross: vec![CoMoments::default(); self.plan.pairs.len()],
            ..Default::default()
        };
        let mut reds = vec![0i64; self.plan.times.len()];
        for rep in first..last {
            if self.config.track_lapses {
                run_replicate::<true>(self.model, self.config.seed, rep, &self.plan.times, &mut reds, &mut out.lapses);
            } else {
                run_replicate::<false>(self.model, self.config.seed, rep, &self.plan.times, &mut reds, &mut out.lapses);
            }
            let fluct = |i: usize| reds[i] as f64 - self.center[i];
            for (j, &i) in self.plan.checkpoint_idx.iter().enumerate() {
                let x = fluct(i);
                out.fluct[j].push(x);
                let blue = self.model.total_at(self.plan.times[i]) - reds[i];
                out.rb[j].push(x, blue as f64 - self.center_b[i]);
                if self.config.keep_samples {
                    out.samples.push(x / self.scale[j]);
                }
            }
            for (pair, acc) in self.plan.pairs.iter().zip(out.cross.iter_mut()) {
                acc.push(fluct(pair.idx_s) / pair.norm_s, fluct(pair.idx_t) / pair.norm_t);
            }
        }
        out
    }
}

fn map_chunks<F>(count: u64, execution: Execution, f: F) -> Result<Vec<ChunkSummary>>
where
    F: Fn(u64) -> ChunkSummary + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match execution {
            Execution::Sequential => {}
            Execution::Auto => return Ok((0..count).into_par_iter().map(f).collect()),
            Execution::Parallel { workers } => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| UrnError::ThreadPool(e.to_string()))?;
                return Ok(pool.install(|| (0..count).into_par_iter().map(f).collect()));
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = execution;
    Ok((0..count).map(f).collect())
}

/// Simulates `replicates` independent paths (stream `i` for replicate `i`)
/// and summarises the red fluctuation at every checkpoint.
pub fn run_ensemble(model: &Model, config: &EnsembleConfig) -> Result<EnsembleStats> {
    if config.replicates < 2 {
        return Err(UrnError::domain("an ensemble needs at least 2 replicates"));
    }
    if config.chunk_size == 0 {
        return Err(UrnError::domain("chunk size must be positive"));
    }
    let report = limit_report(model)?;
    let Some(rho) = report.rho else {
        return Err(UrnError::regime(
            "the red proportion has no deterministic limit, so fluctuations are undefined",
        ));
    };
    let tag = report.regime.tag;
    let critical = tag == RegimeTag::Critical;
    let scaling = if critical { Scaling::SqrtNLogN } else { Scaling::SqrtN };
    let (checkpoints, plan) = plan(config, critical)?;

    let centre = |m: u64, share: f64| match config.centering {
        Centering::Total => model.total_at(m) as f64 * share,
        Centering::Paper => m as f64 * share,
    };
    let runner = Runner {
        model,
        config,
        center: plan.times.iter().map(|&m| centre(m, rho[0])).collect(),
        center_b: plan.times.iter().map(|&m| centre(m, rho[1])).collect(),
        scale: checkpoints.iter().map(|&m| scaling.at(m as f64)).collect(),
        plan,
    };

    let chunks = config.replicates.div_ceil(config.chunk_size);
    let mut parts = map_chunks(chunks, config.execution, |i| runner.chunk(i))?.into_iter();
    let mut total = parts.next().expect("at least one chunk");
    for part in parts {
        total.merge(part);
    }

    let mut stats = EnsembleStats {
        params: *model.params(),
        n: config.n,
        replicates: config.replicates,
        seed: config.seed,
        regime: tag,
        scaling,
        centering: config.centering,
        rho,
        checkpoints: checkpoints.clone(),
        mean_proportion: Vec::new(),
        mean_proportion_se: Vec::new(),
        red_mean: Vec::new(),
        red_mean_se: Vec::new(),
        red_variance: Vec::new(),
        red_variance_se: Vec::new(),
        scaled_fluctuation_cov: Vec::new(),
        scaled_fluctuation_cov_se: Vec::new(),
        row_sum_defect: Vec::new(),
        cross_time_cov: Vec::new(),
        standardized_moments: StandardizedMoments {
            skewness: 0.0,
            excess_kurtosis: 0.0,
        },
        lapse_histogram: None,
        kappa_estimate: None,
        flags: Vec::new(),
        samples: None,
    };
    for (j, &m) in checkpoints.iter().enumerate() {
        let i = runner.plan.checkpoint_idx[j];
        let f = &total.fluct[j];
        let rb = &total.rb[j];
        let t = model.total_at(m) as f64;
        let s2 = runner.scale[j] * runner.scale[j];
        let red_mean = f.mean + runner.center[i];
        stats.red_mean.push(red_mean);
        stats.red_mean_se.push(f.mean_se());
        stats.red_variance.push(f.variance());
        stats.red_variance_se.push(f.variance_se());
        stats.mean_proportion.push(red_mean / t);
        stats.mean_proportion_se.push(f.mean_se() / t);
        let cov = Mat2::new(rb.var_x(), rb.covariance(), rb.covariance(), rb.var_y()).scale(1.0 / s2);
        stats.row_sum_defect.push(
            (cov.get(0, 0) + cov.get(0, 1))
                .abs()
                .max((cov.get(1, 0) + cov.get(1, 1)).abs()),
        );
        stats.scaled_fluctuation_cov.push(cov);
        stats.scaled_fluctuation_cov_se.push(f.variance_se() / s2);
    }
    let last = total.fluct.last().expect("n is a checkpoint");
    stats.standardized_moments = StandardizedMoments {
        skewness: last.skewness(),
        excess_kurtosis: last.excess_kurtosis(),
    };
    for (pair, acc) in runner.plan.pairs.iter().zip(&total.cross) {
        stats.cross_time_cov.push(CrossTimeCov {
            s: pair.s,
            t: pair.t,
            m_s: runner.plan.times[pair.idx_s],
            m_t: runner.plan.times[pair.idx_t],
            cov: acc.covariance(),
            cov_se: acc.covariance_se(),
            var_s: acc.var_x(),
            var_t: acc.var_y(),
        });
    }
    if config.track_lapses {
        stats.lapse_histogram = Some(total.lapses.to_histogram());
    }
    if matches!(tag, RegimeTag::Diffusive | RegimeTag::Degenerate) {
        stats.kappa_estimate = report
            .sigma_paper_scalar()
            .filter(|s| *s != 0.0)
            .map(|s| stats.final_scaled_variance() / s);
    }
    if tag == RegimeTag::Superdiffusive {
        stats.flags.push(EnsembleFlag::Superdiffusive);
    }
    if model.params().p.is_half() {
        stats.flags.push(EnsembleFlag::OutsideTheorem);
    }
    if config.keep_samples {
        let ncp = checkpoints.len();
        stats.samples = Some(
            total
                .samples
                .iter()
                .enumerate()
                .map(|(i, &value)| SampleRow {
                    replicate: (i / ncp) as u64,
                    m: checkpoints[i % ncp],
                    value,
                })
                .collect(),
        );
    }
    Ok(stats)
}

/// `R_n` of every replicate, on the same streams as [`run_ensemble`].
pub fn final_reds(model: &Model, n: u64, replicates: u64, seed: u64, execution: Execution) -> Result<Vec<i64>> {
    let run = |rep: u64| crate::urn::final_red(model, n, seed, rep);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match execution {
            Execution::Sequential => {}
            Execution::Auto => return Ok((0..replicates).into_par_iter().map(run).collect()),
            Execution::Parallel { workers } => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| UrnError::ThreadPool(e.to_string()))?;
                return Ok(pool.install(|| (0..replicates).into_par_iter().map(run).collect()));
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = execution;
    Ok((0..replicates).map(run).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limits::Preset;

    #[test]
    fn deterministic_parameters_have_no_spread() {
        for p in [0.0, 1.0] {
            let model = Preset::Krw.model(p, 0.0).unwrap();
            let stats = run_ensemble(&model, &EnsembleConfig::new(200, 50, 1)).unwrap();
            assert_eq!(stats.red_variance, vec![0.0]);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let model = Preset::A3c1.model(0.7, 0.6).unwrap();
        let base = EnsembleConfig::new(300, 1000, 99)
            .checkpoints([10, 100])
            .st_pairs([(0.5, 1.0)])
            .track_lapses(true);
        let one = run_ensemble(&model, &base.clone().execution(Execution::Sequential)).unwrap();
        let four = run_ensemble(&model, &base.clone().execution(Execution::with_workers(4))).unwrap();
        assert_eq!(one.to_json(), four.to_json());
    }

    #[test]
    fn planning_rejects_bad_inputs() {
        let model = Preset::Krw.model(0.7, 0.6).unwrap();
        assert!(run_ensemble(&model, &EnsembleConfig::new(10, 1, 0)).is_err());
        assert!(run_ensemble(&model, &EnsembleConfig::new(10, 5, 0).checkpoints([11])).is_err());
        assert!(run_ensemble(&model, &EnsembleConfig::new(10, 5, 0).st_pairs([(0.8, 0.5)])).is_err());
        assert!(run_ensemble(&model, &EnsembleConfig::new(10, 5, 0).st_pairs([(0.0, 0.5)])).is_err());
        let polya = Preset::Pure(1).model(1.0, 1.0).unwrap();
        assert!(matches!(
            run_ensemble(&polya, &EnsembleConfig::new(10, 5, 0)),
            Err(UrnError::Regime(_))
        ));
    }

    #[test]
    fn samples_are_replicate_major() {
        let model = Preset::Krw.model(0.7, 0.6).unwrap();
        let stats = run_ensemble(&model, &EnsembleConfig::new(50, 3, 5).checkpoints([10]).keep_samples(true)).unwrap();
        let rows = stats.samples.unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!((rows[0].replicate, rows[0].m), (0, 10));
        assert_eq!((rows[5].replicate, rows[5].m), (2, 50));
        let r = crate::urn::final_red(&model, 50, 5, 2) as f64;
        let expected = (r - model.total_at(50) as f64 * stats.rho[0]) / 50f64.sqrt();
        assert!((rows[5].value - expected).abs() < 1e-12);
    }
}
