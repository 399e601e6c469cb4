//! Statistical checks of ensemble output against the closed forms.
//!
//! Every verdict carries the raw numbers it was decided on. Thresholds are
//! engineering defaults, not properties of the model.

use serde::{Deserialize, Serialize};

use super::ensemble::{run_ensemble, EnsembleConfig, EnsembleStats, Execution};
use crate::error::{Result, UrnError};
use crate::limits::{fclt_kernel_calibrated, limit_report, LimitReport};
use crate::oracle::exact_moments;
use crate::prob::Probability;
use crate::spectral::RegimeTag;
use crate::urn::{Model, ModelParams, ReplacementMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Standard errors allowed between the mean proportion and `rho`.
    pub lln_se: f64,
    /// Finite-`n` drift allowance `lln_bias * K / T_n`.
    pub lln_bias: f64,
    pub clt_diffusive_rel: f64,
    pub clt_critical_rel: f64,
    pub max_abs_skewness: f64,
    pub max_abs_excess_kurtosis: f64,
    /// Moment windows only apply from this many replicates on.
    pub normality_min_replicates: u64,
    pub fclt_rel: f64,
    /// Standard errors allowed between cross-time covariances that should agree.
    pub t_independence_se: f64,
    /// Two-sided confidence level of kappa intervals.
    pub kappa_confidence: f64,
    /// Share of parameter points whose interval must contain `K`.
    pub kappa_min_share: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            lln_se: 4.0,
            lln_bias: 5.0,
            clt_diffusive_rel: 0.05,
            clt_critical_rel: 0.12,
            max_abs_skewness: 0.1,
            max_abs_excess_kurtosis: 0.25,
            normality_min_replicates: 100_000,
            fclt_rel: 0.10,
            t_independence_se: 4.0,
            kappa_confidence: 0.99,
            kappa_min_share: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlnVerdict {
    pub pass: bool,
    pub m: u64,
    pub mean_proportion: f64,
    pub se: f64,
    pub rho: f64,
    pub z: f64,
    pub bias_allowance: f64,
    pub tolerance: f64,
}

/// `|mean proportion - rho_R| <= lln_se * SE + lln_bias * K / T_n` at the
/// final checkpoint.
pub fn verify_lln(stats: &EnsembleStats, report: &LimitReport, th: &Thresholds) -> Result<LlnVerdict> {
    if !matches!(
        report.regime.tag,
        RegimeTag::Diffusive | RegimeTag::Critical | RegimeTag::Degenerate
    ) {
        return Err(UrnError::regime(format!(
            "LLN check needs a diffusive, critical or degenerate regime, got {}",
            report.regime.tag.as_str()
        )));
    }
    let rho = report.rho_red().expect("rho exists in these regimes");
    let i = stats.final_index();
    let m = stats.checkpoints[i];
    let k = stats.params.matrix.k() as f64;
    let t = k * m as f64 + stats.params.t0() as f64;
    let (mean, se) = (stats.mean_proportion[i], stats.mean_proportion_se[i]);
    let bias_allowance = th.lln_bias * k / t;
    let tolerance = th.lln_se * se + bias_allowance;
    let diff = mean - rho;
    Ok(LlnVerdict {
        pass: diff.abs() <= tolerance,
        m,
        mean_proportion: mean,
        se,
        rho,
        z: if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY },
        bias_allowance,
        tolerance,
    })
}

/// Which covariance a target was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetBasis {
    /// The report's calibrated covariance.
    Calibrated,
    /// A caller-supplied kappa times the printed covariance.
    PaperTimesKappa,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltVerdict {
    pub pass: bool,
    pub regime: RegimeTag,
    pub m: u64,
    pub empirical: f64,
    pub empirical_se: f64,
    pub target: f64,
    pub basis: TargetBasis,
    pub kappa: f64,
    pub relative_error: f64,
    pub relative_tolerance: f64,
    /// `kappa_hypothesis * sigma_paper[0][0]`, for reference.
    pub paper_target: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// `None` below the replicate count where the moment windows apply.
    pub normality_pass: Option<bool>,
    pub outside_theorem: bool,
}

/// Final scaled variance against `kappa * Sigma[0][0]`.
///
/// With `kappa = None` the target is the report's calibrated covariance;
/// with `Some(k)` it is `k` times the printed covariance.
pub fn verify_clt(
    stats: &EnsembleStats,
    report: &LimitReport,
    kappa: Option<f64>,
    th: &Thresholds,
) -> Result<CltVerdict> {
    let tag = report.regime.tag;
    let rel_tol = match tag {
        RegimeTag::Diffusive | RegimeTag::Degenerate => th.clt_diffusive_rel,
        RegimeTag::Critical => th.clt_critical_rel,
        other => {
            return Err(UrnError::regime(format!(
                "CLT check needs a diffusive or critical regime, got {}",
                other.as_str()
            )))
        }
    };
    if stats.regime != tag {
        return Err(UrnError::regime("ensemble and report disagree on the regime"));
    }
    let paper = report.sigma_paper_scalar().expect("sigma exists in these regimes");
    let kappa_hyp = report.kappa_hypothesis.expect("kappa exists in these regimes");
    let (target, basis, used_kappa) = match kappa {
        Some(k) => (k * paper, TargetBasis::PaperTimesKappa, k),
        None => (
            report.sigma_calibrated_scalar().expect("sigma exists in these regimes"),
            TargetBasis::Calibrated,
            kappa_hyp,
        ),
    };
    let empirical = stats.final_scaled_variance();
    let relative_error = (empirical - target).abs() / target.abs();
    let sm = stats.standardized_moments;
    let normality_pass = (stats.replicates >= th.normality_min_replicates).then(|| {
        sm.skewness.abs() < th.max_abs_skewness && sm.excess_kurtosis.abs() < th.max_abs_excess_kurtosis
    });
    Ok(CltVerdict {
        pass: relative_error < rel_tol && normality_pass != Some(false),
        regime: tag,
        m: stats.n,
        empirical,
        empirical_se: stats.final_scaled_variance_se(),
        target,
        basis,
        kappa: used_kappa,
        relative_error,
        relative_tolerance: rel_tol,
        paper_target: kappa_hyp * paper,
        skewness: sm.skewness,
        excess_kurtosis: sm.excess_kurtosis,
        normality_pass,
        outside_theorem: tag == RegimeTag::Degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FcltPairVerdict {
    pub s: f64,
    pub t: f64,
    pub m_s: u64,
    pub m_t: u64,
    pub empirical: f64,
    pub se: f64,
    /// `kappa s (t/s)^lambda2 Sigma[0][0]` (diffusive) or `kappa s Sigma[0][0]`
    /// (critical), printed covariance, hypothesis kappa.
    pub paper_target: f64,
    pub relative_error: f64,
    pub pass: bool,
    /// Kernel of the scaled red count with exponent `lambda2 / lambda1` and
    /// the calibrated covariance.
    pub calibrated_target: f64,
    pub calibrated_relative_error: f64,
    pub calibrated_pass: bool,
}

/// Spread of critical cross-time covariances sharing the same `s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TIndependence {
    pub s: f64,
    pub values: Vec<(f64, f64, f64)>,
    /// Largest `|cov_i - cov_j| / sqrt(se_i^2 + se_j^2)`.
    pub max_z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FcltVerdict {
    pub pass: bool,
    pub calibrated_pass: bool,
    pub regime: RegimeTag,
    pub kernel_exponent: f64,
    pub kernel_exponent_calibrated: f64,
    pub pairs: Vec<FcltPairVerdict>,
    pub t_independence: Vec<TIndependence>,
}

pub fn verify_fclt(stats: &EnsembleStats, report: &LimitReport, model: &Model, th: &Thresholds) -> Result<FcltVerdict> {
    let tag = report.regime.tag;
    let critical = match tag {
        RegimeTag::Diffusive | RegimeTag::Degenerate => false,
        RegimeTag::Critical => true,
        other => {
            return Err(UrnError::regime(format!(
                "FCLT check needs a diffusive or critical regime, got {}",
                other.as_str()
            )))
        }
    };
    if stats.cross_time_cov.is_empty() {
        return Err(UrnError::domain("ensemble has no (s, t) pairs"));
    }
    let sigma = report.sigma_paper_scalar().expect("sigma exists in these regimes");
    let kappa = report.kappa_hypothesis.expect("kappa exists in these regimes");
    let l2 = report.lambda2;
    let mut pairs = Vec::new();
    for c in &stats.cross_time_cov {
        let paper_target = if critical {
            kappa * c.s * sigma
        } else {
            kappa * c.s * (c.t / c.s).powf(l2) * sigma
        };
        let calibrated_target = fclt_kernel_calibrated(model, c.s, c.t)?.get(0, 0);
        let rel = |target: f64| (c.cov - target).abs() / target.abs();
        pairs.push(FcltPairVerdict {
            s: c.s,
            t: c.t,
            m_s: c.m_s,
            m_t: c.m_t,
            empirical: c.cov,
            se: c.cov_se,
            paper_target,
            relative_error: rel(paper_target),
            pass: rel(paper_target) < th.fclt_rel,
            calibrated_target,
            calibrated_relative_error: rel(calibrated_target),
            calibrated_pass: rel(calibrated_target) < th.fclt_rel,
        });
    }

    let mut t_independence = Vec::new();
    if critical {
        let mut by_s: Vec<f64> = stats.cross_time_cov.iter().map(|c| c.s).collect();
        by_s.sort_by(f64::total_cmp);
        by_s.dedup();
        for s in by_s {
            let group: Vec<_> = stats.cross_time_cov.iter().filter(|c| c.s == s).collect();
            if group.len() < 2 {
                continue;
            }
            let mut max_z: f64 = 0.0;
            for (i, x) in group.iter().enumerate() {
                for y in &group[i + 1..] {
                    let z = (x.cov - y.cov).abs() / (x.cov_se.powi(2) + y.cov_se.powi(2)).sqrt();
                    max_z = max_z.max(z);
                }
            }
            t_independence.push(TIndependence {
                s,
                values: group.iter().map(|c| (c.t, c.cov, c.cov_se)).collect(),
                max_z,
                pass: max_z <= th.t_independence_se,
            });
        }
    }
    let t_ok = t_independence.iter().all(|x| x.pass);
    Ok(FcltVerdict {
        pass: pairs.iter().all(|p| p.pass) && t_ok,
        calibrated_pass: pairs.iter().all(|p| p.calibrated_pass) && t_ok,
        regime: tag,
        kernel_exponent: report.kernel_exponent.unwrap_or(0.0),
        kernel_exponent_calibrated: report.kernel_exponent_calibrated.unwrap_or(0.0),
        pairs,
        t_independence,
    })
}

/// Where calibration variances come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaSource {
    MonteCarlo {
        replicates: u64,
        seed: u64,
        #[serde(skip)]
        execution: Execution,
    },
    /// Exact variance from the oracle: no sampling noise, zero-width interval.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaPoint {
    pub p: f64,
    pub theta: f64,
    pub scaled_variance: f64,
    pub scaled_variance_se: f64,
    pub sigma_paper: f64,
    pub sigma_sign_corrected: f64,
    /// Scaled variance over the printed covariance.
    pub kappa: f64,
    pub kappa_ci: [f64; 2],
    pub contains_k: bool,
    /// Scaled variance over the sign-corrected covariance.
    pub kappa_sign_corrected: f64,
    pub kappa_sign_corrected_ci: [f64; 2],
    pub contains_k_sign_corrected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaFlag {
    /// Too few intervals (against the printed covariance) contain `K`.
    HypothesisRejected,
    /// Too few intervals against the sign-corrected covariance contain `K`.
    SignCorrectedHypothesisRejected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaCalibration {
    pub matrix: ReplacementMatrix,
    pub k: f64,
    pub n: u64,
    pub source: KappaSource,
    pub confidence: f64,
    pub points: Vec<KappaPoint>,
    /// Mean of the per-point kappas and its interval.
    pub kappa_hat: f64,
    pub kappa_hat_ci: [f64; 2],
    pub points_containing_k: usize,
    pub kappa_hat_sign_corrected: f64,
    pub kappa_hat_sign_corrected_ci: [f64; 2],
    pub points_containing_k_sign_corrected: usize,
    pub flags: Vec<KappaFlag>,
}

/// Two-sided standard normal quantile.
fn z_for(confidence: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(0.5 + confidence / 2.0)
}

/// Estimates the ratio of `Var(R_n - T_n rho) / n` to the covariance entry
/// at each `(p, theta)` of a family sharing `matrix` (start `R0 = B0 = 1`).
pub fn calibrate_kappa(
    matrix: ReplacementMatrix,
    points: &[(Probability, Probability)],
    n: u64,
    source: KappaSource,
    th: &Thresholds,
) -> Result<KappaCalibration> {
    if points.is_empty() {
        return Err(UrnError::domain("calibration needs at least one parameter point"));
    }
    let k = matrix.k() as f64;
    let z = z_for(th.kappa_confidence);
    let mut out = Vec::with_capacity(points.len());
    for &(p, theta) in points {
        let model = Model::new(ModelParams::new(matrix, p, theta, 1, 1))?;
        let report = limit_report(&model)?;
        if report.regime.tag != RegimeTag::Diffusive {
            return Err(UrnError::regime(format!(
                "calibration needs diffusive points with p != 1/2; (p, theta) = ({p}, {theta}) is {}",
                report.regime.tag.as_str()
            )));
        }
        let (var, se) = match source {
            KappaSource::Exact => (exact_moments(&model, n)?.cov.get(0, 0) / n as f64, 0.0),
            KappaSource::MonteCarlo {
                replicates,
                seed,
                execution,
            } => {
                let stats = run_ensemble(&model, &EnsembleConfig::new(n, replicates, seed).execution(execution))?;
                (stats.final_scaled_variance(), stats.final_scaled_variance_se())
            }
        };
        let paper = report.sigma_paper_scalar().expect("diffusive");
        let corrected = report.sigma_sign_corrected.expect("diffusive").get(0, 0);
        let ratio = |sigma: f64| {
            let lo = (var - z * se) / sigma;
            let hi = (var + z * se) / sigma;
            (var / sigma, [lo.min(hi), lo.max(hi)])
        };
        let (kp, kp_ci) = ratio(paper);
        let (kc, kc_ci) = ratio(corrected);
        // Exact sources have a zero-width interval; allow float round-off.
        let contains = |ci: [f64; 2]| ci[0] - 1e-9 * k <= k && k <= ci[1] + 1e-9 * k;
        out.push(KappaPoint {
            p: p.value(),
            theta: theta.value(),
            scaled_variance: var,
            scaled_variance_se: se,
            sigma_paper: paper,
            sigma_sign_corrected: corrected,
            kappa: kp,
            kappa_ci: kp_ci,
            contains_k: contains(kp_ci),
            kappa_sign_corrected: kc,
            kappa_sign_corrected_ci: kc_ci,
            contains_k_sign_corrected: contains(kc_ci),
        });
    }

    let summarise = |vals: Vec<(f64, f64)>| {
        let m = vals.len() as f64;
        let mean = vals.iter().map(|v| v.0).sum::<f64>() / m;
        // independent points: SE of the mean of per-point ratios
        let se = vals.iter().map(|v| v.1 * v.1).sum::<f64>().sqrt() / m;
        (mean, [mean - z * se, mean + z * se])
    };
    let half_width = |ci: [f64; 2]| (ci[1] - ci[0]) / (2.0 * z);
    let (kappa_hat, kappa_hat_ci) = summarise(out.iter().map(|q| (q.kappa, half_width(q.kappa_ci))).collect());
    let (kappa_hat_c, kappa_hat_c_ci) = summarise(
        out.iter()
            .map(|q| (q.kappa_sign_corrected, half_width(q.kappa_sign_corrected_ci)))
            .collect(),
    );
    let inside = out.iter().filter(|q| q.contains_k).count();
    let inside_c = out.iter().filter(|q| q.contains_k_sign_corrected).count();
    let needed = (th.kappa_min_share * out.len() as f64).ceil() as usize;
    let mut flags = Vec::new();
    if inside < needed {
        flags.push(KappaFlag::HypothesisRejected);
    }
    if inside_c < needed {
        flags.push(KappaFlag::SignCorrectedHypothesisRejected);
    }
    Ok(KappaCalibration {
        matrix,
        k,
        n,
        source,
        confidence: th.kappa_confidence,
        points: out,
        kappa_hat,
        kappa_hat_ci,
        points_containing_k: inside,
        kappa_hat_sign_corrected: kappa_hat_c,
        kappa_hat_sign_corrected_ci: kappa_hat_c_ci,
        points_containing_k_sign_corrected: inside_c,
        flags,
    })
}
