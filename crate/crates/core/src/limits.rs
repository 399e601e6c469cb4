//! Closed-form limit objects: LLN limit, omega constants, diffusive and
//! critical covariances, functional kernels and the named presets.
//!
//! Covariances come in three flavours:
//!
//! * `paper` — the omega/alpha/beta expansion built on the positive-sign
//!   `u2` stored in [`SpectralData::u2`].
//! * `sign_corrected` — the same expansion with the genuine left
//!   eigenvector (`u2` with its second component negated).
//! * `calibrated` — `kappa * sign_corrected`, the covariance of
//!   `(R_n - T_n rho) / sqrt(n)` (or `/ sqrt(n log n)` at criticality).
//!   `kappa = K` in the diffusive regime and `1` at criticality; both are
//!   checked against the exact oracle in the test suite.
//!
//! For `b = d = 0` the first two coincide.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};
use crate::linalg::{Mat2, RANK_ONE};
use crate::prob::Probability;
use crate::spectral::{self, critical_p, regime, Regime, RegimeTag, SpectralData};
use crate::urn::{Model, ModelParams, ReplacementMatrix};

/// Relative tolerance of the internal two-route covariance checks.
const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Knight random walk, `(a, b; c, d) = (2, 1; 1, 2)`.
    Krw,
    A3c1,
    A2c0,
    /// `(K, 0; 0, K)`; with `K = 1, theta = 1` this is the elephant walk.
    Pure(i64),
}

impl Preset {
    pub fn matrix(&self) -> ReplacementMatrix {
        match *self {
            Preset::Krw => ReplacementMatrix::new(2, 1, 1, 2),
            Preset::A3c1 => ReplacementMatrix::new(3, 0, 1, 2),
            Preset::A2c0 => ReplacementMatrix::new(2, 1, 0, 3),
            Preset::Pure(k) => ReplacementMatrix::new(k, 0, 0, k),
        }
    }

    /// Template with the default start `R0 = B0 = 1`.
    pub fn params(&self, p: impl Into<Probability>, theta: impl Into<Probability>) -> ModelParams {
        ModelParams::new(self.matrix(), p, theta, 1, 1)
    }

    pub fn model(&self, p: impl Into<Probability>, theta: impl Into<Probability>) -> Result<Model> {
        Model::new(self.params(p, theta))
    }

    /// `krw`, `a3c1`, `a2c0` or `pure` (which needs `k`).
    pub fn from_name(name: &str, k: Option<i64>) -> Result<Self> {
        match (name.to_ascii_lowercase().as_str(), k) {
            ("krw", _) => Ok(Preset::Krw),
            ("a3c1", _) => Ok(Preset::A3c1),
            ("a2c0", _) => Ok(Preset::A2c0),
            ("pure", Some(k)) => Ok(Preset::Pure(k)),
            ("pure", None) => Err(UrnError::UnknownPreset("pure (needs K)".into())),
            _ => name.parse(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Krw => f.write_str("krw"),
            Preset::A3c1 => f.write_str("a3c1"),
            Preset::A2c0 => f.write_str("a2c0"),
            Preset::Pure(k) => write!(f, "pure({k})"),
        }
    }
}

impl FromStr for Preset {
    type Err = UrnError;

    /// Accepts the [`fmt::Display`] forms, e.g. `pure(3)`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "krw" => return Ok(Preset::Krw),
            "a3c1" => return Ok(Preset::A3c1),
            "a2c0" => return Ok(Preset::A2c0),
            _ => {}
        }
        lower
            .strip_prefix("pure(")
            .and_then(|rest| rest.strip_suffix(')'))
            .and_then(|k| k.parse().ok())
            .map(Preset::Pure)
            .ok_or_else(|| UrnError::UnknownPreset(s.to_string()))
    }
}

fn lambda2(model: &Model) -> f64 {
    let m = model.matrix();
    model.theta() * (2.0 * model.p() - 1.0) * (m.a - m.c) as f64
}

/// Almost-sure limit of `(R_n / T_n, B_n / T_n)`.
pub fn lln_limit(model: &Model) -> Result<[f64; 2]> {
    let m = model.matrix();
    let (p, theta) = (model.p(), model.theta());
    let (a, c, k) = (m.a as f64, m.c as f64, m.k() as f64);
    let l2 = lambda2(model);
    if l2 >= k {
        return Err(UrnError::regime(format!(
            "law of large numbers needs theta(2p-1)(a-c) < K, got {l2} >= {k}"
        )));
    }
    let denom = k - l2;
    let red = (p * c + (1.0 - p) * a) / denom;
    let blue = (k - c - (a - c) * (theta * (2.0 * p - 1.0) + (1.0 - p))) / denom;
    if (red + blue - 1.0).abs() > 1e-14 {
        return Err(UrnError::SelfCheck(format!(
            "LLN components sum to {}",
            red + blue
        )));
    }
    Ok([red, 1.0 - red])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Omegas {
    pub omega1: f64,
    pub omega2: f64,
}

pub fn omegas(model: &Model) -> Omegas {
    let m = model.matrix();
    let (p, theta) = (model.p(), model.theta());
    let (a, c, k) = (m.a as f64, m.c as f64, m.k() as f64);
    Omegas {
        omega1: k - 2.0 * c - (a - c) * (theta * (2.0 * p - 1.0) + 2.0 * (1.0 - p)),
        omega2: c + (a - c) * (1.0 - p),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffusiveSigma {
    pub paper: Mat2,
    pub sign_corrected: Mat2,
    /// Set when `p = 1/2`: computed, but outside the CLT hypotheses.
    pub outside_theorem: bool,
}

fn check_identity(label: &str, x: f64, y: f64) -> Result<()> {
    if (x - y).abs() > IDENTITY_TOL * (1.0 + x.abs().max(y.abs())) {
        return Err(UrnError::SelfCheck(format!("{label}: {x} vs {y}")));
    }
    Ok(())
}

/// `Sigma_1` for `2 lambda2 < K`.
pub fn sigma_diffusive(model: &Model) -> Result<DiffusiveSigma> {
    let reg = regime(model);
    if !matches!(reg.tag, RegimeTag::Diffusive | RegimeTag::Degenerate) {
        return Err(UrnError::regime(format!(
            "diffusive covariance needs 2 lambda2 < K, regime is {}",
            reg.tag.as_str()
        )));
    }
    let sd = spectral::eigen(model)?;
    let k = sd.lambda1;
    let l2 = sd.lambda2;
    let Omegas { omega1, omega2 } = omegas(model);
    let denom = (k - 2.0 * l2) * (k - l2) * (k - l2);
    let numerator = omega1 * omega1 * sd.alpha + 2.0 * omega1 * omega2 * sd.beta + omega2 * omega2 * k * k;
    let scalar = numerator / denom;

    // Same object as u2ᵀ B u2 / (λ1 − 2λ2) · v2 v2ᵀ.
    let proof_form = sd.b.quad_form(sd.u2) / (k - 2.0 * l2) * sd.v2[0] * sd.v2[0];
    check_identity("Sigma_1 omega expansion vs u2ᵀBu2 form", scalar, proof_form)?;
    check_identity("omega1 = u21 - u22", omega1, sd.u2[0] - sd.u2[1])?;
    check_identity("omega2 = u22", omega2, sd.u2[1])?;

    let corrected = sd.b.quad_form(sd.u2_sign_corrected()) / denom;
    Ok(DiffusiveSigma {
        paper: RANK_ONE.scale(scalar),
        sign_corrected: RANK_ONE.scale(corrected),
        outside_theorem: reg.tag == RegimeTag::Degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalConstants {
    pub omega1_c: f64,
    pub alpha_c: f64,
    pub beta_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalSigma {
    pub paper: Mat2,
    pub sign_corrected: Mat2,
    pub constants: CriticalConstants,
}

pub fn critical_constants(model: &Model) -> CriticalConstants {
    let m = model.matrix();
    let p = model.p();
    let (a, c, k) = (m.a as f64, m.c as f64, m.k() as f64);
    let alpha_c = c * c + 2.0 * (a + c) * ((a - c) * (1.0 - p) + c / 2.0);
    CriticalConstants {
        omega1_c: k / 2.0 - 2.0 * a + 2.0 * p * (a - c),
        alpha_c,
        beta_c: k * (alpha_c + a * c) / (a + c),
    }
}

/// `Sigma_2` for `2 lambda2 = K`.
pub fn sigma_critical(model: &Model) -> Result<CriticalSigma> {
    let reg = regime(model);
    if reg.tag != RegimeTag::Critical {
        return Err(UrnError::regime(format!(
            "critical covariance needs 2 lambda2 = K, regime is {}",
            reg.tag.as_str()
        )));
    }
    let sd = spectral::eigen(model)?;
    let k = sd.lambda1;
    let l2 = sd.lambda2;
    let cc = critical_constants(model);
    let omega2 = omegas(model).omega2;
    let denom = (k - l2) * (k - l2);
    let numerator = cc.omega1_c * cc.omega1_c * cc.alpha_c
        + 2.0 * cc.omega1_c * omega2 * cc.beta_c
        + omega2 * omega2 * k * k;
    let scalar = numerator / denom;

    // Σ2 = u2ᵀ B u2 · v2 v2ᵀ.
    let direct = sd.b.quad_form(sd.u2) * sd.v2[0] * sd.v2[0];
    check_identity("Sigma_2 constants vs u2ᵀBu2 v2v2ᵀ", scalar, direct)?;

    let corrected = sd.b.quad_form(sd.u2_sign_corrected()) / denom;
    Ok(CriticalSigma {
        paper: RANK_ONE.scale(scalar),
        sign_corrected: RANK_ONE.scale(corrected),
        constants: cc,
    })
}

fn check_times(s: f64, t: f64) -> Result<()> {
    if !(s > 0.0 && s <= t && t.is_finite()) {
        return Err(UrnError::domain(format!("kernel needs 0 < s <= t, got s = {s}, t = {t}")));
    }
    Ok(())
}

/// `E(W_s W_tᵀ)` as printed: `s (t/s)^lambda2 Sigma_1` in the diffusive
/// regime, `s Sigma_2` at criticality.
pub fn fclt_kernel(model: &Model, s: f64, t: f64) -> Result<Mat2> {
    check_times(s, t)?;
    match regime(model).tag {
        RegimeTag::Critical => Ok(sigma_critical(model)?.paper.scale(s)),
        RegimeTag::Diffusive | RegimeTag::Degenerate => {
            let sigma = sigma_diffusive(model)?.paper;
            Ok(sigma.scale(s * (t / s).powf(lambda2(model))))
        }
        other => Err(UrnError::regime(format!(
            "no functional limit in the {} regime",
            other.as_str()
        ))),
    }
}

/// `s Sigma_1 exp(log(t/s) Aᵀ)` with a numeric matrix exponential.
pub fn fclt_kernel_matrix_exp(model: &Model, s: f64, t: f64) -> Result<Mat2> {
    check_times(s, t)?;
    let sigma = sigma_diffusive(model)?.paper;
    let a = spectral::eigen(model)?.a;
    let e = (a.transpose().to_nalgebra() * (t / s).ln()).exp();
    Ok(sigma.matmul(&Mat2::from_nalgebra(&e)).scale(s))
}

/// Kernel of the centred, `sqrt(n)`-scaled red count: `kappa Sigma s
/// (t/s)^(lambda2 / lambda1)` with the sign-corrected `Sigma`.
pub fn fclt_kernel_calibrated(model: &Model, s: f64, t: f64) -> Result<Mat2> {
    check_times(s, t)?;
    let k = model.k() as f64;
    match regime(model).tag {
        RegimeTag::Critical => Ok(sigma_critical(model)?.sign_corrected.scale(s)),
        RegimeTag::Diffusive | RegimeTag::Degenerate => {
            let sigma = sigma_diffusive(model)?.sign_corrected.scale(k);
            Ok(sigma.scale(s * (t / s).powf(lambda2(model) / k)))
        }
        other => Err(UrnError::regime(format!(
            "no functional limit in the {} regime",
            other.as_str()
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    SqrtN,
    SqrtNLogN,
    None,
}

impl Scaling {
    /// Normaliser of the fluctuation at step `m` (`m >= 1`).
    pub fn at(&self, m: f64) -> f64 {
        match self {
            Scaling::SqrtN | Scaling::None => m.sqrt(),
            Scaling::SqrtNLogN => (m * m.ln()).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitFlag {
    /// `p = 1/2`: evaluated, but the CLT hypotheses exclude it.
    OutsideTheorem,
    /// `K/2 < lambda2 < K`: no limit law is available.
    Superdiffusive,
    /// `lambda2 >= K`: no deterministic proportion limit.
    LlnViolated,
    /// `b` or `d` non-zero: the printed and sign-corrected covariances differ.
    PrintedU2Differs,
    /// The printed covariance has a negative diagonal.
    PaperSigmaNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    pub rho: Option<[f64; 2]>,
    pub regime: Regime,
    pub omega1: f64,
    pub omega2: f64,
    pub sigma_paper: Option<Mat2>,
    pub sigma_sign_corrected: Option<Mat2>,
    pub sigma_calibrated: Option<Mat2>,
    pub kappa_hypothesis: Option<f64>,
    pub critical_constants: Option<CriticalConstants>,
    pub critical_p: Option<f64>,
    pub scaling: Scaling,
    /// Exponent of `t/s` in the printed diffusive kernel (`lambda2`).
    pub kernel_exponent: Option<f64>,
    /// Exponent that describes the scaled red count (`lambda2 / lambda1`).
    pub kernel_exponent_calibrated: Option<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub flags: Vec<LimitFlag>,
}

impl LimitReport {
    /// `[0][0]` entry of the printed covariance.
    pub fn sigma_paper_scalar(&self) -> Option<f64> {
        self.sigma_paper.map(|s| s.get(0, 0))
    }

    pub fn sigma_calibrated_scalar(&self) -> Option<f64> {
        self.sigma_calibrated.map(|s| s.get(0, 0))
    }

    pub fn rho_red(&self) -> Option<f64> {
        self.rho.map(|r| r[0])
    }
}

/// Every closed-form limit object the regime admits.
pub fn limit_report(model: &Model) -> Result<LimitReport> {
    let reg = regime(model);
    let Omegas { omega1, omega2 } = omegas(model);
    let k = model.k() as f64;
    let l2 = lambda2(model);
    let mut flags = Vec::new();
    let m = model.matrix();
    let mut report = LimitReport {
        rho: None,
        regime: reg,
        omega1,
        omega2,
        sigma_paper: None,
        sigma_sign_corrected: None,
        sigma_calibrated: None,
        kappa_hypothesis: None,
        critical_constants: None,
        critical_p: critical_p(m, model.params().theta).map(|p| p.value()),
        scaling: Scaling::None,
        kernel_exponent: None,
        kernel_exponent_calibrated: None,
        lambda1: k,
        lambda2: l2,
        flags: Vec::new(),
    };

    match reg.tag {
        RegimeTag::LlnViolated => flags.push(LimitFlag::LlnViolated),
        RegimeTag::Superdiffusive => {
            report.rho = Some(lln_limit(model)?);
            flags.push(LimitFlag::Superdiffusive);
        }
        RegimeTag::Diffusive | RegimeTag::Degenerate => {
            report.rho = Some(lln_limit(model)?);
            let sigma = sigma_diffusive(model)?;
            if sigma.outside_theorem {
                flags.push(LimitFlag::OutsideTheorem);
            }
            report.sigma_paper = Some(sigma.paper);
            report.sigma_sign_corrected = Some(sigma.sign_corrected);
            report.kappa_hypothesis = Some(k);
            report.sigma_calibrated = Some(sigma.sign_corrected.scale(k));
            report.scaling = Scaling::SqrtN;
            report.kernel_exponent = Some(l2);
            report.kernel_exponent_calibrated = Some(l2 / k);
        }
        RegimeTag::Critical => {
            report.rho = Some(lln_limit(model)?);
            let sigma = sigma_critical(model)?;
            report.sigma_paper = Some(sigma.paper);
            report.sigma_sign_corrected = Some(sigma.sign_corrected);
            report.kappa_hypothesis = Some(1.0);
            report.sigma_calibrated = Some(sigma.sign_corrected);
            report.critical_constants = Some(sigma.constants);
            report.scaling = Scaling::SqrtNLogN;
        }
    }
    if report.sigma_paper.is_some() && (m.b != 0 || m.d != 0) {
        flags.push(LimitFlag::PrintedU2Differs);
    }
    if report.sigma_paper.is_some_and(|s| s.get(0, 0) < 0.0) {
        flags.push(LimitFlag::PaperSigmaNegative);
    }
    report.flags = flags;
    Ok(report)
}

pub fn spectral_data(model: &Model) -> Result<SpectralData> {
    spectral::eigen(model)
}
