//! Mean replacement matrix, its eigen-structure and the second-moment matrix.
//!
//! The urn is re-read as an urn with a random replacement matrix: a red draw
//! adds `xi_1`, a blue draw adds `xi_2`, each equal to one of the two columns.
//! Everything here is closed form; [`residuals`] re-derives the same objects
//! numerically so callers can see how far the two routes drift apart.

use nalgebra::Matrix2;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};
use crate::linalg::{max_abs, Mat2, RANK_ONE};
use crate::prob::{Probability, Rational};
use crate::urn::{Model, ReplacementMatrix};

/// Residual bounds asserted by [`eigen`] and [`second_moment_matrix`].
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-12;
pub const NUMERIC_EIGEN_TOL: f64 = 1e-10;
pub const B_DECOMPOSITION_TOL: f64 = 1e-12;
/// Tolerance on `2 lambda2 - K` when no exact parameters are available.
pub const CRITICAL_TOL: f64 = 1e-12;

/// Laws of the two random columns: the probability each equals `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomColumnLaw {
    pub prob_xi1_r: f64,
    pub prob_xi2_r: f64,
}

pub fn column_laws(model: &Model) -> RandomColumnLaw {
    let (p, theta) = (model.p(), model.theta());
    RandomColumnLaw {
        prob_xi1_r: (2.0 * p - 1.0) * theta + (1.0 - p),
        prob_xi2_r: 1.0 - p,
    }
}

/// `A = [[E xi_11, E xi_21], [E xi_12, E xi_22]]`; columns sum to `K`.
pub fn mean_matrix(law: &RandomColumnLaw, matrix: &ReplacementMatrix) -> Mat2 {
    let (a, c, k) = (matrix.a as f64, matrix.c as f64, matrix.k() as f64);
    let e11 = c + (a - c) * law.prob_xi1_r;
    let e21 = c + (a - c) * law.prob_xi2_r;
    Mat2::new(e11, e21, k - e11, k - e21)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    #[serde(rename = "A")]
    pub a: Mat2,
    pub lambda1: f64,
    pub lambda2: f64,
    pub v1: [f64; 2],
    pub v2: [f64; 2],
    pub u1: [f64; 2],
    /// Second left vector with both components positive, in the form the
    /// covariance expansions `omega1 = u21 - u22`, `omega2 = u22` rely on.
    pub u2: [f64; 2],
    #[serde(rename = "B")]
    pub b: Mat2,
    pub alpha: f64,
    pub beta: f64,
}

impl SpectralData {
    /// The genuine left eigenvector for `lambda2`: `u2` with its second
    /// component negated. Satisfies `u2ᵀ A = lambda2 u2ᵀ` and `u2ᵀ v1 = 0`.
    pub fn u2_sign_corrected(&self) -> [f64; 2] {
        [self.u2[0], -self.u2[1]]
    }
}

/// `B = v11 E[xi_1 xi_1ᵀ] + v12 E[xi_2 xi_2ᵀ]` and its `alpha`/`beta` split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecondMoments {
    pub b: Mat2,
    pub alpha: f64,
    pub beta: f64,
    /// `alpha [[1,-1],[-1,1]] + beta [[0,1],[1,-2]] + K^2 [[0,0],[0,1]]`.
    pub b_decomposed: Mat2,
}

fn lambda2(model: &Model) -> f64 {
    let m = model.matrix();
    model.theta() * (2.0 * model.p() - 1.0) * (m.a - m.c) as f64
}

fn normaliser(model: &Model) -> Result<f64> {
    let denom = model.k() as f64 - lambda2(model);
    if denom == 0.0 {
        return Err(UrnError::DegenerateNormalization);
    }
    Ok(denom)
}

/// Right eigenvector for `lambda1 = K`, normalised to sum to one.
fn v1(model: &Model) -> Result<[f64; 2]> {
    let m = model.matrix();
    let (p, theta) = (model.p(), model.theta());
    let (a, c, k) = (m.a as f64, m.c as f64, m.k() as f64);
    let denom = normaliser(model)?;
    Ok([
        (c + (a - c) * (1.0 - p)) / denom,
        (k - c - (a - c) * (theta * (2.0 * p - 1.0) + 1.0 - p)) / denom,
    ])
}

pub fn second_moment_matrix(model: &Model) -> Result<SecondMoments> {
    let m = model.matrix();
    let (p, theta) = (model.p(), model.theta());
    let (a, b, c, d, k) = (m.a as f64, m.b as f64, m.c as f64, m.d as f64, m.k() as f64);
    if m.a + m.c == 0 {
        return Err(UrnError::domain("a + c = 0"));
    }
    let denom = normaliser(model)?;
    let slope = theta * (2.0 * p - 1.0);

    let alpha = c * c + (a * a - c * c) * (k * (1.0 - p) + c * slope) / denom;
    let beta = k * (alpha + a * c) / (a + c);

    let law = column_laws(model);
    let rr = Mat2::outer([a, b], [a, b]);
    let cc = Mat2::outer([c, d], [c, d]);
    let moment = |pr: f64| rr.scale(pr).add(&cc.scale(1.0 - pr));
    let v = v1(model)?;
    let direct = moment(law.prob_xi1_r)
        .scale(v[0])
        .add(&moment(law.prob_xi2_r).scale(v[1]));

    let decomposed = RANK_ONE
        .scale(alpha)
        .add(&Mat2::new(0.0, 1.0, 1.0, -2.0).scale(beta))
        .add(&Mat2::new(0.0, 0.0, 0.0, k * k));

    let gap = direct.max_abs_diff(&decomposed);
    if gap >= B_DECOMPOSITION_TOL * (1.0 + k * k) {
        return Err(UrnError::SelfCheck(format!(
            "B decomposition residual {gap:e}"
        )));
    }
    Ok(SecondMoments {
        b: direct,
        alpha,
        beta,
        b_decomposed: decomposed,
    })
}

/// Closed-form spectrum of `A` with the normalisations used downstream.
pub fn eigen(model: &Model) -> Result<SpectralData> {
    let m = model.matrix();
    let (p, theta) = (model.p(), model.theta());
    let (a, c, k) = (m.a as f64, m.c as f64, m.k() as f64);
    let denom = normaliser(model)?;
    let a_mat = mean_matrix(&column_laws(model), m);
    let moments = second_moment_matrix(model)?;

    let data = SpectralData {
        a: a_mat,
        lambda1: k,
        lambda2: lambda2(model),
        v1: v1(model)?,
        v2: [1.0 / denom, -1.0 / denom],
        u1: [1.0, 1.0],
        u2: [
            k - c - (a - c) * (theta * (2.0 * p - 1.0) + (1.0 - p)),
            c + (a - c) * (1.0 - p),
        ],
        b: moments.b,
        alpha: moments.alpha,
        beta: moments.beta,
    };

    let res = residuals(&data);
    if res.eigen_residual >= EIGEN_RESIDUAL_TOL * (1.0 + k) {
        return Err(UrnError::SelfCheck(format!(
            "|A v1 - K v1| = {:e}",
            res.eigen_residual
        )));
    }
    if res.numeric_eigen_gap >= NUMERIC_EIGEN_TOL * (1.0 + k) {
        return Err(UrnError::SelfCheck(format!(
            "closed-form eigenvalues differ from numeric solve by {:e}",
            res.numeric_eigen_gap
        )));
    }
    Ok(data)
}

/// How far the closed forms sit from independent numeric evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralResiduals {
    /// `‖A v1 − λ1 v1‖∞`.
    pub eigen_residual: f64,
    /// `‖A v2 − λ2 v2‖∞`.
    pub second_eigen_residual: f64,
    /// Largest gap between (λ1, λ2) and a Schur-based eigen-solve of `A`.
    pub numeric_eigen_gap: f64,
    pub v1_sum_error: f64,
    /// `λ2 − (E xi_11 − E xi_21)`.
    pub lambda2_difference_gap: f64,
    /// `‖u2ᵀA − λ2 u2ᵀ‖∞` for the sign-corrected vector.
    pub left_eigen_residual: f64,
    pub u1_v1: f64,
    pub u1_v2: f64,
    pub b_decomposition: f64,
}

pub fn residuals(data: &SpectralData) -> SpectralResiduals {
    let a = &data.a;
    let av1 = a.mul_vec(data.v1);
    let av2 = a.mul_vec(data.v2);
    let eig = |v: [f64; 2], av: [f64; 2], l: f64| max_abs([av[0] - l * v[0], av[1] - l * v[1]]);

    let numeric_eigen_gap = match a.to_nalgebra().eigenvalues() {
        Some(ev) => {
            let mut got = [ev[0], ev[1]];
            got.sort_by(|x, y| x.total_cmp(y));
            let mut want = [data.lambda1, data.lambda2];
            want.sort_by(|x, y| x.total_cmp(y));
            (got[0] - want[0]).abs().max((got[1] - want[1]).abs())
        }
        None => f64::INFINITY,
    };

    let u = data.u2_sign_corrected();
    let ua = a.transpose().mul_vec(u);
    let k = data.lambda1;
    let decomposed = RANK_ONE
        .scale(data.alpha)
        .add(&Mat2::new(0.0, 1.0, 1.0, -2.0).scale(data.beta))
        .add(&Mat2::new(0.0, 0.0, 0.0, k * k));

    SpectralResiduals {
        eigen_residual: eig(data.v1, av1, data.lambda1),
        second_eigen_residual: eig(data.v2, av2, data.lambda2),
        numeric_eigen_gap,
        v1_sum_error: (data.v1[0] + data.v1[1] - 1.0).abs(),
        lambda2_difference_gap: (data.lambda2 - (a.get(0, 0) - a.get(0, 1))).abs(),
        left_eigen_residual: max_abs([ua[0] - data.lambda2 * u[0], ua[1] - data.lambda2 * u[1]]),
        u1_v1: data.u1[0] * data.v1[0] + data.u1[1] * data.v1[1],
        u1_v2: data.u1[0] * data.v2[0] + data.u1[1] * data.v2[1],
        b_decomposition: data.b.max_abs_diff(&decomposed),
    }
}

/// Eigenvalues of `A` via nalgebra, kept apart from the closed forms.
pub fn numeric_eigenvalues(a: &Mat2) -> Option<[f64; 2]> {
    let m: Matrix2<f64> = a.to_nalgebra();
    m.eigenvalues().map(|v| [v[0], v[1]])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeTag {
    /// `2 lambda2 < K`, `p != 1/2`: `sqrt(n)` Gaussian fluctuations.
    Diffusive,
    /// `2 lambda2 = K`: `sqrt(n log n)` fluctuations.
    Critical,
    /// `K/2 < lambda2 < K`: classification only.
    Superdiffusive,
    /// `lambda2 >= K`: the proportion has no deterministic limit.
    LlnViolated,
    /// `p = 1/2`: `lambda2 = 0`, evaluated but outside the CLT hypotheses.
    Degenerate,
}

impl RegimeTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeTag::Diffusive => "diffusive",
            RegimeTag::Critical => "critical",
            RegimeTag::Superdiffusive => "superdiffusive",
            RegimeTag::LlnViolated => "lln_violated",
            RegimeTag::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub tag: RegimeTag,
    /// `2 lambda2 / lambda1`.
    pub lambda_ratio: f64,
    /// Whether the decision was taken in exact rational arithmetic.
    pub exact: bool,
}

pub fn regime(model: &Model) -> Regime {
    let m = model.matrix();
    let k = m.k();
    let lambda_ratio = 2.0 * lambda2(model) / k as f64;
    let params = model.params();

    if let (Some(p), Some(theta)) = (params.p.exact(), params.theta.exact()) {
        let one = Rational::one();
        let two = Rational::from_integer(2);
        let l2 = theta * (two * p - one) * Rational::from_integer((m.a - m.c) as i128);
        let k = Rational::from_integer(k as i128);
        let tag = if l2 >= k {
            RegimeTag::LlnViolated
        } else if two * l2 > k {
            RegimeTag::Superdiffusive
        } else if two * l2 == k {
            RegimeTag::Critical
        } else if params.p.is_half() {
            RegimeTag::Degenerate
        } else {
            RegimeTag::Diffusive
        };
        return Regime {
            tag,
            lambda_ratio,
            exact: true,
        };
    }

    let (l2, kf) = (lambda2(model), k as f64);
    let tag = if l2 >= kf - CRITICAL_TOL {
        RegimeTag::LlnViolated
    } else if (2.0 * l2 - kf).abs() <= CRITICAL_TOL {
        RegimeTag::Critical
    } else if 2.0 * l2 > kf {
        RegimeTag::Superdiffusive
    } else if params.p.is_half() {
        RegimeTag::Degenerate
    } else {
        RegimeTag::Diffusive
    };
    Regime {
        tag,
        lambda_ratio,
        exact: false,
    }
}

/// Critical memory parameter `p_c = K / (4 theta (a - c)) + 1/2`, when it
/// lies in `[0, 1]`. Exact whenever `theta` is.
pub fn critical_p(matrix: &ReplacementMatrix, theta: Probability) -> Option<Probability> {
    let diff = matrix.a - matrix.c;
    if theta.is_zero() || diff == 0 {
        return None;
    }
    let k = matrix.k();
    let pc = match theta.exact() {
        Some(t) => {
            let r = Rational::from_integer(k as i128)
                / (Rational::from_integer(4 * diff as i128) * t)
                + Rational::new(1, 2);
            Probability::from_rational(r)
        }
        None => Probability::new(k as f64 / (4.0 * theta.value() * diff as f64) + 0.5),
    };
    pc.in_unit_interval().then_some(pc)
}
