//! Exact finite-`n` law of the red count.
//!
//! States are indexed by `k`, the number of R-column steps so far, so level
//! `m` is a dense array of `m + 1` probabilities and the red count is
//! `R0 + k a + (m - k) c`. The forward pass runs in place, `O(n^2)` time and
//! `O(n)` memory. The step probability `q_m(r)` is rebuilt from the integers
//! `r` and `T_m` at every level.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Serialize, Serializer};
use statrs::distribution::{Binomial, Discrete};

use crate::error::{Result, UrnError};
use crate::linalg::Mat2;
use crate::prob::Rational;
use crate::urn::Model;

pub const DEFAULT_CAP: usize = 100_000;
/// Largest `n` accepted by the exact-rational mode.
pub const RATIONAL_MAX_N: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactDistribution {
    pub n: u64,
    /// `R0 + k a + (n - k) c` for `k = 0..=n`.
    pub support: Vec<i64>,
    pub probs: Vec<f64>,
}

impl ExactDistribution {
    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.probs).map(|(&r, &q)| r as f64 * q).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(&r, &q)| (r as f64 - mu).powi(2) * q)
            .sum()
    }

    /// `P(R_n <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .filter(|(&r, _)| r as f64 <= x)
            .map(|(_, &q)| q)
            .sum()
    }

    /// `(R, prob)` sorted by `R`, whatever the sign of `a - c`.
    pub fn sorted_by_red(&self) -> Vec<(i64, f64)> {
        let mut pairs: Vec<_> = self.support.iter().copied().zip(self.probs.iter().copied()).collect();
        pairs.sort_by_key(|&(r, _)| r);
        pairs
    }

    /// Largest pointwise gap between two laws on the same set of red counts.
    pub fn max_abs_diff_by_red(&self, other: &ExactDistribution) -> Option<f64> {
        let (x, y) = (self.sorted_by_red(), other.sorted_by_red());
        if x.len() != y.len() || x.iter().zip(&y).any(|(u, v)| u.0 != v.0) {
            return None;
        }
        Some(x.iter().zip(&y).map(|(u, v)| (u.1 - v.1).abs()).fold(0.0, f64::max))
    }
}

fn check_cap(n: u64, cap: usize) -> Result<()> {
    if n as u128 > cap as u128 {
        return Err(UrnError::CapExceeded {
            requested: n.min(usize::MAX as u64) as usize,
            cap,
        });
    }
    Ok(())
}

fn support(model: &Model, n: u64) -> Vec<i64> {
    let m = model.matrix();
    let r0 = model.params().r0;
    (0..=n as i64).map(|k| r0 + k * m.a + (n as i64 - k) * m.c).collect()
}

/// Exact law of `R_n` with the default cap.
pub fn exact_distribution(model: &Model, n: u64) -> Result<ExactDistribution> {
    exact_distribution_capped(model, n, DEFAULT_CAP)
}

pub fn exact_distribution_capped(model: &Model, n: u64, cap: usize) -> Result<ExactDistribution> {
    check_cap(n, cap)?;
    let m = model.matrix();
    let (p, theta) = (model.p(), model.theta());
    let (one_minus_p, slope) = (1.0 - p, theta * (2.0 * p - 1.0));
    let (r0, a, c) = (model.params().r0, m.a, m.c);

    let mut probs = vec![0.0f64; n as usize + 1];
    probs[0] = 1.0;
    for level in 0..n as i64 {
        let t = model.total_at(level as u64) as f64;
        // Descending k keeps probs[k + 1] from being overwritten before use.
        for k in (0..=level).rev() {
            let r = r0 + k * a + (level - k) * c;
            let q = one_minus_p + slope * (r as f64 / t);
            // Subnormal tails (< 2.3e-308) are flushed: they change nothing
            // measurable and slow float arithmetic down by orders of magnitude.
            let mass = match probs[k as usize] {
                x if x < f64::MIN_POSITIVE => 0.0,
                x => x,
            };
            probs[k as usize + 1] += mass * q;
            probs[k as usize] = mass * (1.0 - q);
        }
    }
    Ok(ExactDistribution {
        n,
        support: support(model, n),
        probs,
    })
}

/// Exact rational law, for bit-exact comparisons at small `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalDistribution {
    pub n: u64,
    pub support: Vec<i64>,
    pub probs: Vec<BigRational>,
}

impl RationalDistribution {
    pub fn total_mass(&self) -> BigRational {
        self.probs.iter().fold(BigRational::zero(), |acc, q| acc + q)
    }

    pub fn to_f64(&self) -> ExactDistribution {
        ExactDistribution {
            n: self.n,
            support: self.support.clone(),
            probs: self.probs.iter().map(|q| q.to_f64().unwrap_or(f64::NAN)).collect(),
        }
    }
}

impl Serialize for RationalDistribution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            n: u64,
            support: &'a [i64],
            probs: Vec<String>,
        }
        Repr {
            n: self.n,
            support: &self.support,
            probs: self.probs.iter().map(|q| q.to_string()).collect(),
        }
        .serialize(s)
    }
}

fn big(r: Rational) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

/// Needs exact `p` and `theta` and `n <= RATIONAL_MAX_N`.
pub fn exact_distribution_rational(model: &Model, n: u64) -> Result<RationalDistribution> {
    check_cap(n, RATIONAL_MAX_N)?;
    let params = model.params();
    let (Some(p), Some(theta)) = (params.p.exact(), params.theta.exact()) else {
        return Err(UrnError::domain("rational mode needs p and theta given exactly"));
    };
    let (p, theta) = (big(p), big(theta));
    let one = BigRational::one();
    let two = BigRational::from_integer(BigInt::from(2));
    let one_minus_p = &one - &p;
    let slope = &theta * (&two * &p - &one);
    let m = model.matrix();

    let mut probs = vec![BigRational::zero(); n as usize + 1];
    probs[0] = one.clone();
    for level in 0..n as i64 {
        let t = model.total_at(level as u64);
        for k in (0..=level).rev() {
            let r = params.r0 + k * m.a + (level - k) * m.c;
            let frac = BigRational::new(BigInt::from(r), BigInt::from(t));
            let q = &one_minus_p + &slope * frac;
            let mass = std::mem::take(&mut probs[k as usize]);
            probs[k as usize + 1] += &mass * &q;
            probs[k as usize] = mass * (&one - q);
        }
    }
    Ok(RationalDistribution {
        n,
        support: support(model, n),
        probs,
    })
}

/// Mean and covariance of `(R_n, B_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactMoments {
    pub n: u64,
    pub mean: [f64; 2],
    pub cov: Mat2,
}

pub fn exact_moments(model: &Model, n: u64) -> Result<ExactMoments> {
    let dist = exact_distribution(model, n)?;
    Ok(moments_of(model, &dist))
}

pub fn moments_of(model: &Model, dist: &ExactDistribution) -> ExactMoments {
    let t = model.total_at(dist.n) as f64;
    let (mu, var) = (dist.mean(), dist.variance());
    ExactMoments {
        n: dist.n,
        mean: [mu, t - mu],
        // B = T - R, so every entry is +-Var(R).
        cov: Mat2::new(var, -var, -var, var),
    }
}

/// `E[R_m]` for `m = 0..=n` from
/// `E[R_{m+1}] = (1 + lambda2 / T_m) E[R_m] + c + (a - c)(1 - p)`.
pub fn mean_recursion(model: &Model, n: u64) -> Vec<f64> {
    let m = model.matrix();
    let p = model.p();
    let (a, c) = (m.a as f64, m.c as f64);
    let l2 = model.theta() * (2.0 * p - 1.0) * (a - c);
    let drift = c + (a - c) * (1.0 - p);
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut e = model.params().r0 as f64;
    out.push(e);
    for level in 0..n {
        e = (1.0 + l2 / model.total_at(level) as f64) * e + drift;
        out.push(e);
    }
    out
}

/// `theta = 0`: `R_n = R0 + c n + (a - c) X` with `X ~ Binomial(n, 1 - p)`.
pub fn iid_closed_form(model: &Model, n: u64) -> Result<ExactDistribution> {
    if !model.params().theta.is_zero() {
        return Err(UrnError::domain(format!(
            "closed form needs theta = 0, got {}",
            model.params().theta
        )));
    }
    let q = 1.0 - model.p();
    let probs = if q == 0.0 || q == 1.0 {
        let mut v = vec![0.0; n as usize + 1];
        v[if q == 0.0 { 0 } else { n as usize }] = 1.0;
        v
    } else {
        let binom = Binomial::new(q, n).map_err(|e| UrnError::domain(e.to_string()))?;
        (0..=n).map(|k| binom.pmf(k)).collect()
    };
    Ok(ExactDistribution {
        n,
        support: support(model, n),
        probs,
    })
}
