//! Probabilities with an optional exact rational value.
//!
//! The critical curve is a measure-zero set, so regime decisions and the
//! critical point are computed in rational arithmetic whenever both `p` and
//! `theta` carry an exact value. Decimal strings such as `"0.875"` parse to
//! their exact rational (`7/8`), as do fractions like `"3/4"`.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type Rational = Ratio<i128>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probability {
    value: f64,
    exact: Option<Rational>,
}

impl Probability {
    /// A probability known only as a double.
    pub fn new(value: f64) -> Self {
        Probability { value, exact: None }
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        Self::from_rational(Rational::new(num as i128, den as i128))
    }

    pub fn from_rational(r: Rational) -> Self {
        Probability {
            value: r.to_f64().unwrap_or(f64::NAN),
            exact: Some(r),
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn exact(&self) -> Option<Rational> {
        self.exact
    }

    pub fn in_unit_interval(&self) -> bool {
        match self.exact {
            Some(r) => r >= Rational::zero() && r <= Rational::from_integer(1),
            None => (0.0..=1.0).contains(&self.value),
        }
    }

    pub fn is_half(&self) -> bool {
        match self.exact {
            Some(r) => r == Rational::new(1, 2),
            None => self.value == 0.5,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self.exact {
            Some(r) => r.is_zero(),
            None => self.value == 0.0,
        }
    }
}

impl From<f64> for Probability {
    fn from(value: f64) -> Self {
        Probability::new(value)
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.exact {
            Some(r) if *r.denom() != 1 => write!(f, "{}/{}", r.numer(), r.denom()),
            _ => write!(f, "{}", self.value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse {0:?} as a probability")]
pub struct ParseProbabilityError(String);

impl FromStr for Probability {
    type Err = ParseProbabilityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let err = || ParseProbabilityError(s.to_string());
        if let Some((n, d)) = s.split_once('/') {
            let n: i128 = n.trim().parse().map_err(|_| err())?;
            let d: i128 = d.trim().parse().map_err(|_| err())?;
            if d == 0 {
                return Err(err());
            }
            return Ok(Probability::from_rational(Rational::new(n, d)));
        }
        if let Some(r) = parse_decimal(s) {
            return Ok(Probability::from_rational(r));
        }
        // scientific notation and friends: no exact value
        s.parse::<f64>().map(Probability::new).map_err(|_| err())
    }
}

/// Plain decimal literal (`[-]digits[.digits]`) to an exact rational.
fn parse_decimal(s: &str) -> Option<Rational> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    // keeps 10^scale inside i128 with room for the products taken later
    if int.len() + frac.len() > 15 {
        return None;
    }
    let digits = format!("{int}{frac}");
    let num: i128 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
    let den = 10i128.pow(frac.len() as u32);
    let r = Rational::new(num, den);
    Some(if neg { -r } else { r })
}

impl Serialize for Probability {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.value)
    }
}

impl<'de> Deserialize<'de> for Probability {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        f64::deserialize(d).map(Probability::new)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimals_parse_exactly() {
        let p: Probability = "0.875".parse().unwrap();
        assert_eq!(p.exact(), Some(Rational::new(7, 8)));
        assert_eq!(p.value(), 0.875);
        let p: Probability = "0.6".parse().unwrap();
        assert_eq!(p.exact(), Some(Rational::new(3, 5)));
        let p: Probability = "1".parse().unwrap();
        assert_eq!(p.exact(), Some(Rational::from_integer(1)));
        let p: Probability = ".5".parse().unwrap();
        assert!(p.is_half());
    }

    #[test]
    fn fractions_and_floats() {
        let p: Probability = "3/4".parse().unwrap();
        assert_eq!(p.exact(), Some(Rational::new(3, 4)));
        let p: Probability = "1e-3".parse().unwrap();
        assert_eq!(p.exact(), None);
        assert_eq!(p.value(), 1e-3);
        assert!("x".parse::<Probability>().is_err());
        assert!("1/0".parse::<Probability>().is_err());
    }

    #[test]
    fn range_check_uses_exact_value() {
        assert!(Probability::ratio(1, 1).in_unit_interval());
        assert!(!Probability::ratio(5, 4).in_unit_interval());
        assert!(!Probability::new(-0.1).in_unit_interval());
    }
}
