//! Streaming moment accumulators with pairwise merges.
//!
//! For two partial summaries `a`, `b` with `n = n_a + n_b` and
//! `d = mean_b - mean_a`:
//!
//! ```text
//! mean = mean_a + d n_b / n
//! M2   = M2_a + M2_b + d^2 n_a n_b / n
//! M3   = M3_a + M3_b + d^3 n_a n_b (n_a - n_b) / n^2
//!        + 3 d (n_a M2_b - n_b M2_a) / n
//! M4   = M4_a + M4_b + d^4 n_a n_b (n_a^2 - n_a n_b + n_b^2) / n^3
//!        + 6 d^2 (n_a^2 M2_b + n_b^2 M2_a) / n^2 + 4 d (n_a M3_b - n_b M3_a) / n
//! C    = C_a + C_b + dx dy n_a n_b / n
//! ```
//!
//! `push` is a merge with a one-point summary. Merges are not associative in
//! floating point, so callers fix the merge tree (see the ensemble runner).

use serde::Serialize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2 - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let d = other.mean - self.mean;
        let d2 = d * d;
        let (a, b) = (*self, *other);

        self.count += other.count;
        self.mean = a.mean + d * nb / n;
        self.m2 = a.m2 + b.m2 + d2 * na * nb / n;
        self.m3 = a.m3 + b.m3 + d2 * d * na * nb * (na - nb) / (n * n) + 3.0 * d * (na * b.m2 - nb * a.m2) / n;
        self.m4 = a.m4
            + b.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * b.m2 + nb * nb * a.m2) / (n * n)
            + 4.0 * d * (na * b.m3 - nb * a.m3) / n;
    }

    /// Unbiased (`n - 1`) variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        self.m2 / (self.count - 1) as f64
    }

    pub fn mean_se(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        (self.variance() / self.count as f64).sqrt()
    }

    /// Large-sample standard error of [`Moments::variance`]:
    /// `sqrt((mu4 - sigma^4 (n - 3) / (n - 1)) / n)`.
    pub fn variance_se(&self) -> f64 {
        if self.count < 4 {
            return f64::NAN;
        }
        let n = self.count as f64;
        let mu4 = self.m4 / n;
        let s2 = self.variance();
        ((mu4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
    }

    /// `g1 = sqrt(n) M3 / M2^(3/2)`; zero for a constant sample.
    pub fn skewness(&self) -> f64 {
        if self.m2 <= 0.0 {
            return 0.0;
        }
        (self.count as f64).sqrt() * self.m3 / self.m2.powf(1.5)
    }

    /// `g2 = n M4 / M2^2 - 3`; zero for a constant sample.
    pub fn excess_kurtosis(&self) -> f64 {
        if self.m2 <= 0.0 {
            return 0.0;
        }
        self.count as f64 * self.m4 / (self.m2 * self.m2) - 3.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CoMoments {
    pub count: u64,
    pub mean_x: f64,
    pub mean_y: f64,
    pub m2_x: f64,
    pub m2_y: f64,
    pub c_xy: f64,
}

impl CoMoments {
    pub fn push(&mut self, x: f64, y: f64) {
        self.count += 1;
        let n = self.count as f64;
        let dx = x - self.mean_x;
        let dy = y - self.mean_y;
        self.mean_x += dx / n;
        self.mean_y += dy / n;
        self.m2_x += dx * (x - self.mean_x);
        self.m2_y += dy * (y - self.mean_y);
        self.c_xy += dx * (y - self.mean_y);
    }

    pub fn merge(&mut self, other: &CoMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let dx = other.mean_x - self.mean_x;
        let dy = other.mean_y - self.mean_y;
        let w = na * nb / n;
        self.count += other.count;
        self.mean_x += dx * nb / n;
        self.mean_y += dy * nb / n;
        self.m2_x += other.m2_x + dx * dx * w;
        self.m2_y += other.m2_y + dy * dy * w;
        self.c_xy += other.c_xy + dx * dy * w;
    }

    fn denom(&self) -> f64 {
        (self.count.max(2) - 1) as f64
    }

    pub fn covariance(&self) -> f64 {
        self.c_xy / self.denom()
    }

    pub fn var_x(&self) -> f64 {
        self.m2_x / self.denom()
    }

    pub fn var_y(&self) -> f64 {
        self.m2_y / self.denom()
    }

    /// Normal-theory standard error `sqrt((var_x var_y + cov^2) / (n - 1))`.
    pub fn covariance_se(&self) -> f64 {
        let c = self.covariance();
        ((self.var_x() * self.var_y() + c * c) / self.denom()).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(xs: &[f64]) -> (f64, f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let c = |k: i32| xs.iter().map(|x| (x - mean).powi(k)).sum::<f64>();
        (mean, c(2), c(3), c(4))
    }

    #[test]
    fn push_matches_two_pass() {
        let xs: Vec<f64> = (0..200).map(|i| ((i * 37 % 101) as f64).sqrt() - 3.0).collect();
        let mut m = Moments::default();
        xs.iter().for_each(|&x| m.push(x));
        let (mean, m2, m3, m4) = naive(&xs);
        assert!((m.mean - mean).abs() < 1e-12);
        assert!((m.m2 - m2).abs() < 1e-9 * m2);
        assert!((m.m3 - m3).abs() < 1e-9 * m2.powf(1.5));
        assert!((m.m4 - m4).abs() < 1e-9 * m4);
    }

    #[test]
    fn merge_matches_push() {
        let xs: Vec<f64> = (0..300).map(|i| ((i * 13 % 29) as f64).powi(2) / 7.0).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let mut left = Moments::default();
        let mut right = Moments::default();
        xs[..111].iter().for_each(|&x| left.push(x));
        xs[111..].iter().for_each(|&x| right.push(x));
        left.merge(&right);
        assert_eq!(left.count, whole.count);
        for (a, b) in [(left.mean, whole.mean), (left.m2, whole.m2), (left.m3, whole.m3), (left.m4, whole.m4)] {
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn comoments_merge() {
        let pts: Vec<(f64, f64)> = (0..100).map(|i| (i as f64, ((i * 7) % 11) as f64)).collect();
        let mut whole = CoMoments::default();
        pts.iter().for_each(|&(x, y)| whole.push(x, y));
        let mut a = CoMoments::default();
        let mut b = CoMoments::default();
        pts[..40].iter().for_each(|&(x, y)| a.push(x, y));
        pts[40..].iter().for_each(|&(x, y)| b.push(x, y));
        a.merge(&b);
        assert!((a.covariance() - whole.covariance()).abs() < 1e-10);
        assert!((a.var_x() - whole.var_x()).abs() < 1e-10);
    }

    #[test]
    fn constant_sample_has_no_shape() {
        let mut m = Moments::default();
        (0..10).for_each(|_| m.push(4.0));
        assert_eq!((m.variance(), m.skewness(), m.excess_kurtosis()), (0.0, 0.0, 0.0));
    }
}
