use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

/// Row-major 2×2 real matrix. Serialises as `[[m00, m01], [m10, m11]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Mat2(pub [[f64; 2]; 2]);

/// `[[1, -1], [-1, 1]]`, the shape shared by every limiting covariance here.
pub const RANK_ONE: Mat2 = Mat2([[1.0, -1.0], [-1.0, 1.0]]);

impl Mat2 {
    pub fn new(m00: f64, m01: f64, m10: f64, m11: f64) -> Self {
        Mat2([[m00, m01], [m10, m11]])
    }

    pub fn zeros() -> Self {
        Mat2::default()
    }

    pub fn outer(u: [f64; 2], v: [f64; 2]) -> Self {
        Mat2([[u[0] * v[0], u[0] * v[1]], [u[1] * v[0], u[1] * v[1]]])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn scale(&self, s: f64) -> Self {
        let m = self.0;
        Mat2([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    pub fn add(&self, other: &Mat2) -> Self {
        let (a, b) = (self.0, other.0);
        Mat2([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        let m = self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    /// `uᵀ M u`.
    pub fn quad_form(&self, u: [f64; 2]) -> f64 {
        let mu = self.mul_vec(u);
        u[0] * mu[0] + u[1] * mu[1]
    }

    pub fn transpose(&self) -> Self {
        let m = self.0;
        Mat2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn matmul(&self, other: &Mat2) -> Self {
        let (a, b) = (self.0, other.0);
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.0[0][1] - self.0[1][0]).abs() <= tol
    }

    pub fn to_nalgebra(&self) -> Matrix2<f64> {
        let m = self.0;
        Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])
    }

    pub fn from_nalgebra(m: &Matrix2<f64>) -> Self {
        Mat2([[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]])
    }
}

pub(crate) fn max_abs(v: [f64; 2]) -> f64 {
    v[0].abs().max(v[1].abs())
}
