//! Dense 2x2 matrices, row-major, serialised as nested arrays.

use std::ops::{Mul, Neg};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);
    pub const ZERO: Mat2 = Mat2([[0.0, 0.0], [0.0, 0.0]]);

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub fn symmetric(diag0: f64, off: f64, diag1: f64) -> Self {
        Mat2([[diag0, off], [off, diag1]])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn transpose(&self) -> Self {
        let [[a, b], [c, d]] = self.0;
        Mat2([[a, c], [b, d]])
    }

    pub fn det(&self) -> f64 {
        let [[a, b], [c, d]] = self.0;
        a * d - b * c
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        let scale = self.max_abs().powi(2);
        if det == 0.0 || !det.is_finite() || det.abs() <= 1e-14 * scale {
            return Err(Error::SingularMatrix(format!("determinant {det:e}")));
        }
        let [[a, b], [c, d]] = self.0;
        Ok(Mat2([[d / det, -b / det], [-c / det, a / det]]))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.0[0][1] - self.0[1][0]).abs() <= tol * self.max_abs().max(1.0)
    }

    /// Eigenvalues `(small, large)` of the symmetric part.
    pub fn sym_eigenvalues(&self) -> (f64, f64) {
        let a = self.0[0][0];
        let d = self.0[1][1];
        let b = 0.5 * (self.0[0][1] + self.0[1][0]);
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        (mean - rad, mean + rad)
    }

    /// Symmetric positive semi-definite up to `tol` relative to the largest entry.
    pub fn is_psd(&self, tol: f64) -> bool {
        self.is_symmetric(tol) && self.sym_eigenvalues().0 >= -tol * self.max_abs().max(f64::MIN_POSITIVE)
    }

    /// `M^{-1/2}` of a symmetric positive definite matrix.
    pub fn inv_sqrt_spd(&self) -> Result<Self> {
        let (l0, l1) = self.sym_eigenvalues();
        if !(l0 > 1e-14 * l1.abs().max(f64::MIN_POSITIVE)) {
            return Err(Error::SingularMatrix(format!(
                "matrix is not positive definite (eigenvalues {l0:e}, {l1:e})"
            )));
        }
        let a = self.0[0][0];
        let b = 0.5 * (self.0[0][1] + self.0[1][0]);
        // Unit eigenvector of the small eigenvalue, chosen from the better conditioned form.
        let (vx, vy) = if (a - l1).abs() >= (self.0[1][1] - l0).abs() {
            (b, l0 - a)
        } else {
            (l0 - self.0[1][1], b)
        };
        let norm = vx.hypot(vy);
        let (ux, uy) = if norm == 0.0 { (1.0, 0.0) } else { (vx / norm, vy / norm) };
        // Second eigenvector is orthogonal: (-uy, ux).
        let s0 = 1.0 / l0.sqrt();
        let s1 = 1.0 / l1.sqrt();
        let p = [[ux * ux, ux * uy], [ux * uy, uy * uy]];
        let q = [[uy * uy, -ux * uy], [-ux * uy, ux * ux]];
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = s0 * p[i][j] + s1 * q[i][j];
            }
        }
        Ok(Mat2(out))
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    /// `self * m * self^T`.
    pub fn congruence(&self, m: &Mat2) -> Mat2 {
        let out = *self * *m * self.transpose();
        // Symmetrise rounding noise.
        let off = 0.5 * (out.0[0][1] + out.0[1][0]);
        Mat2([[out.0[0][0], off], [off, out.0[1][1]]])
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (self.0, rhs.0);
        Mat2(std::array::from_fn(|i| {
            std::array::from_fn(|j| a[i][0] * b[0][j] + a[i][1] * b[1][j])
        }))
    }
}

impl Neg for Mat2 {
    type Output = Mat2;

    fn neg(self) -> Mat2 {
        let [[a, b], [c, d]] = self.0;
        Mat2([[-a, -b], [-c, -d]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_square_root_whitens() {
        for m in [
            Mat2::symmetric(2.0, 0.3, 1.0),
            Mat2::symmetric(1.79, -1.35, 2.79),
            Mat2::symmetric(4.0, 0.0, 0.25),
            Mat2::symmetric(1.0, 0.999, 1.0),
        ] {
            let w = m.inv_sqrt_spd().unwrap();
            let id = w.congruence(&m);
            assert!(id.max_abs_diff(&Mat2::IDENTITY) < 1e-10, "{m:?} -> {id:?}");
            assert!(w.is_symmetric(1e-14));
        }
        assert!(Mat2::symmetric(1.0, 1.0, 1.0).inv_sqrt_spd().is_err());
        assert_eq!(Mat2::IDENTITY.inv_sqrt_spd().unwrap(), Mat2::IDENTITY);
    }

    #[test]
    fn inverse_and_determinant() {
        let m = Mat2::new(4.0, 12.0, -2.0, -12.0);
        assert_eq!(m.det(), -24.0);
        let inv = m.inverse().unwrap();
        assert!((m * inv).max_abs_diff(&Mat2::IDENTITY) < 1e-15);
        assert!(Mat2::new(1.0, 2.0, 2.0, 4.0).inverse().is_err());
    }

    #[test]
    fn psd_detection() {
        assert!(Mat2::symmetric(1.0, 0.5, 1.0).is_psd(1e-12));
        assert!(!Mat2::symmetric(1.0, 2.0, 1.0).is_psd(1e-12));
        assert!(Mat2::ZERO.is_psd(1e-12));
        assert!(!Mat2::new(1.0, 0.5, 0.0, 1.0).is_psd(1e-12));
    }
}
