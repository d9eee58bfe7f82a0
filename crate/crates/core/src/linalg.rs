//! 2x2 matrices and plane vectors.

use serde::{Deserialize, Serialize};

pub type Vec2 = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    /// Counter-clockwise rotation by `theta`.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Mat2([[c, -s], [s, c]])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Mat2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn mul(&self, other: &Mat2) -> Mat2 {
        let (a, b) = (&self.0, &other.0);
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn sub(&self, other: &Mat2) -> Mat2 {
        let (a, b) = (&self.0, &other.0);
        Mat2([
            [a[0][0] - b[0][0], a[0][1] - b[0][1]],
            [a[1][0] - b[1][0], a[1][1] - b[1][1]],
        ])
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        let m = &self.0;
        Mat2([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    /// Max-row-sum norm.
    pub fn norm_inf(&self) -> f64 {
        let m = &self.0;
        (m[0][0].abs() + m[0][1].abs()).max(m[1][0].abs() + m[1][1].abs())
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0_f64, |acc, x| acc.max(x.abs()))
    }

    /// Solve `self * x = rhs`; `None` when `|det|` is at or below `singular_tol`.
    pub fn solve(&self, rhs: Vec2, singular_tol: f64) -> Option<Vec2> {
        let d = self.det();
        if !(d.abs() > singular_tol) {
            return None;
        }
        let m = &self.0;
        Some([
            (m[1][1] * rhs[0] - m[0][1] * rhs[1]) / d,
            (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / d,
        ])
    }

    /// Eigen-decomposition of a symmetric matrix: eigenvalues descending and
    /// the matching unit eigenvectors.
    pub fn symmetric_eigen(&self) -> ([f64; 2], [Vec2; 2]) {
        let [[a, b], [_, d]] = self.0;
        let mean = 0.5 * (a + d);
        let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        let (l1, l2) = (mean + r, mean - r);
        if b.abs() <= f64::EPSILON * (a.abs() + d.abs()).max(f64::MIN_POSITIVE) {
            return if a >= d {
                ([a, d], [[1.0, 0.0], [0.0, 1.0]])
            } else {
                ([d, a], [[0.0, 1.0], [1.0, 0.0]])
            };
        }
        // (A - l1) v = 0 with v = (b, l1 - a) or (l1 - d, b), pick the larger
        let v1 = if (l1 - a).abs() > (l1 - d).abs() {
            [b, l1 - a]
        } else {
            [l1 - d, b]
        };
        let v1 = normalize(v1);
        let v2 = [-v1[1], v1[0]];
        ([l1, l2], [v1, v2])
    }
}

pub fn norm(v: Vec2) -> f64 {
    v[0].hypot(v[1])
}

pub fn normalize(v: Vec2) -> Vec2 {
    let n = norm(v);
    [v[0] / n, v[1] / n]
}

pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

pub fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = norm3(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Angle between two lines (direction sign ignored), in `[0, pi/2]`.
pub fn line_angle3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).abs() / (norm3(a) * norm3(b));
    let cr = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    (norm3(cr) / (norm3(a) * norm3(b))).atan2(dot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_eigen_reconstructs() {
        let m = Mat2::new(-2.0, 1.0, 1.0, 0.0);
        let (l, v) = m.symmetric_eigen();
        assert!(l[0] > l[1]);
        for k in 0..2 {
            let mv = m.apply(v[k]);
            assert!((mv[0] - l[k] * v[k][0]).abs() < 1e-14);
            assert!((mv[1] - l[k] * v[k][1]).abs() < 1e-14);
        }
        assert!((l[0] * l[1] - m.det()).abs() < 1e-14);
    }

    #[test]
    fn line_angle_ignores_sign() {
        assert!(line_angle3([1.0, 0.0, 0.0], [-2.0, 0.0, 0.0]) < 1e-15);
        let right = line_angle3([1.0, 0.0, 0.0], [0.0, 0.0, 3.0]);
        assert!((right - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }
}
