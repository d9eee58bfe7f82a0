//! Small least-squares and extrapolation helpers used for derivative
//! estimates along branches.

use crate::error::{Error, Result};

/// `y ~ c0 + c1 (x - x0) + c2 (x - x0)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFit {
    pub x0: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl QuadraticFit {
    pub fn value(&self, x: f64) -> f64 {
        let t = x - self.x0;
        self.c0 + t * (self.c1 + t * self.c2)
    }
    pub fn slope(&self) -> f64 {
        self.c1
    }
    pub fn second(&self) -> f64 {
        2.0 * self.c2
    }
}

/// Least-squares quadratic through `(xs, ys)` about `x0`.
///
/// Abscissae are centred and scaled before forming the normal equations so
/// that tightly clustered samples stay well conditioned.
pub fn quadratic_fit(xs: &[f64], ys: &[f64], x0: f64) -> Result<QuadraticFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "quadratic fit needs at least 3 paired samples, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let s = xs.iter().map(|x| (x - x0).abs()).fold(0.0, f64::max);
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::NumericalBreakdown(
            "degenerate abscissae in quadratic fit".into(),
        ));
    }
    // normal equations in t = (x - x0) / s
    let mut m = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let t = (x - x0) / s;
        let basis = [1.0, t, t * t];
        for i in 0..3 {
            r[i] += basis[i] * y;
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
        }
    }
    let c =
        solve3(m, r).ok_or_else(|| Error::NumericalBreakdown("singular normal equations in quadratic fit".into()))?;
    Ok(QuadraticFit {
        x0,
        c0: c[0],
        c1: c[1] / s,
        c2: c[2] / (s * s),
    })
}

/// Fit to the `n` samples whose abscissae are nearest `x0`.
pub fn local_quadratic_fit(xs: &[f64], ys: &[f64], x0: f64, n: usize) -> Result<QuadraticFit> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidInput("sample length mismatch".into()));
    }
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| (xs[a] - x0).abs().total_cmp(&(xs[b] - x0).abs()));
    idx.truncate(n);
    let sx: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
    let sy: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
    quadratic_fit(&sx, &sy, x0)
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// First and second derivative at `x0` from samples on the grid
/// `x0 + k h`: symmetric differences over `k = 1..=m` (up to three pairs),
/// extrapolated to zero spacing in `(k h)^2`. `None` unless `x0` and at
/// least one symmetric pair are present.
pub fn symmetric_derivatives(xs: &[f64], ys: &[f64], x0: f64, h: f64) -> Option<(f64, f64)> {
    let slack = 1e-9 * h.abs();
    let find = |x: f64| xs.iter().position(|&v| (v - x).abs() <= slack).map(|i| ys[i]);
    let y0 = find(x0)?;
    let (mut hh, mut d1, mut d2) = (Vec::new(), Vec::new(), Vec::new());
    for k in 1..=3 {
        let kh = k as f64 * h;
        let (Some(yp), Some(ym)) = (find(x0 + kh), find(x0 - kh)) else {
            break;
        };
        hh.push(kh * kh);
        d1.push((yp - ym) / (2.0 * kh));
        d2.push((yp - 2.0 * y0 + ym) / (kh * kh));
    }
    if hh.is_empty() {
        return None;
    }
    Some((extrapolate_to_zero(&hh, &d1).ok()?, extrapolate_to_zero(&hh, &d2).ok()?))
}

/// Polynomial extrapolation of `values[i] = f(xs[i])` to `x = 0` (Neville).
pub fn extrapolate_to_zero(xs: &[f64], values: &[f64]) -> Result<f64> {
    if xs.is_empty() || xs.len() != values.len() {
        return Err(Error::InvalidInput("extrapolation needs paired samples".into()));
    }
    let mut p = values.to_vec();
    let n = xs.len();
    for m in 1..n {
        for i in 0..n - m {
            let d = xs[i] - xs[i + m];
            if d == 0.0 {
                return Err(Error::InvalidInput("repeated abscissa in extrapolation".into()));
            }
            p[i] = (xs[i] * p[i + 1] - xs[i + m] * p[i]) / d;
        }
    }
    Ok(p[0])
}
