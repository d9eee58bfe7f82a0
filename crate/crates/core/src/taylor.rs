//! Truncated Taylor polynomials in three variables.
//!
//! A [`Taylor3`] stores the coefficients of a polynomial in `(dq, dp, deps)`
//! truncated at total degree three. Arithmetic on these objects is the usual
//! truncated polynomial arithmetic, so evaluating a map on seeded variables
//! yields all of its partial derivatives up to third order at once. The
//! partial derivative for multi-index `(a, b, c)` is `a! b! c!` times the
//! stored coefficient.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

/// Highest total degree kept.
pub const MAX_ORDER: usize = 3;
/// Number of multi-indices `(a, b, c)` with `a + b + c <= 3`.
pub const N_COEFFS: usize = 20;

/// Exponent table in graded order: degree 0, then degree 1, ...
/// Inside a degree the q-exponent decreases first, then the p-exponent.
pub const EXPONENTS: [[u8; 3]; N_COEFFS] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [2, 0, 0],
    [1, 1, 0],
    [1, 0, 1],
    [0, 2, 0],
    [0, 1, 1],
    [0, 0, 2],
    [3, 0, 0],
    [2, 1, 0],
    [2, 0, 1],
    [1, 2, 0],
    [1, 1, 1],
    [1, 0, 2],
    [0, 3, 0],
    [0, 2, 1],
    [0, 1, 2],
    [0, 0, 3],
];

/// Position of a multi-index in [`EXPONENTS`], or `None` above degree three.
pub fn index(a: usize, b: usize, c: usize) -> Option<usize> {
    let d = a + b + c;
    if d > MAX_ORDER {
        return None;
    }
    let start = [0, 1, 4, 10][d];
    // within degree d: entries with larger q-exponent come first
    let mut offset = 0;
    for a_hi in (a + 1..=d).rev() {
        offset += d - a_hi + 1;
    }
    Some(start + offset + (d - a - b))
}

fn factorial(n: u8) -> f64 {
    (1..=n as u32).product::<u32>() as f64
}

/// `a! b! c!` for each entry of [`EXPONENTS`].
pub fn multi_factorial(i: usize) -> f64 {
    let [a, b, c] = EXPONENTS[i];
    factorial(a) * factorial(b) * factorial(c)
}

fn product_table() -> &'static [(usize, usize, usize)] {
    static TABLE: OnceLock<Vec<(usize, usize, usize)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut out = Vec::new();
        for (i, ei) in EXPONENTS.iter().enumerate() {
            for (j, ej) in EXPONENTS.iter().enumerate() {
                let s = [ei[0] + ej[0], ei[1] + ej[1], ei[2] + ej[2]];
                if let Some(k) = index(s[0] as usize, s[1] as usize, s[2] as usize) {
                    out.push((i, j, k));
                }
            }
        }
        out
    })
}

/// Numeric type usable by generically written maps: plain `f64` for
/// evaluation, [`Taylor3`] for derivative jets.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(&self) -> f64;

    fn powi(self, n: u32) -> Self {
        let mut acc = Self::constant(1.0);
        for _ in 0..n {
            acc = acc * self;
        }
        acc
    }
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
}

/// Truncated polynomial in three variables, degree at most three.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Taylor3 {
    pub coeffs: [f64; N_COEFFS],
}

impl Taylor3 {
    pub fn zero() -> Self {
        Self {
            coeffs: [0.0; N_COEFFS],
        }
    }

    /// The variable `axis` (0 = q, 1 = p, 2 = eps) expanded about `at`.
    pub fn variable(axis: usize, at: f64) -> Self {
        let mut t = Self::constant(at);
        t.coeffs[1 + axis] = 1.0;
        t
    }

    pub fn coeff(&self, a: usize, b: usize, c: usize) -> f64 {
        index(a, b, c).map_or(0.0, |i| self.coeffs[i])
    }

    /// Partial derivative `d^(a+b+c) / dq^a dp^b deps^c` at the expansion point.
    pub fn partial(&self, a: usize, b: usize, c: usize) -> f64 {
        match index(a, b, c) {
            Some(i) => self.coeffs[i] * multi_factorial(i),
            None => 0.0,
        }
    }

    /// Drop every term above total degree `order`.
    pub fn truncated(mut self, order: usize) -> Self {
        for (i, e) in EXPONENTS.iter().enumerate() {
            if (e[0] + e[1] + e[2]) as usize > order {
                self.coeffs[i] = 0.0;
            }
        }
        self
    }

    /// Substitute each variable by a Taylor polynomial whose constant term
    /// is zero. This is composition with a map fixing the expansion point,
    /// e.g. a linear change of coordinates.
    pub fn compose(&self, args: [Taylor3; 3]) -> Taylor3 {
        let mut out = Taylor3::zero();
        // powers of each argument up to degree 3
        let mut pows = [[Taylor3::constant(1.0); MAX_ORDER + 1]; 3];
        for (v, arg) in args.iter().enumerate() {
            for n in 1..=MAX_ORDER {
                pows[v][n] = pows[v][n - 1] * *arg;
            }
        }
        for (i, e) in EXPONENTS.iter().enumerate() {
            let c = self.coeffs[i];
            if c == 0.0 {
                continue;
            }
            let term = pows[0][e[0] as usize] * pows[1][e[1] as usize] * pows[2][e[2] as usize];
            out = out + term * c;
        }
        out
    }
}

impl Scalar for Taylor3 {
    fn constant(v: f64) -> Self {
        let mut t = Self::zero();
        t.coeffs[0] = v;
        t
    }
    fn value(&self) -> f64 {
        self.coeffs[0]
    }
}

impl Add for Taylor3 {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs) {
            *a += b;
        }
        self
    }
}

impl Sub for Taylor3 {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs) {
            *a -= b;
        }
        self
    }
}

impl Neg for Taylor3 {
    type Output = Self;
    fn neg(mut self) -> Self {
        for a in self.coeffs.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl Mul for Taylor3 {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = [0.0; N_COEFFS];
        for &(i, j, k) in product_table() {
            out[k] += self.coeffs[i] * rhs.coeffs[j];
        }
        Taylor3 { coeffs: out }
    }
}

impl Add<f64> for Taylor3 {
    type Output = Self;
    fn add(mut self, rhs: f64) -> Self {
        self.coeffs[0] += rhs;
        self
    }
}

impl Mul<f64> for Taylor3 {
    type Output = Self;
    fn mul(mut self, rhs: f64) -> Self {
        for a in self.coeffs.iter_mut() {
            *a *= rhs;
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_matches_table() {
        for (i, e) in EXPONENTS.iter().enumerate() {
            assert_eq!(index(e[0] as usize, e[1] as usize, e[2] as usize), Some(i));
        }
        assert_eq!(index(4, 0, 0), None);
        assert_eq!(index(1, 1, 2), None);
    }

    #[test]
    fn cubic_partials() {
        // f = q^2 p + 3 eps^3 + q at (1, 2, -1)
        let q = Taylor3::variable(0, 1.0);
        let p = Taylor3::variable(1, 2.0);
        let e = Taylor3::variable(2, -1.0);
        let f = q * q * p + e * e * e * 3.0 + q;
        assert_eq!(f.value(), 2.0 - 3.0 + 1.0);
        assert_eq!(f.partial(1, 0, 0), 2.0 * 1.0 * 2.0 + 1.0);
        assert_eq!(f.partial(0, 1, 0), 1.0);
        assert_eq!(f.partial(2, 1, 0), 2.0);
        assert_eq!(f.partial(2, 0, 0), 4.0);
        assert_eq!(f.partial(0, 0, 3), 18.0);
        assert_eq!(f.partial(0, 0, 2), 18.0 * -1.0);
        assert_eq!(f.partial(1, 1, 1), 0.0);
    }

    #[test]
    fn compose_with_swap() {
        let q = Taylor3::variable(0, 0.0);
        let p = Taylor3::variable(1, 0.0);
        let e = Taylor3::variable(2, 0.0);
        let f = q * q * p + e;
        let g = f.compose([p, q, e]);
        assert_eq!(g.coeff(1, 2, 0), 1.0);
        assert_eq!(g.coeff(0, 0, 1), 1.0);
        assert_eq!(g.coeff(2, 1, 0), 0.0);
    }
}
