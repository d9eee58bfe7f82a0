//! One- and two-parameter families of area-preserving planar maps.
//!
//! A family sends `(q, p)` to `(Q, P)` for every value of the parameter
//! `eps`; for fixed `eps` the map has unit Jacobian determinant. Families
//! supply derivative jets up to third order: polynomial built-ins through
//! truncated Taylor arithmetic (exact up to rounding), numerically induced
//! families through central finite differences.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec2};
use crate::poly::Polynomial;
use crate::taylor::{Scalar, Taylor3, EXPONENTS, N_COEFFS};

/// A point `(q, p, eps)` of the extended phase space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub q: f64,
    pub p: f64,
    pub eps: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        q: 0.0,
        p: 0.0,
        eps: 0.0,
    };

    pub fn new(q: f64, p: f64, eps: f64) -> Self {
        Self { q, p, eps }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.q, self.p, self.eps]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.p.is_finite() && self.eps.is_finite()
    }
}

/// Which output component of the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Q,
    P,
}

/// Differentiation variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Var {
    Q,
    P,
    Eps,
}

impl Var {
    pub const ALL: [Var; 3] = [Var::Q, Var::P, Var::Eps];

    fn axis(self) -> usize {
        match self {
            Var::Q => 0,
            Var::P => 1,
            Var::Eps => 2,
        }
    }
}

/// All partial derivatives of `Q` and `P` up to `order` at `base`, stored as
/// Taylor coefficients (one slot per multi-index).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeJet {
    pub base: Point3,
    pub order: usize,
    pub q: Taylor3,
    pub p: Taylor3,
}

impl DerivativeJet {
    pub fn value(&self) -> Vec2 {
        [self.q.value(), self.p.value()]
    }

    /// Partial of `Q` with multi-index `(a, b, c)` in `(q, p, eps)`.
    pub fn dq(&self, a: usize, b: usize, c: usize) -> f64 {
        self.q.partial(a, b, c)
    }

    /// Partial of `P` with multi-index `(a, b, c)` in `(q, p, eps)`.
    pub fn dp(&self, a: usize, b: usize, c: usize) -> f64 {
        self.p.partial(a, b, c)
    }

    pub fn partial(&self, comp: Component, vars: &[Var]) -> f64 {
        let mut idx = [0usize; 3];
        for v in vars {
            idx[v.axis()] += 1;
        }
        match comp {
            Component::Q => self.dq(idx[0], idx[1], idx[2]),
            Component::P => self.dp(idx[0], idx[1], idx[2]),
        }
    }

    /// The `(q, p)` Jacobian.
    pub fn jacobian(&self) -> Mat2 {
        Mat2::new(self.dq(1, 0, 0), self.dq(0, 1, 0), self.dp(1, 0, 0), self.dp(0, 1, 0))
    }

    /// `(Q_eps, P_eps)`.
    pub fn eps_partials(&self) -> Vec2 {
        [self.dq(0, 0, 1), self.dp(0, 0, 1)]
    }

    pub fn trace(&self) -> f64 {
        self.jacobian().trace()
    }
}

/// A one-parameter symplectic family `(q, p, eps) -> (Q, P)`.
pub trait SymplecticFamily: Send + Sync {
    fn eval(&self, pt: Point3) -> Result<Vec2>;

    /// Derivatives up to `order` (1 to 3).
    fn jet(&self, pt: Point3, order: usize) -> Result<DerivativeJet>;
}

impl<F: SymplecticFamily + ?Sized> SymplecticFamily for &F {
    fn eval(&self, pt: Point3) -> Result<Vec2> {
        (**self).eval(pt)
    }
    fn jet(&self, pt: Point3, order: usize) -> Result<DerivativeJet> {
        (**self).jet(pt, order)
    }
}

impl<F: SymplecticFamily + ?Sized> SymplecticFamily for Box<F> {
    fn eval(&self, pt: Point3) -> Result<Vec2> {
        (**self).eval(pt)
    }
    fn jet(&self, pt: Point3, order: usize) -> Result<DerivativeJet> {
        (**self).jet(pt, order)
    }
}

/// A family with a second, distinguished perturbation parameter `delta`;
/// the slice `delta = 0` is the unperturbed family.
pub trait TwoParamFamily: Send + Sync {
    fn eval_delta(&self, pt: Point3, delta: f64) -> Result<Vec2>;

    fn jet_delta(&self, pt: Point3, delta: f64, order: usize) -> Result<DerivativeJet>;

    /// `(dQ/ddelta, dP/ddelta)` at `(pt, delta = 0)`.
    fn delta_derivative(&self, pt: Point3) -> Result<Vec2>;
}

/// The one-parameter family obtained by freezing `delta`.
pub struct DeltaSlice<'a, F: ?Sized> {
    pub family: &'a F,
    pub delta: f64,
}

impl<'a, F: TwoParamFamily + ?Sized> SymplecticFamily for DeltaSlice<'a, F> {
    fn eval(&self, pt: Point3) -> Result<Vec2> {
        self.family.eval_delta(pt, self.delta)
    }
    fn jet(&self, pt: Point3, order: usize) -> Result<DerivativeJet> {
        self.family.jet_delta(pt, self.delta, order)
    }
}

fn check_order(order: usize) -> Result<()> {
    if (1..=3).contains(&order) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("jet order must be 1, 2 or 3, got {order}")))
    }
}

/// Step sizes for finite-difference jets: `max(base, base * |x|)` per axis
/// for partials of order one and two, `third` for order three.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdSteps {
    pub base: f64,
    pub third: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        Self {
            base: 1e-4,
            third: 1e-3,
        }
    }
}

/// Central-difference weights for the `n`-th derivative on integer offsets.
fn stencil(n: u8) -> &'static [(i8, f64)] {
    // weights without the h^-n factor
    const D0: [(i8, f64); 1] = [(0, 1.0)];
    const D1: [(i8, f64); 2] = [(-1, -0.5), (1, 0.5)];
    const D2: [(i8, f64); 3] = [(-1, 1.0), (0, -2.0), (1, 1.0)];
    const D3: [(i8, f64); 4] = [(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)];
    match n {
        0 => &D0,
        1 => &D1,
        2 => &D2,
        _ => &D3,
    }
}

/// Central finite-difference jet of an arbitrary evaluator.
///
/// Stencil evaluations that fail are reported as `NumericalBreakdown`; a
/// failure at the base point itself propagates unchanged.
pub fn finite_difference_jet<F>(eval: F, pt: Point3, order: usize, steps: FdSteps) -> Result<DerivativeJet>
where
    F: Fn(Point3) -> Result<Vec2>,
{
    check_order(order)?;
    let x = pt.as_array();
    let h_low = x.map(|xi| steps.base.max(steps.base * xi.abs()));
    let h_third = [steps.third; 3];

    let center = eval(pt)?;
    let mut cache: HashMap<([i8; 3], bool), Vec2> = HashMap::new();
    let mut sample = |off: [i8; 3], third: bool| -> Result<Vec2> {
        if off == [0, 0, 0] {
            return Ok(center);
        }
        if let Some(v) = cache.get(&(off, third)) {
            return Ok(*v);
        }
        let h = if third { h_third } else { h_low };
        let p = Point3::new(
            x[0] + off[0] as f64 * h[0],
            x[1] + off[1] as f64 * h[1],
            x[2] + off[2] as f64 * h[2],
        );
        let v = eval(p).map_err(|e| {
            Error::NumericalBreakdown(format!("finite-difference stencil left the domain at {p:?}: {e}"))
        })?;
        cache.insert((off, third), v);
        Ok(v)
    };

    let mut qc = [0.0; N_COEFFS];
    let mut pc = [0.0; N_COEFFS];
    qc[0] = center[0];
    pc[0] = center[1];
    for (i, e) in EXPONENTS.iter().enumerate().skip(1) {
        let deg = (e[0] + e[1] + e[2]) as usize;
        if deg > order {
            continue;
        }
        let third = deg == 3;
        let h = if third { h_third } else { h_low };
        let (s0, s1, s2) = (stencil(e[0]), stencil(e[1]), stencil(e[2]));
        let scale = h[0].powi(e[0] as i32) * h[1].powi(e[1] as i32) * h[2].powi(e[2] as i32);
        let mut acc = [0.0; 2];
        for &(o0, w0) in s0 {
            for &(o1, w1) in s1 {
                for &(o2, w2) in s2 {
                    let v = sample([o0, o1, o2], third)?;
                    let w = w0 * w1 * w2;
                    acc[0] += w * v[0];
                    acc[1] += w * v[1];
                }
            }
        }
        let fact = crate::taylor::multi_factorial(i);
        qc[i] = acc[0] / scale / fact;
        pc[i] = acc[1] / scale / fact;
    }
    Ok(DerivativeJet {
        base: pt,
        order,
        q: Taylor3 { coeffs: qc },
        p: Taylor3 { coeffs: pc },
    })
}

/// Which kind of built-in polynomial family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinKind {
    /// `Q = q + p + g + a(eps)`, `P = p + g + b(eps)`.
    ShearComposition,
    /// The shear composition conjugated by a rotation of the `(q, p)` plane.
    RotatedConjugate,
    /// Shear composition whose polynomials may also depend on `delta`.
    TwoParamExtension,
}

/// Polynomial shear family, optionally conjugated by a rotation:
///
/// `Q = q + p + g(q, eps, delta) + a(eps, delta)`,
/// `P = p + g(q, eps, delta) + b(eps, delta)`,
///
/// then `(Q, P) <- R(theta) (Q, P)` evaluated at `R(-theta) (q, p)`.
/// The `(q, p)` Jacobian `[[1 + g_q, 1], [g_q, 1]]` has determinant one
/// identically and conjugation by a rotation keeps it that way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShearFamily {
    pub kind: BuiltinKind,
    /// Variables `(q, eps, delta)`.
    pub g: Polynomial<3>,
    /// Added to `Q` only; variables `(eps, delta)`.
    pub q_shift: Polynomial<2>,
    /// Added to `P` only; variables `(eps, delta)`.
    pub p_shift: Polynomial<2>,
    pub theta: f64,
}

impl ShearFamily {
    pub fn new(
        kind: BuiltinKind,
        g: Polynomial<3>,
        q_shift: Polynomial<2>,
        p_shift: Polynomial<2>,
        theta: f64,
    ) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::InvalidInput("rotation angle must be finite".into()));
        }
        let uses_delta = g.terms.iter().any(|t| t.powers[2] > 0 && t.coeff != 0.0)
            || q_shift.terms.iter().any(|t| t.powers[1] > 0 && t.coeff != 0.0)
            || p_shift.terms.iter().any(|t| t.powers[1] > 0 && t.coeff != 0.0);
        match kind {
            BuiltinKind::ShearComposition if theta != 0.0 => {
                return Err(Error::InvalidInput(
                    "shear_composition takes no rotation; use rotated_conjugate".into(),
                ))
            }
            BuiltinKind::ShearComposition | BuiltinKind::RotatedConjugate if uses_delta => {
                return Err(Error::InvalidInput("delta terms need kind two_param_extension".into()))
            }
            _ => {}
        }
        let coeffs_finite = g
            .terms
            .iter()
            .map(|t| t.coeff)
            .chain(q_shift.terms.iter().map(|t| t.coeff))
            .chain(p_shift.terms.iter().map(|t| t.coeff))
            .all(f64::is_finite);
        if !coeffs_finite {
            return Err(Error::InvalidInput("polynomial coefficients must be finite".into()));
        }
        Ok(Self {
            kind,
            g,
            q_shift,
            p_shift,
            theta,
        })
    }

    /// `Q = q + p + g(q, eps)`, `P = p + g(q, eps)` with `g` given by
    /// `(q-power, eps-power, coefficient)` triples.
    pub fn shear(g_terms: &[(u32, u32, f64)]) -> Self {
        let g = Polynomial::new(g_terms.iter().map(|&(i, j, c)| ([i, j, 0], c)));
        Self::new(
            BuiltinKind::ShearComposition,
            g,
            Polynomial::zero(),
            Polynomial::zero(),
            0.0,
        )
        .expect("plain shear is always valid")
    }

    /// The same family conjugated by a rotation through `theta`.
    pub fn rotated(&self, theta: f64) -> Self {
        let kind = match self.kind {
            BuiltinKind::TwoParamExtension => BuiltinKind::TwoParamExtension,
            _ => BuiltinKind::RotatedConjugate,
        };
        Self {
            kind,
            theta: self.theta + theta,
            ..self.clone()
        }
    }

    pub fn apply<T: Scalar>(&self, q: T, p: T, eps: T, delta: T) -> (T, T) {
        let (s, c) = self.theta.sin_cos();
        let rotated = self.theta != 0.0;
        let (q0, p0) = if rotated {
            (q * c + p * s, p * c - q * s)
        } else {
            (q, p)
        };
        let g = self.g.eval([q0, eps, delta]);
        let qq = q0 + p0 + g + self.q_shift.eval([eps, delta]);
        let pp = p0 + g + self.p_shift.eval([eps, delta]);
        if rotated {
            (qq * c - pp * s, qq * s + pp * c)
        } else {
            (qq, pp)
        }
    }

    fn taylor_jet(&self, pt: Point3, delta: f64, order: usize) -> Result<DerivativeJet> {
        check_order(order)?;
        let (q, p) = self.apply(
            Taylor3::variable(0, pt.q),
            Taylor3::variable(1, pt.p),
            Taylor3::variable(2, pt.eps),
            Taylor3::constant(delta),
        );
        Ok(DerivativeJet {
            base: pt,
            order,
            q: q.truncated(order),
            p: p.truncated(order),
        })
    }
}

impl SymplecticFamily for ShearFamily {
    fn eval(&self, pt: Point3) -> Result<Vec2> {
        self.eval_delta(pt, 0.0)
    }

    fn jet(&self, pt: Point3, order: usize) -> Result<DerivativeJet> {
        self.taylor_jet(pt, 0.0, order)
    }
}

impl TwoParamFamily for ShearFamily {
    fn eval_delta(&self, pt: Point3, delta: f64) -> Result<Vec2> {
        if !pt.is_finite() || !delta.is_finite() {
            return Err(Error::DomainEscape(format!("non-finite point {pt:?}")));
        }
        let (q, p) = self.apply(pt.q, pt.p, pt.eps, delta);
        Ok([q, p])
    }

    fn jet_delta(&self, pt: Point3, delta: f64, order: usize) -> Result<DerivativeJet> {
        self.taylor_jet(pt, delta, order)
    }

    fn delta_derivative(&self, pt: Point3) -> Result<Vec2> {
        // seed delta in the first Taylor slot, everything else constant
        let (q, p) = self.apply(
            Taylor3::constant(pt.q),
            Taylor3::constant(pt.p),
            Taylor3::constant(pt.eps),
            Taylor3::variable(0, 0.0),
        );
        Ok([q.partial(1, 0, 0), p.partial(1, 0, 0)])
    }
}

/// `|det J - 1|` for the `(q, p)` Jacobian at `pt`.
pub fn check_symplectic<F: SymplecticFamily + ?Sized>(family: &F, pt: Point3) -> Result<f64> {
    let jet = family.jet(pt, 1)?;
    Ok((jet.jacobian().det() - 1.0).abs())
}

/// Residual `|Q_qu + P_pu - Q_p P_qu|` of the determinant derivative
/// identity, valid wherever `Q_q = P_p = 1` and `P_q = 0`.
pub fn check_det_derivative_formula<F: SymplecticFamily + ?Sized>(
    family: &F,
    pt: Point3,
    u: Var,
    tol: f64,
) -> Result<f64> {
    let jet = family.jet(pt, 2)?;
    det_derivative_residual(&jet, u, tol)
}

pub fn det_derivative_residual(jet: &DerivativeJet, u: Var, tol: f64) -> Result<f64> {
    let j = jet.jacobian();
    let dev = (j.0[0][0] - 1.0)
        .abs()
        .max((j.0[1][1] - 1.0).abs())
        .max(j.0[1][0].abs());
    if dev > tol {
        return Err(Error::PreconditionViolated(format!(
            "determinant derivative formula needs Q_q = P_p = 1, P_q = 0 (deviation {dev:e})"
        )));
    }
    let q_qu = jet.partial(Component::Q, &[Var::Q, u]);
    let p_pu = jet.partial(Component::P, &[Var::P, u]);
    let p_qu = jet.partial(Component::P, &[Var::Q, u]);
    Ok((q_qu + p_pu - j.0[0][1] * p_qu).abs())
}

/// The jet of `N (Q, P)` with `N = [[1, beta], [0, 1]] J^-1`, `J` the
/// `(q, p)` Jacobian at the base point. `N` is symplectic, so the composed
/// family stays area preserving, and its linear part is the shear
/// `[[1, beta], [0, 1]]`. Higher partials are mixed linearly.
pub fn shear_normalized_jet(jet: &DerivativeJet, beta: f64) -> Result<DerivativeJet> {
    let j = jet.jacobian();
    let det = j.det();
    if !(det.abs() > 1e-12) {
        return Err(Error::SingularJacobian { det });
    }
    let inv = Mat2::new(j.0[1][1] / det, -j.0[0][1] / det, -j.0[1][0] / det, j.0[0][0] / det);
    let n = Mat2::new(1.0, beta, 0.0, 1.0).mul(&inv);
    Ok(DerivativeJet {
        q: jet.q * n.0[0][0] + jet.p * n.0[0][1],
        p: jet.q * n.0[1][0] + jet.p * n.0[1][1],
        ..*jet
    })
}
