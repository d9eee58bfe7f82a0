//! Eigenvalue-1 directions and adapted coordinates.
//!
//! Adapted coordinates put a rank-1 fixed point at the origin with
//! linearization `[[1, Q_p], [0, 1]]` and `Q_eps = P_eps = 0`. They are built
//! from a rotation of the `(q, p)` plane about the fixed point, the
//! eps-dependent translation `p~ = p - c eps` and optionally the shear
//! `q~ = q - c1 eps`. All three are affine in `(q, p, eps)` and symplectic
//! for every fixed `eps`.

use serde::{Deserialize, Serialize};

use crate::error::{EigenspaceError, Error, Result};
use crate::family::{DerivativeJet, Point3, SymplecticFamily};
use crate::linalg::{normalize, Mat2, Vec2};
use crate::taylor::{Scalar, Taylor3};
use crate::tolerances::Tolerances;

/// Unit eigenvector for eigenvalue 1 of a symplectic 2x2 matrix.
///
/// The representative has a nonnegative q-component (nonnegative p on ties).
pub fn unit_eigenspace(
    j: &Mat2,
    trace_tol: f64,
    identity_tol: f64,
    det_tol: f64,
) -> std::result::Result<Vec2, EigenspaceError> {
    let det = j.det();
    if (det - 1.0).abs() > det_tol {
        return Err(EigenspaceError::NotSymplectic { det });
    }
    let n = j.sub(&Mat2::IDENTITY);
    if n.norm_inf() <= identity_tol {
        return Err(EigenspaceError::IdentityJacobian);
    }
    let trace = j.trace();
    if (trace - 2.0).abs() > trace_tol {
        return Err(EigenspaceError::NoUnitEigenvalue { trace });
    }
    // kernel of the rank-1 matrix J - I, from its dominant row
    let [r0, r1] = n.0;
    let row = if r0[0].hypot(r0[1]) >= r1[0].hypot(r1[1]) {
        r0
    } else {
        r1
    };
    Ok(orient(normalize([-row[1], row[0]])))
}

fn orient(v: Vec2) -> Vec2 {
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        [-v[0], -v[1]]
    } else {
        v
    }
}

/// Affine coordinate change about `base`:
///
/// `(u, v) = R(theta) (q - q0, p - p0)`, `q~ = u - c1 eps~`, `p~ = v - c eps~`,
/// with `eps~ = eps - eps0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptedFrame {
    pub base_point: Point3,
    pub theta: f64,
    pub c: f64,
    pub c1: f64,
}

impl AdaptedFrame {
    /// Pure rotation about `base` (no translation, no shear).
    pub fn rotation_about(base: Point3, theta: f64) -> Self {
        Self {
            base_point: base,
            theta,
            c: 0.0,
            c1: 0.0,
        }
    }

    pub fn to_frame(&self, pt: Point3) -> Point3 {
        let e = pt.eps - self.base_point.eps;
        let (u, v) = self.rotate_forward(pt.q - self.base_point.q, pt.p - self.base_point.p);
        Point3::new(u - self.c1 * e, v - self.c * e, e)
    }

    pub fn from_frame(&self, pt: Point3) -> Point3 {
        let (q, p, e) = self.from_frame_generic(pt.q, pt.p, pt.eps);
        Point3::new(q, p, e)
    }

    /// Linear part of [`Self::to_frame`], for tangent vectors `(dq, dp, deps)`.
    pub fn vector_to_frame(&self, v: [f64; 3]) -> [f64; 3] {
        let (u, w) = self.rotate_forward(v[0], v[1]);
        [u - self.c1 * v[2], w - self.c * v[2], v[2]]
    }

    /// Linear part of [`Self::from_frame`].
    pub fn vector_from_frame(&self, v: [f64; 3]) -> [f64; 3] {
        let u = v[0] + self.c1 * v[2];
        let w = v[1] + self.c * v[2];
        let (s, c) = self.theta.sin_cos();
        [c * u + s * w, -s * u + c * w, v[2]]
    }

    fn rotate_forward(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (c * x - s * y, s * x + c * y)
    }

    fn from_frame_generic<T: Scalar>(&self, q: T, p: T, e: T) -> (T, T, T) {
        let (s, c) = self.theta.sin_cos();
        let u = q + e * self.c1;
        let v = p + e * self.c;
        (
            u * c + v * s + self.base_point.q,
            v * c - u * s + self.base_point.p,
            e + self.base_point.eps,
        )
    }

    /// Image `(Q, P)` in original coordinates to frame coordinates at `eps~`.
    fn image_to_frame<T: Scalar>(&self, big_q: T, big_p: T, e: T) -> (T, T) {
        let (s, c) = self.theta.sin_cos();
        let dq = big_q + (-self.base_point.q);
        let dp = big_p + (-self.base_point.p);
        let u = dq * c - dp * s;
        let v = dq * s + dp * c;
        (u - e * self.c1, v - e * self.c)
    }
}

/// Compose a frame with an additional shear `q~ = q - c1 eps`.
pub fn apply_shear(frame: &AdaptedFrame, c1: f64) -> AdaptedFrame {
    AdaptedFrame {
        c1: frame.c1 + c1,
        ..*frame
    }
}

/// A family expressed in the coordinates of an [`AdaptedFrame`].
#[derive(Debug, Clone)]
pub struct FramedFamily<F> {
    pub inner: F,
    pub frame: AdaptedFrame,
}

impl<F: SymplecticFamily> FramedFamily<F> {
    pub fn new(inner: F, frame: AdaptedFrame) -> Self {
        Self { inner, frame }
    }
}

impl<F: SymplecticFamily> SymplecticFamily for FramedFamily<F> {
    fn eval(&self, pt: Point3) -> Result<Vec2> {
        let x = self.frame.from_frame(pt);
        let [big_q, big_p] = self.inner.eval(x)?;
        let (q, p) = self.frame.image_to_frame(big_q, big_p, pt.eps);
        Ok([q, p])
    }

    fn jet(&self, pt: Point3, order: usize) -> Result<DerivativeJet> {
        let x = self.frame.from_frame(pt);
        let inner = self.inner.jet(x, order)?;
        let (q, p, e) = self.frame.from_frame_generic(
            Taylor3::variable(0, pt.q),
            Taylor3::variable(1, pt.p),
            Taylor3::variable(2, pt.eps),
        );
        let shift = [q + (-x.q), p + (-x.p), e + (-x.eps)];
        let big_q = inner.q.compose(shift);
        let big_p = inner.p.compose(shift);
        let (tq, tp) = self.frame.image_to_frame(big_q, big_p, Taylor3::variable(2, pt.eps));
        Ok(DerivativeJet {
            base: pt,
            order,
            q: tq.truncated(order),
            p: tp.truncated(order),
        })
    }
}

/// Outcome of rotating and translating at a fixed point, before deciding
/// whether the point is rank 1.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FrameBuild {
    pub frame: AdaptedFrame,
    pub eigen_direction: Vec2,
    pub p_eps: f64,
}

pub(crate) fn fixed_point_residual(jet: &DerivativeJet) -> f64 {
    let [q, p] = jet.value();
    (q - jet.base.q).abs().max((p - jet.base.p).abs())
}

/// Rotation and translation for the fixed point described by `jet`
/// (order >= 1). Errors are eigenspace failures and a vanishing `Q_p`.
pub(crate) fn build_frame(jet: &DerivativeJet, tols: &Tolerances) -> Result<FrameBuild> {
    let residual = fixed_point_residual(jet);
    if !(residual <= tols.fixed_point) {
        return Err(Error::NotFixedPoint { residual });
    }
    let j = jet.jacobian();
    let dir = unit_eigenspace(&j, tols.trace, tols.identity, tols.symplectic)?;
    let theta = -dir[1].atan2(dir[0]);
    let rot = Mat2::rotation(theta);
    let jr = rot.mul(&j).mul(&rot.transpose());
    let [q_eps, p_eps] = rot.apply(jet.eps_partials());
    let q_p = jr.0[0][1];
    if q_p.abs() < tols.min_q_p {
        return Err(Error::Eigenspace(EigenspaceError::IdentityJacobian));
    }
    let c = -q_eps / q_p;
    // P~_eps = P_p c + P_eps - c, and P_p = 1 in the rotated frame
    let p_eps_adapted = p_eps + (jr.0[1][1] - 1.0) * c;
    Ok(FrameBuild {
        frame: AdaptedFrame {
            base_point: jet.base,
            theta,
            c,
            c1: 0.0,
        },
        eigen_direction: dir,
        p_eps: p_eps_adapted,
    })
}

/// Adapted coordinates at a rank-1 fixed point.
///
/// Fails with `Rank2Detected` when `P_eps` survives the translation.
pub fn to_adapted<F: SymplecticFamily>(
    family: F,
    fixed_pt: Point3,
    tols: &Tolerances,
) -> Result<(AdaptedFrame, FramedFamily<F>)> {
    let jet = family.jet(fixed_pt, 1)?;
    let built = build_frame(&jet, tols)?;
    if built.p_eps.abs() > tols.rank2 {
        return Err(Error::Rank2Detected { p_eps: built.p_eps });
    }
    Ok((built.frame, FramedFamily::new(family, built.frame)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::ShearFamily;
    use crate::poly::Polynomial;

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn eigenspace_examples() {
        let d = unit_eigenspace(&Mat2::new(1.0, 1.0, 0.0, 1.0), 1e-7, 1e-7, 1e-6).unwrap();
        assert_eq!(d, [1.0, 0.0]);
        assert_eq!(
            unit_eigenspace(&Mat2::IDENTITY, 1e-7, 1e-7, 1e-6),
            Err(EigenspaceError::IdentityJacobian)
        );
        let r = Mat2::rotation(30f64.to_radians());
        let m = r.mul(&Mat2::new(1.0, 1.0, 0.0, 1.0)).mul(&r.transpose());
        let d = unit_eigenspace(&m, 1e-7, 1e-7, 1e-6).unwrap();
        let (s, c) = 30f64.to_radians().sin_cos();
        assert!((d[0] - c).abs() < 1e-14 && (d[1] - s).abs() < 1e-14);
        // eigenvector check |J v - v|
        let jv = m.apply(d);
        assert!((jv[0] - d[0]).abs() < 1e-12 && (jv[1] - d[1]).abs() < 1e-12);
    }

    #[test]
    fn eigenspace_rejects_elliptic_and_nonsymplectic() {
        let rot = Mat2::rotation(0.5);
        assert!(matches!(
            unit_eigenspace(&rot, 1e-7, 1e-7, 1e-6),
            Err(EigenspaceError::NoUnitEigenvalue { .. })
        ));
        assert!(matches!(
            unit_eigenspace(&Mat2::new(2.0, 0.0, 0.0, 1.0), 1e-7, 1e-7, 1e-6),
            Err(EigenspaceError::NotSymplectic { .. })
        ));
    }

    #[test]
    fn shear_is_already_adapted() {
        let f = ShearFamily::shear(&[(1, 1, 1.0), (2, 0, -1.0)]);
        let (frame, _) = to_adapted(&f, Point3::ORIGIN, &tols()).unwrap();
        assert_eq!(frame.theta, 0.0);
        assert_eq!(frame.c, 0.0);
    }

    #[test]
    fn rotated_conjugate_undoes_rotation() {
        let f = ShearFamily::shear(&[(1, 1, 1.0), (2, 0, -1.0)]).rotated(30f64.to_radians());
        let (frame, framed) = to_adapted(&f, Point3::ORIGIN, &tols()).unwrap();
        assert!((frame.theta + 30f64.to_radians()).abs() < 1e-12);
        assert!(frame.c.abs() < 1e-12);
        let jet = framed.jet(Point3::ORIGIN, 3).unwrap();
        assert!((jet.dp(2, 0, 0) + 2.0).abs() < 1e-12);
        assert!((jet.dp(1, 0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn translation_constant() {
        // Q = q + p + g + eps, P = p + g
        let g = Polynomial::new([([1, 1, 0], 1.0), ([2, 0, 0], -1.0)]);
        let f = ShearFamily::new(
            crate::family::BuiltinKind::ShearComposition,
            g,
            Polynomial::new([([1, 0], 1.0)]),
            Polynomial::zero(),
            0.0,
        )
        .unwrap();
        let (frame, framed) = to_adapted(&f, Point3::ORIGIN, &tols()).unwrap();
        assert_eq!(frame.c, -1.0);
        let jet = framed.jet(Point3::ORIGIN, 1).unwrap();
        assert!(jet.eps_partials()[0].abs() < 1e-15);
        assert!(jet.eps_partials()[1].abs() < 1e-15);
        // the framed family stays symplectic
        for pt in [Point3::new(0.1, 0.2, -0.3), Point3::new(-0.4, 0.0, 0.25)] {
            assert!(crate::family::check_symplectic(&framed, pt).unwrap() < 1e-12);
        }
    }

    #[test]
    fn rank2_is_detected() {
        let f = ShearFamily::shear(&[(0, 1, 1.0), (2, 0, -1.0)]);
        assert!(matches!(
            to_adapted(&f, Point3::ORIGIN, &tols()),
            Err(Error::Rank2Detected { .. })
        ));
    }

    #[test]
    fn non_fixed_point_is_rejected() {
        let f = ShearFamily::shear(&[(1, 1, 1.0), (2, 0, -1.0)]);
        assert!(matches!(
            to_adapted(&f, Point3::new(1.0, 0.0, 0.0), &tols()),
            Err(Error::NotFixedPoint { .. })
        ));
    }

    #[test]
    fn shear_preserves_adaptedness() {
        let f = ShearFamily::shear(&[(1, 1, 1.0), (2, 0, -1.0)]).rotated(0.7);
        let (frame, _) = to_adapted(&f, Point3::ORIGIN, &tols()).unwrap();
        assert_eq!(apply_shear(&frame, 0.0), frame);
        let sheared = apply_shear(&frame, 0.37);
        let framed = FramedFamily::new(&f, sheared);
        let jet = framed.jet(Point3::ORIGIN, 1).unwrap();
        let j = jet.jacobian();
        assert!((j.0[0][0] - 1.0).abs() < 1e-12);
        assert!(j.0[1][0].abs() < 1e-12);
        assert!((j.0[1][1] - 1.0).abs() < 1e-12);
        assert!(jet.eps_partials()[0].abs() < 1e-12);
        assert!(jet.eps_partials()[1].abs() < 1e-12);
    }

    #[test]
    fn vectors_round_trip() {
        let frame = AdaptedFrame {
            base_point: Point3::new(0.3, -0.2, 0.1),
            theta: 1.1,
            c: -0.4,
            c1: 0.25,
        };
        let v = [0.3, -1.2, 0.8];
        let back = frame.vector_from_frame(frame.vector_to_frame(v));
        for k in 0..3 {
            assert!((back[k] - v[k]).abs() < 1e-14);
        }
    }
}
