//! Classification of fixed points with eigenvalue one.
//!
//! Decision tree: fixed-point test, eigenvalue-1 test, identity exclusion,
//! adapted frame, rank split on `P_eps`, then the Hessian of `P` in
//! `(q, eps)` decides definite versus cross, `P_qq` separates transcritical
//! crosses, and the cubic discriminant `3 Q_qq P_qp - Q_p P_qqq` separates
//! fork-like crosses from degenerate ones.

use serde::{Deserialize, Serialize};

use crate::error::{EigenspaceError, Error, Result};
use crate::family::{DeltaSlice, DerivativeJet, Point3, SymplecticFamily, TwoParamFamily};
use crate::frames::{build_frame, fixed_point_residual, AdaptedFrame, FramedFamily};
use crate::linalg::{normalize3, Mat2, Vec2};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BifurcationKind {
    NotFixedPoint,
    NoUnitEigenvalue,
    IdentityJacobian,
    Rank2SaddleNodeCandidate,
    Rank1Definite,
    Rank1CrossTranscritical,
    Rank1CrossForkLike,
    Rank1CrossDegenerate,
    Rank1DegenerateHessian,
}

impl BifurcationKind {
    pub fn is_cross(self) -> bool {
        matches!(
            self,
            Self::Rank1CrossTranscritical | Self::Rank1CrossForkLike | Self::Rank1CrossDegenerate
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::NotFixedPoint => "NotFixedPoint",
            Self::NoUnitEigenvalue => "NoUnitEigenvalue",
            Self::IdentityJacobian => "IdentityJacobian",
            Self::Rank2SaddleNodeCandidate => "Rank2SaddleNodeCandidate",
            Self::Rank1Definite => "Rank1Definite",
            Self::Rank1CrossTranscritical => "Rank1CrossTranscritical",
            Self::Rank1CrossForkLike => "Rank1CrossForkLike",
            Self::Rank1CrossDegenerate => "Rank1CrossDegenerate",
            Self::Rank1DegenerateHessian => "Rank1DegenerateHessian",
        }
    }
}

impl std::fmt::Display for BifurcationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything the classifier learned about a point.
#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationReport {
    pub kind: BifurcationKind,
    pub point: Point3,
    pub fixed_point_residual: f64,
    pub trace: f64,
    pub frame: Option<AdaptedFrame>,
    pub eigen_direction: Option<Vec2>,
    /// `P_eps` after translation (rank-2 indicator).
    pub p_eps: Option<f64>,
    /// `[[P_qq, P_qe], [P_qe, P_ee]]` in adapted coordinates.
    pub hessian: Option<Mat2>,
    pub hessian_eigenvalues: Option<[f64; 2]>,
    pub p_qq: Option<f64>,
    /// `Q_p` in adapted coordinates.
    pub q_p: Option<f64>,
    /// `3 Q_qq P_qp - Q_p P_qqq` (non-transcritical crosses).
    pub fork_discriminant: Option<f64>,
    /// Second derivative of eps along the line tangent to the eigenspace.
    pub eps_b_second: Option<f64>,
    /// Unit tangents `a`, `b` of the two fixed-point lines, original
    /// coordinates `(q, p, eps)`; `b` is the one closer to `eps = 0`.
    pub branch_tangents: Option<[[f64; 3]; 2]>,
    pub tolerances: Tolerances,
}

impl BifurcationReport {
    fn bare(kind: BifurcationKind, point: Point3, residual: f64, trace: f64, tols: &Tolerances) -> Self {
        Self {
            kind,
            point,
            fixed_point_residual: residual,
            trace,
            frame: None,
            eigen_direction: None,
            p_eps: None,
            hessian: None,
            hessian_eigenvalues: None,
            p_qq: None,
            q_p: None,
            fork_discriminant: None,
            eps_b_second: None,
            branch_tangents: None,
            tolerances: *tols,
        }
    }

    pub fn hessian_det(&self) -> Option<f64> {
        self.hessian.map(|h| h.det())
    }
}

#[derive(Serialize)]
struct ReportWire<'a> {
    kind: BifurcationKind,
    point: [f64; 3],
    hessian: Option<[[f64; 2]; 2]>,
    hessian_det: Option<f64>,
    hessian_eigenvalues: Option<[f64; 2]>,
    p_qq: Option<f64>,
    eps_b_second: Option<f64>,
    theta: Option<f64>,
    c: Option<f64>,
    c1: Option<f64>,
    eigen_direction: Option<Vec2>,
    branch_tangents: Option<[[f64; 3]; 2]>,
    tolerances: &'a Tolerances,
}

impl Serialize for BifurcationReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ReportWire {
            kind: self.kind,
            point: self.point.as_array(),
            hessian: self.hessian.map(|h| h.0),
            hessian_det: self.hessian_det(),
            hessian_eigenvalues: self.hessian_eigenvalues,
            p_qq: self.p_qq,
            eps_b_second: self.eps_b_second,
            theta: self.frame.map(|f| f.theta),
            c: self.frame.map(|f| f.c),
            c1: self.frame.map(|f| f.c1),
            eigen_direction: self.eigen_direction,
            branch_tangents: self.branch_tangents,
            tolerances: &self.tolerances,
        }
        .serialize(s)
    }
}

/// Hessian of `P` with respect to `(q, eps)`.
pub fn hessian_of(jet: &DerivativeJet) -> Mat2 {
    let (pqq, pqe, pee) = (jet.dp(2, 0, 0), jet.dp(1, 0, 1), jet.dp(0, 0, 2));
    Mat2::new(pqq, pqe, pqe, pee)
}

fn fork_discriminant(jet: &DerivativeJet) -> f64 {
    3.0 * jet.dq(2, 0, 0) * jet.dp(1, 1, 0) - jet.dq(0, 1, 0) * jet.dp(3, 0, 0)
}

/// `eps_B''(0) = (3 Q_qq P_qp - Q_p P_qqq) / (3 Q_p P_qe)` from an order-3
/// jet at an adapted, non-transcritical, regular cross point.
pub fn fork_eps_second(jet: &DerivativeJet, tols: &Tolerances) -> Result<f64> {
    if jet.order < 3 {
        return Err(Error::PreconditionViolated("needs a third-order jet".into()));
    }
    let (pqq, pqe, q_p) = (jet.dp(2, 0, 0), jet.dp(1, 0, 1), jet.dq(0, 1, 0));
    if pqq.abs() > tols.p_qq {
        return Err(Error::PreconditionViolated(format!(
            "P_qq = {pqq:e} is not zero: the cross is transcritical"
        )));
    }
    if !(pqe.abs() > tols.p_qq) || !(q_p.abs() >= tols.min_q_p) {
        return Err(Error::PreconditionViolated(format!(
            "regular cross needs P_qe != 0 and Q_p != 0 (P_qe = {pqe:e}, Q_p = {q_p:e})"
        )));
    }
    Ok(fork_discriminant(jet) / (3.0 * q_p * pqe))
}

/// Null directions of an indefinite symmetric form, as `(q, eps)` pairs.
fn null_directions(h: &Mat2) -> [Vec2; 2] {
    let ([l1, l2], [e1, e2]) = h.symmetric_eigen();
    let (a, b) = (l2.abs().sqrt(), l1.abs().sqrt());
    [
        [a * e1[0] + b * e2[0], a * e1[1] + b * e2[1]],
        [a * e1[0] - b * e2[0], a * e1[1] - b * e2[1]],
    ]
}

fn orient3(v: [f64; 3]) -> [f64; 3] {
    let v = normalize3(v);
    if v[2] < 0.0 || (v[2] == 0.0 && v[0] < 0.0) {
        [-v[0], -v[1], -v[2]]
    } else {
        v
    }
}

/// Classify the point `pt` of `family`.
///
/// Boundary cases come back as explicit kinds; only failures to evaluate
/// the family are errors.
pub fn classify<F: SymplecticFamily + ?Sized>(family: &F, pt: Point3, tols: &Tolerances) -> Result<BifurcationReport> {
    use BifurcationKind::*;

    let jet = family.jet(pt, 1)?;
    let residual = fixed_point_residual(&jet);
    let trace = jet.trace();
    if !(residual <= tols.fixed_point) {
        return Ok(BifurcationReport::bare(NotFixedPoint, pt, residual, trace, tols));
    }
    let built = match build_frame(&jet, tols) {
        Ok(b) => b,
        Err(Error::Eigenspace(EigenspaceError::IdentityJacobian)) => {
            return Ok(BifurcationReport::bare(IdentityJacobian, pt, residual, trace, tols))
        }
        Err(Error::Eigenspace(_)) => return Ok(BifurcationReport::bare(NoUnitEigenvalue, pt, residual, trace, tols)),
        Err(e) => return Err(e),
    };
    let mut report = BifurcationReport::bare(Rank2SaddleNodeCandidate, pt, residual, trace, tols);
    report.frame = Some(built.frame);
    report.eigen_direction = Some(built.eigen_direction);
    report.p_eps = Some(built.p_eps);
    if built.p_eps.abs() > tols.rank2 {
        return Ok(report);
    }

    let framed = FramedFamily::new(family, built.frame);
    let ajet = framed.jet(Point3::ORIGIN, 3)?;
    let h = hessian_of(&ajet);
    let det = h.det();
    let (eig, _) = h.symmetric_eigen();
    report.hessian = Some(h);
    report.hessian_eigenvalues = Some(eig);
    report.p_qq = Some(h.0[0][0]);
    report.q_p = Some(ajet.dq(0, 1, 0));

    let det_tol = tols.hessian_det * (1.0 + h.max_abs().powi(2));
    if det > det_tol {
        report.kind = Rank1Definite;
        return Ok(report);
    }
    if det >= -det_tol {
        report.kind = Rank1DegenerateHessian;
        return Ok(report);
    }

    // cross: tangents of the two fixed-point lines lie in the (q, eps) plane
    let frame = built.frame;
    let mut tangents = null_directions(&h).map(|[dq, de]| orient3(frame.vector_from_frame([dq, 0.0, de])));
    // b is the line closer to eps = 0
    if tangents[0][2].abs() < tangents[1][2].abs() {
        tangents.swap(0, 1);
    }
    report.branch_tangents = Some(tangents);

    if h.0[0][0].abs() > tols.p_qq {
        report.kind = Rank1CrossTranscritical;
        return Ok(report);
    }
    let disc = fork_discriminant(&ajet);
    report.fork_discriminant = Some(disc);
    if disc.abs() > tols.fork {
        report.kind = Rank1CrossForkLike;
        report.eps_b_second = Some(fork_eps_second(&ajet, tols)?);
    } else {
        report.kind = Rank1CrossDegenerate;
    }
    Ok(report)
}

/// Outcome of the map-level destruction test for a two-parameter extension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DestructionCheckReport {
    /// `(Q_delta, P_delta)` at the bifurcation point, original coordinates.
    pub delta_vector: Vec2,
    /// The same vector in adapted coordinates.
    pub delta_vector_adapted: Vec2,
    pub in_eigenspace: bool,
    /// `-(1 / P_delta) * Hessian`, when `P_delta != 0`.
    pub hessian_delta_restricted: Option<Mat2>,
    pub hessian_delta_nondegenerate: bool,
    pub destroys: bool,
}

/// A cross-bifurcation of the `delta = 0` slice is isolated among all
/// cross points of the two-parameter family when `(Q_delta, P_delta)`
/// leaves the eigenspace; in adapted coordinates that is `P_delta != 0`.
pub fn destruction_check_map<F: TwoParamFamily + ?Sized>(
    family: &F,
    pt: Point3,
    tol: f64,
    tols: &Tolerances,
) -> Result<DestructionCheckReport> {
    let slice = DeltaSlice { family, delta: 0.0 };
    let report = classify(&slice, pt, tols)?;
    if !report.kind.is_cross() {
        return Err(Error::PreconditionViolated(format!(
            "delta = 0 slice is not a cross-bifurcation at {pt:?} ({})",
            report.kind
        )));
    }
    let frame = report.frame.expect("cross reports carry a frame");
    let h = report.hessian.expect("cross reports carry a Hessian");
    let dv = family.delta_derivative(pt)?;
    let adapted = Mat2::rotation(frame.theta).apply(dv);
    let destroys = adapted[1].abs() > tol;
    let restricted = destroys.then(|| h.scale(-1.0 / adapted[1]));
    let nondegenerate = restricted
        .map(|m| m.det().abs() > tols.hessian_det * (1.0 + m.max_abs().powi(2)))
        .unwrap_or(false);
    Ok(DestructionCheckReport {
        delta_vector: dv,
        delta_vector_adapted: adapted,
        in_eigenspace: !destroys,
        hessian_delta_restricted: restricted,
        hessian_delta_nondegenerate: nondegenerate,
        destroys,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{BuiltinKind, ShearFamily};
    use crate::poly::Polynomial;
    use BifurcationKind::*;

    fn shear(terms: &[(u32, u32, f64)]) -> ShearFamily {
        ShearFamily::shear(terms)
    }

    fn t() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn classify_examples() {
        let r = classify(&shear(&[(1, 1, 1.0), (2, 0, -1.0)]), Point3::ORIGIN, &t()).unwrap();
        assert_eq!(r.kind, Rank1CrossTranscritical);
        assert_eq!(r.hessian.unwrap(), Mat2::new(-2.0, 1.0, 1.0, 0.0));
        assert_eq!(r.hessian_det().unwrap(), -1.0);

        let r = classify(&shear(&[(1, 1, 1.0), (3, 0, -1.0)]), Point3::ORIGIN, &t()).unwrap();
        assert_eq!(r.kind, Rank1CrossForkLike);
        assert_eq!(r.eps_b_second.unwrap(), 2.0);

        let r = classify(&shear(&[(2, 0, 1.0), (0, 2, 1.0)]), Point3::ORIGIN, &t()).unwrap();
        assert_eq!(r.kind, Rank1Definite);
        assert_eq!(r.hessian.unwrap(), Mat2::new(2.0, 0.0, 0.0, 2.0));

        let r = classify(&shear(&[(0, 1, 1.0), (2, 0, -1.0)]), Point3::ORIGIN, &t()).unwrap();
        assert_eq!(r.kind, Rank2SaddleNodeCandidate);
        assert_eq!(r.p_eps.unwrap(), 1.0);
    }

    #[test]
    fn boundary_kinds() {
        let f = shear(&[(1, 1, 1.0), (2, 0, -1.0)]);
        let r = classify(&f, Point3::new(1.0, 0.0, 0.0), &t()).unwrap();
        assert_eq!(r.kind, NotFixedPoint);
        // q = eps is a fixed point with trace 2 - eps
        let r = classify(&f, Point3::new(0.2, 0.0, 0.2), &t()).unwrap();
        assert_eq!(r.kind, NoUnitEigenvalue);
        // g = eps q: the eps-axis is fixed but the Hessian vanishes except P_qe
        let r = classify(&shear(&[(1, 2, 1.0)]), Point3::ORIGIN, &t()).unwrap();
        assert_eq!(r.kind, Rank1DegenerateHessian);
        // g = eps q - q^4: non-transcritical cross with vanishing discriminant
        let r = classify(&shear(&[(1, 1, 1.0), (4, 0, -1.0)]), Point3::ORIGIN, &t()).unwrap();
        assert_eq!(r.kind, Rank1CrossDegenerate);
    }

    #[test]
    fn fork_second_derivative_examples() {
        for (c, expected) in [(-1.0, 2.0), (-2.0, 4.0)] {
            let f = shear(&[(1, 1, 1.0), (3, 0, c)]);
            let jet = f.jet(Point3::ORIGIN, 3).unwrap();
            assert_eq!(fork_eps_second(&jet, &t()).unwrap(), expected);
        }
        let rotated = shear(&[(1, 1, 1.0), (3, 0, -1.0)]).rotated(30f64.to_radians());
        let r = classify(&rotated, Point3::ORIGIN, &t()).unwrap();
        assert_eq!(r.kind, Rank1CrossForkLike);
        assert!((r.eps_b_second.unwrap() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn fork_second_derivative_preconditions() {
        let f = shear(&[(1, 1, 1.0), (2, 0, -1.0)]);
        let jet = f.jet(Point3::ORIGIN, 3).unwrap();
        assert!(matches!(
            fork_eps_second(&jet, &t()),
            Err(Error::PreconditionViolated(_))
        ));
        let jet = f.jet(Point3::ORIGIN, 2).unwrap();
        assert!(matches!(
            fork_eps_second(&jet, &t()),
            Err(Error::PreconditionViolated(_))
        ));
    }

    #[test]
    fn tangents_of_transcritical_family() {
        let r = classify(&shear(&[(1, 1, 1.0), (2, 0, -1.0)]), Point3::ORIGIN, &t()).unwrap();
        let [a, b] = r.branch_tangents.unwrap();
        // A: q = 0, B: q = eps
        assert!(a[0].abs() < 1e-14 && a[1].abs() < 1e-14 && (a[2] - 1.0).abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((b[0] - s).abs() < 1e-14 && b[1].abs() < 1e-14 && (b[2] - s).abs() < 1e-14);
    }

    #[test]
    fn report_json_field_names() {
        let r = classify(&shear(&[(1, 1, 1.0), (2, 0, -1.0)]), Point3::ORIGIN, &t()).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in [
            "kind",
            "point",
            "hessian",
            "hessian_det",
            "hessian_eigenvalues",
            "p_qq",
            "eps_b_second",
            "theta",
            "c",
            "c1",
            "eigen_direction",
            "branch_tangents",
            "tolerances",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["kind"], "Rank1CrossTranscritical");
    }

    fn two_param(g: &[([u32; 3], f64)], q_shift: &[([u32; 2], f64)], p_shift: &[([u32; 2], f64)]) -> ShearFamily {
        ShearFamily::new(
            BuiltinKind::TwoParamExtension,
            Polynomial::new(g.iter().copied()),
            Polynomial::new(q_shift.iter().copied()),
            Polynomial::new(p_shift.iter().copied()),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn destruction_examples() {
        let base = [([1, 1, 0], 1.0), ([2, 0, 0], -1.0)];
        let f = two_param(&base, &[], &[([0, 1], 1.0)]);
        let r = destruction_check_map(&f, Point3::ORIGIN, 1e-9, &t()).unwrap();
        assert!(r.destroys);
        assert_eq!(r.delta_vector_adapted, [0.0, 1.0]);
        assert_eq!(r.hessian_delta_restricted.unwrap(), Mat2::new(2.0, -1.0, -1.0, -0.0));
        assert!(r.hessian_delta_nondegenerate);

        let mut g = base.to_vec();
        g.push(([2, 0, 1], 1.0));
        let f = two_param(&g, &[], &[]);
        let r = destruction_check_map(&f, Point3::ORIGIN, 1e-9, &t()).unwrap();
        assert_eq!(r.delta_vector, [0.0, 0.0]);
        assert!(!r.destroys);

        let f = two_param(&base, &[([0, 1], 1.0)], &[]);
        let r = destruction_check_map(&f, Point3::ORIGIN, 1e-9, &t()).unwrap();
        assert_eq!(r.delta_vector_adapted, [1.0, 0.0]);
        assert!(r.in_eigenspace);
        assert!(!r.destroys);
    }

    #[test]
    fn destruction_needs_cross() {
        let f = two_param(&[([2, 0, 0], 1.0), ([0, 2, 0], 1.0)], &[], &[([0, 1], 1.0)]);
        assert!(matches!(
            destruction_check_map(&f, Point3::ORIGIN, 1e-9, &t()),
            Err(Error::PreconditionViolated(_))
        ));
    }
}
