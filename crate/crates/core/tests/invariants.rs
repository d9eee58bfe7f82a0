mod common;

use common::*;
use crossbif::continuation::{split_cross_branches, verify_transcritical_slopes};
use crossbif::family::{check_symplectic, det_derivative_residual, shear_normalized_jet, Var};
use crossbif::linalg::Mat2;
use crossbif::perturbation::destruction_criterion;
use crossbif::{classify, AdaptedFrame, Point3, ShearFamily, SymplecticFamily, Tolerances};
use proptest::prelude::*;

fn point() -> impl Strategy<Value = Point3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(q, p, e)| Point3::new(q, p, e))
}

fn builtin() -> impl Strategy<Value = ShearFamily> {
    (0..6usize).prop_map(|i| builtins().swap_remove(i).1)
}

proptest! {
    #[test]
    fn frame_round_trip(base in point(), pt in point(), theta in -4.0..4.0f64, c in -3.0..3.0f64, c1 in -3.0..3.0f64) {
        let frame = AdaptedFrame { base_point: base, theta, c, c1 };
        let back = frame.from_frame(frame.to_frame(pt));
        prop_assert!((back.q - pt.q).abs() < 1e-12 && (back.p - pt.p).abs() < 1e-12 && (back.eps - pt.eps).abs() < 1e-12);
        let v = [pt.q, pt.p, pt.eps];
        let w = frame.vector_from_frame(frame.vector_to_frame(v));
        prop_assert!((0..3).all(|i| (w[i] - v[i]).abs() < 1e-12));
    }

    #[test]
    fn builtins_are_symplectic(f in builtin(), pt in point(), theta in -3.2..3.2f64) {
        prop_assert!(check_symplectic(&f.rotated(theta), pt).unwrap() <= 1e-12);
    }

    #[test]
    fn det_derivative_formula(f in builtin(), pt in point(), theta in -3.2..3.2f64, beta in -2.0..2.0f64) {
        let jet = shear_normalized_jet(&f.rotated(theta).jet(pt, 2).unwrap(), beta).unwrap();
        for u in [Var::Q, Var::P, Var::Eps] {
            prop_assert!(det_derivative_residual(&jet, u, 1e-12).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn classification_is_rotation_invariant(i in 0..6usize, theta in -3.2..3.2f64) {
        let tols = Tolerances::default();
        let f = builtins().swap_remove(i).1;
        let plain = classify(&f, Point3::ORIGIN, &tols).unwrap();
        let turned = classify(&f.rotated(theta), Point3::ORIGIN, &tols).unwrap();
        prop_assert_eq!(plain.kind, turned.kind);
        // the adapted Hessian does not see the rotation, up to the sign of
        // the eigenvector: (q, p) -> (-q, -p) negates P_qq and P_ee
        if let (Some(a), Some(b)) = (plain.hessian, turned.hessian) {
            let flipped = Mat2::new(-b.0[0][0], b.0[0][1], b.0[1][0], -b.0[1][1]);
            let gap = a.sub(&b).max_abs().min(a.sub(&flipped).max_abs());
            prop_assert!(gap <= 1e-9 * (1.0 + a.max_abs()), "{:?} {:?}", a, b);
        }
    }

    #[test]
    fn slopes_cancel_on_random_transcriticals(a in 0.5..2.0f64, b in 0.5..2.0f64, c3 in -0.5..0.5f64, theta in -1.5..1.5f64) {
        let f = ShearFamily::shear(&[(1, 1, a), (2, 0, -b), (3, 0, c3)]).rotated(theta);
        let (la, lb) = split_cross_branches(&f, Point3::ORIGIN, 0.1, 0.005, &Tolerances::default()).unwrap();
        let r = verify_transcritical_slopes(&f, &la, &lb).unwrap();
        prop_assert!(r.residual <= 1e-6, "{:?}", r);
    }

    #[test]
    fn destruction_decisions_agree(theta in -3.2..3.2f64, shear in prop_oneof![-3.0..-0.1f64, 0.1..3.0f64],
                                   along in -2.0..2.0f64, across in prop_oneof![Just(0.0), -2.0..-0.1f64, 0.1..2.0f64]) {
        // parabolic M = R S R^T with eigenvector R e1
        let r = Mat2::rotation(theta);
        let m = r.mul(&Mat2::new(1.0, shear, 0.0, 1.0)).mul(&r.transpose());
        let c = r.apply([along, across]);
        let rep = destruction_criterion(&m, c, None, None);
        prop_assert!(!rep.degenerate_identity);
        prop_assert_eq!(rep.destroys, across != 0.0);
        prop_assert!(rep.criteria_agree);
    }
}
