mod common;

use common::*;
use crossbif::classifier::fork_eps_second;
use crossbif::continuation::{
    continue_branch, find_trace2_crossings, split_cross_branches, trace_on_branch, verify_fork_slopes,
    verify_transcritical_slopes, Parametrization,
};
use crossbif::family::{det_derivative_residual, shear_normalized_jet, Var};
use crossbif::linalg::line_angle3;
use crossbif::{classify, BifurcationKind, Point3, SymplecticFamily, Tolerances};

#[test]
fn builtin_kinds_under_rotation() {
    let tols = Tolerances::default();
    let expected = [
        (transcritical(), BifurcationKind::Rank1CrossTranscritical),
        (fork(), BifurcationKind::Rank1CrossForkLike),
        (definite(), BifurcationKind::Rank1Definite),
        (rank2(), BifurcationKind::Rank2SaddleNodeCandidate),
    ];
    for (f, kind) in expected {
        for deg in [0.0f64, 30.0, 77.0] {
            let r = classify(&f.rotated(deg.to_radians()), Point3::ORIGIN, &tols).unwrap();
            assert_eq!(r.kind, kind, "theta = {deg}");
        }
    }
}

#[test]
fn fork_second_derivative_values() {
    let tols = Tolerances::default();
    for (f, want) in [(fork(), 2.0), (fork_scaled(), 4.0)] {
        let jet = f.jet(Point3::ORIGIN, 3).unwrap();
        assert!((fork_eps_second(&jet, &tols).unwrap() - want).abs() <= 1e-8);
        let r = classify(&f.rotated(0.4), Point3::ORIGIN, &tols).unwrap();
        assert!((r.eps_b_second.unwrap() - want).abs() <= 1e-8);
    }
}

#[test]
fn transcritical_tangents_and_eigendirection_are_distinct() {
    let tols = Tolerances::default();
    let f = transcritical().rotated(0.5);
    let r = classify(&f, Point3::ORIGIN, &tols).unwrap();
    let [a, b] = r.branch_tangents.unwrap();
    let e = r.eigen_direction.unwrap();
    let e3 = [e[0], e[1], 0.0];
    assert!(line_angle3(a, b) > 1e-3);
    assert!(line_angle3(a, e3) > 1e-3);
    assert!(line_angle3(b, e3) > 1e-3);

    // fitted tangents of the continued lines agree with the Hessian null set
    let (la, lb) = split_cross_branches(&f, Point3::ORIGIN, 0.2, 0.005, &tols).unwrap();
    let ta = la.fitted_tangent().unwrap();
    let tb = lb.fitted_tangent().unwrap();
    let (near_a, near_b) = (
        line_angle3(ta, a).min(line_angle3(ta, b)),
        line_angle3(tb, a).min(line_angle3(tb, b)),
    );
    assert!(near_a < 1e-6 && near_b < 1e-6, "{near_a} {near_b}");
}

#[test]
fn fork_tangent_b_is_the_eigendirection() {
    let tols = Tolerances::default();
    let f = fork().rotated(30f64.to_radians());
    let r = classify(&f, Point3::ORIGIN, &tols).unwrap();
    let [_, b] = r.branch_tangents.unwrap();
    let e = r.eigen_direction.unwrap();
    assert!(line_angle3(b, [e[0], e[1], 0.0]) < 1e-6);
}

#[test]
fn fitted_tangents_lie_in_the_adapted_plane() {
    let tols = Tolerances::default();
    for f in [transcritical().rotated(0.3), fork().rotated(1.2)] {
        let r = classify(&f, Point3::ORIGIN, &tols).unwrap();
        let frame = r.frame.unwrap();
        let (a, b) = split_cross_branches(&f, Point3::ORIGIN, 0.2, 0.005, &tols).unwrap();
        for t in [a.fitted_tangent().unwrap(), b.fitted_tangent().unwrap()] {
            let v = frame.vector_to_frame(t);
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            assert!(v[1].abs() / n <= 1e-6, "{v:?}");
        }
    }
}

#[test]
fn crossing_on_transcritical_line_a() {
    let f = transcritical();
    let a = continue_branch(&f, Point3::new(0.0, 0.0, -0.25), (-0.25, 0.25), 0.01).unwrap();
    let a = trace_on_branch(&f, a).unwrap();
    let s = find_trace2_crossings(&f, &a, &Tolerances::default()).unwrap();
    assert_eq!(s.crossings.len(), 1);
    assert!(s.crossings[0].eps_star.abs() <= 1e-9);
    assert!((s.crossings[0].tr_prime - 1.0).abs() <= 1e-8);
}

#[test]
fn slopes_cancel_on_cubic_transcritical() {
    let tols = Tolerances::default();
    let f = transcritical_cubic();
    let (a, b) = split_cross_branches(&f, Point3::ORIGIN, 0.2, 0.005, &tols).unwrap();
    let r = verify_transcritical_slopes(&f, &a, &b).unwrap();
    assert!(r.residual <= 1e-6, "{r:?}");
}

#[test]
fn fork_slopes_and_curvature() {
    let tols = Tolerances::default();
    for (f, want) in [(fork(), 2.0), (fork_scaled(), 4.0)] {
        let (a, b) = split_cross_branches(&f, Point3::ORIGIN, 0.2, 0.005, &tols).unwrap();
        assert_eq!(b.parametrization, Parametrization::ByQ);
        let fit = b.fits.eps_second.unwrap();
        assert!((fit / want - 1.0).abs() <= 1e-4, "fit {fit}");
        let r = verify_fork_slopes(&f, &a, &b).unwrap();
        assert!(r.residual <= 1e-4, "{r:?}");
    }
}

#[test]
fn det_derivative_formula_at_normalized_points() {
    let pts = [
        Point3::new(0.3, -0.2, 0.1),
        Point3::new(-0.7, 0.4, 0.9),
        Point3::new(0.05, 0.8, -0.6),
    ];
    for (name, f) in builtins() {
        for pt in pts {
            let jet = shear_normalized_jet(&f.rotated(0.9).jet(pt, 2).unwrap(), 0.7).unwrap();
            for u in [Var::Q, Var::P, Var::Eps] {
                let r = det_derivative_residual(&jet, u, 1e-12).unwrap();
                assert!(r <= 1e-10, "{name} {pt:?} {u:?}: {r:e}");
            }
        }
    }
}
