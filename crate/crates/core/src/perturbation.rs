//! Perturbations `H + delta F` of a cross-libration.
//!
//! A term is cross-preserving when `F_x` and `F_px` vanish on the plane
//! `x = p_x = 0`, so the libration family survives. Otherwise the first-order
//! displacement of the Poincaré map in `delta` is the solution at `T` of
//!
//! ```text
//! xi' - eta = g1(y, p_y),   eta' + f(y) xi = g2(y, p_y),   xi(0) = eta(0) = 0
//! ```
//!
//! with `g1 = F_px(0, y, 0, p_y)`, `g2 = -F_x(0, y, 0, p_y)`. Variation of
//! parameters gives `(xi, eta)(T) = M c` with `c` built from the Hill
//! fundamental system, and the cross-bifurcation is destroyed when
//! `(M - I) c != 0`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cross, norm, Mat2, Vec2};
use crate::ode::{integrate, OdeOptions};
use crate::poincare::{libration_branch_scan, monodromy_at, Hamiltonian, LibrationContext, ScanSettings};
use crate::poly::Polynomial;
use crate::quadrature::integrate_adaptive;
use crate::tolerances::Tolerances;

/// Grid tolerance for the sampled cross-preservation test.
pub const SAMPLED_PRESERVATION_TOL: f64 = 1e-10;

/// Relative scale of the destruction test: `|(M - I) c|` must exceed
/// `DESTRUCTION_REL_TOL (1 + |M|)(1 + |c|)`.
pub const DESTRUCTION_REL_TOL: f64 = 1e-6;

/// Bound on `|(xi, eta)(T) - M c|` relative to `1 + |M| |c|`.
pub const CONSISTENCY_TOL: f64 = 1e-8;

/// A polynomial perturbation `F(x, y, p_x, p_y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationTerm {
    pub name: String,
    pub polynomial: Polynomial<4>,
}

impl PerturbationTerm {
    /// `sum c x^i y^j p_x^k p_y^l` from `(i, j, k, l, c)` tuples.
    pub fn from_monomials(name: impl Into<String>, terms: impl IntoIterator<Item = (u32, u32, u32, u32, f64)>) -> Self {
        Self {
            name: name.into(),
            polynomial: Polynomial::new(terms.into_iter().map(|(i, j, k, l, c)| ([i, j, k, l], c))),
        }
    }

    /// `x p_y - y p_x`, the angular momentum.
    pub fn rotation() -> Self {
        Self::from_monomials("rotation", [(1, 0, 0, 1, 1.0), (0, 1, 1, 0, -1.0)])
    }

    /// `x^2 y`.
    pub fn x2y() -> Self {
        Self::from_monomials("x2y", [(2, 1, 0, 0, 1.0)])
    }

    /// Built-in term by name: `rotation`, `x2y` (alias `symmetric`).
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "rotation" => Ok(Self::rotation()),
            "x2y" | "symmetric" => Ok(Self::x2y()),
            other => Err(Error::InvalidInput(format!("unknown perturbation term '{other}'"))),
        }
    }

    /// `a self + b other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        Self {
            name: format!("{a}*{}+{b}*{}", self.name, other.name),
            polynomial: self.polynomial.scaled(a).plus(&other.polynomial.scaled(b)),
        }
    }

    /// Exact monomial test: every term has total `x, p_x` degree zero or at
    /// least two, so `F_x` and `F_px` vanish on `x = p_x = 0`.
    pub fn is_cross_preserving(&self) -> bool {
        self.polynomial.terms.iter().all(|t| {
            let d = t.powers[0] + t.powers[2];
            t.coeff == 0.0 || d == 0 || d >= 2
        })
    }

    pub fn g_functions(&self) -> GFunctions {
        let restrict = |p: Polynomial<4>| p.substitute(0, 0.0).substitute(2, 0.0);
        GFunctions {
            g1: restrict(self.polynomial.derivative(2)),
            g2: restrict(self.polynomial.derivative(0).scaled(-1.0)),
        }
    }

    /// The term as a potential `F(x, y)` when it carries no momenta.
    pub fn as_potential(&self) -> Option<Polynomial<2>> {
        let mut terms = Vec::new();
        for t in &self.polynomial.terms {
            if t.coeff != 0.0 && (t.powers[2] != 0 || t.powers[3] != 0) {
                return None;
            }
            terms.push(([t.powers[0], t.powers[1]], t.coeff));
        }
        Some(Polynomial::new(terms))
    }
}

/// `g1`, `g2` restricted to the invariant plane, as polynomials in
/// `(y, p_y)` (the `x`, `p_x` slots carry power zero).
#[derive(Debug, Clone, PartialEq)]
pub struct GFunctions {
    pub g1: Polynomial<4>,
    pub g2: Polynomial<4>,
}

impl GFunctions {
    pub fn eval(&self, y: f64, py: f64) -> Vec2 {
        let s = [0.0, y, 0.0, py];
        [self.g1.eval(s), self.g2.eval(s)]
    }

    pub fn is_zero(&self) -> bool {
        let vanishes = |p: &Polynomial<4>| p.terms.iter().all(|t| t.coeff == 0.0);
        vanishes(&self.g1) && vanishes(&self.g2)
    }
}

/// Sampled cross-preservation test for arbitrary `g`: `sup |g1|, |g2|` over
/// an `n x n` grid of `(y, p_y)` stays below `tol`.
pub fn sampled_cross_preserving<G>(g: G, y_range: (f64, f64), py_range: (f64, f64), n: usize, tol: f64) -> bool
where
    G: Fn(f64, f64) -> Vec2,
{
    let n = n.max(2);
    let at = |r: (f64, f64), k: usize| r.0 + (r.1 - r.0) * k as f64 / (n - 1) as f64;
    (0..n).all(|a| {
        (0..n).all(|b| {
            let v = g(at(y_range, a), at(py_range, b));
            v[0].abs() <= tol && v[1].abs() <= tol
        })
    })
}

/// `(xi, eta)(T)` by direct integration alongside the orbit.
pub fn inhomogeneous_solution<G>(ctx: &LibrationContext, g: G) -> Result<Vec2>
where
    G: Fn(f64, f64) -> Vec2,
{
    let h = &ctx.hamiltonian;
    let rhs = |_t: f64, s: &[f64; 4]| {
        let gv = g(s[0], s[1]);
        [s[1], -h.v0_prime(s[0]), s[3] + gv[0], -h.hill_f(s[0]) * s[2] + gv[1]]
    };
    let orbit = &ctx.orbit;
    let sol = integrate(
        &rhs,
        0.0,
        [orbit.y0, orbit.py0, 0.0, 0.0],
        orbit.period,
        &OdeOptions::default(),
    )?;
    Ok([sol.y_end[2], sol.y_end[3]])
}

/// `int_0^T w(y, p_y, phi, phi', psi, psi') dt`, one Gauss-Kronrod pass per
/// step of the Hill dense output.
fn hill_integral<W>(ctx: &LibrationContext, w: W) -> Result<f64>
where
    W: Fn(&[f64; 6]) -> f64,
{
    let mesh = ctx.hill.path.mesh();
    let mut total = 0.0;
    for pair in mesh.windows(2) {
        let q = integrate_adaptive(|t| w(&ctx.hill.state(t)), pair[0], pair[1], 1e-15, 1e-13)?;
        total += q.value;
    }
    Ok(total)
}

/// `c1 = int (psi' g1 - psi g2)`, `c2 = -int (phi' g1 - phi g2)`.
pub fn c_integrals<G>(ctx: &LibrationContext, g: G) -> Result<Vec2>
where
    G: Fn(f64, f64) -> Vec2,
{
    let c1 = hill_integral(ctx, |s| {
        let gv = g(s[0], s[1]);
        s[5] * gv[0] - s[4] * gv[1]
    })?;
    let c2 = hill_integral(ctx, |s| {
        let gv = g(s[0], s[1]);
        -(s[3] * gv[0] - s[2] * gv[1])
    })?;
    Ok([c1, c2])
}

/// `(int y psi', -int y phi')` for the rotation term.
pub fn rotation_short_vector(ctx: &LibrationContext) -> Result<Vec2> {
    Ok([
        hill_integral(ctx, |s| s[0] * s[5])?,
        -hill_integral(ctx, |s| s[0] * s[3])?,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DestructionReport {
    pub c1: f64,
    pub c2: f64,
    #[serde(rename = "xi_T")]
    pub xi_t: f64,
    #[serde(rename = "eta_T")]
    pub eta_t: f64,
    /// `(M - I) c`.
    pub criterion: Vec2,
    pub destroys: bool,
    /// `M = I`: every vector is an eigenvector and the test says nothing.
    pub degenerate_identity: bool,
    /// Decision of the eigenspace form applied to `(xi, eta)(T)`.
    pub eigenspace_destroys: bool,
    pub criteria_agree: bool,
    /// `|(xi, eta)(T) - M c|`.
    pub consistency_residual: f64,
    pub consistent: bool,
    pub tolerance: f64,
    /// Short-form rotation vector and whether it matches `c`; the JSON
    /// keys are fixed by the report schema.
    #[serde(rename = "eq60_vector")]
    pub short_vector: Option<Vec2>,
    #[serde(rename = "eq60_agrees")]
    pub short_agrees: Option<bool>,
}

/// Threshold used for `|(M - I) c|`.
pub fn destruction_tolerance(m: &Mat2, c: Vec2) -> f64 {
    DESTRUCTION_REL_TOL * (1.0 + m.norm_inf()) * (1.0 + norm(c))
}

/// Singular values `(s_min, s_max)` and the right singular vector of `s_min`.
fn smallest_singular(a: &Mat2) -> (f64, f64, Vec2) {
    let (vals, vecs) = a.transpose().mul(a).symmetric_eigen();
    let (lo, hi) = if vals[0] <= vals[1] { (0, 1) } else { (1, 0) };
    (vals[lo].max(0.0).sqrt(), vals[hi].max(0.0).sqrt(), vecs[lo])
}

/// Does `v` leave the eigenvalue-1 eigenspace of `m`? The eigenspace is the
/// numerical kernel of `M - I` at threshold `tol`.
pub fn leaves_eigenspace(m: &Mat2, v: Vec2, tol: f64) -> bool {
    let a = m.sub(&Mat2::IDENTITY);
    let (s_min, s_max, n) = smallest_singular(&a);
    if s_max <= tol {
        return false;
    }
    let dist = if s_min <= tol { cross(n, v).abs() } else { norm(v) };
    s_max * dist > tol
}

/// Criterion `(M - I) c != 0` together with the eigenspace form on
/// `(xi, eta)(T)` (taken as `M c` when not supplied).
pub fn destruction_criterion(m: &Mat2, c: Vec2, xi_eta: Option<Vec2>, tol: Option<f64>) -> DestructionReport {
    let tol = tol.unwrap_or_else(|| destruction_tolerance(m, c));
    let a = m.sub(&Mat2::IDENTITY);
    let criterion = a.apply(c);
    let degenerate_identity = a.norm_inf() <= tol;
    let destroys = !degenerate_identity && norm(criterion) > tol;
    let mc = m.apply(c);
    let v = xi_eta.unwrap_or(mc);
    let consistency_residual = norm([v[0] - mc[0], v[1] - mc[1]]);
    let eigenspace_destroys = !degenerate_identity && leaves_eigenspace(m, v, tol);
    DestructionReport {
        c1: c[0],
        c2: c[1],
        xi_t: v[0],
        eta_t: v[1],
        criterion,
        destroys,
        degenerate_identity,
        eigenspace_destroys,
        criteria_agree: destroys == eigenspace_destroys,
        consistency_residual,
        consistent: consistency_residual <= CONSISTENCY_TOL * (1.0 + m.norm_inf() * norm(c)),
        tolerance: tol,
        short_vector: None,
        short_agrees: None,
    }
}

/// Full first-order analysis of `term` along the libration of `ctx`.
pub fn analyze(ctx: &LibrationContext, term: &PerturbationTerm) -> Result<DestructionReport> {
    let g = term.g_functions();
    let m = ctx.hill.monodromy.matrix();
    if g.is_zero() {
        return Ok(destruction_criterion(&m, [0.0, 0.0], Some([0.0, 0.0]), None));
    }
    let gf = |y: f64, py: f64| g.eval(y, py);
    let c = c_integrals(ctx, gf)?;
    let xi_eta = inhomogeneous_solution(ctx, gf)?;
    Ok(destruction_criterion(&m, c, Some(xi_eta), None))
}

/// Independent terms analysed in parallel against one context.
pub fn analyze_all(ctx: &LibrationContext, terms: &[PerturbationTerm]) -> Vec<Result<DestructionReport>> {
    terms.par_iter().map(|t| analyze(ctx, t)).collect()
}

/// The rotation term through both routes. With `y(0) = y(T) = y0`,
/// integrating `psi y'` and `phi y'` by parts gives
/// `c = -2 v + y0 (psi(T), 1 - phi(T))`, where `v` is the short-form vector;
/// the boundary term is annihilated by `M - I` exactly when `Tr M = 2`.
/// `short_agrees` requires that identity and the same destroy decision.
pub fn rotation_case(ctx: &LibrationContext) -> Result<DestructionReport> {
    let mut report = analyze(ctx, &PerturbationTerm::rotation())?;
    let v = rotation_short_vector(ctx)?;
    let md = &ctx.hill.monodromy;
    let y0 = ctx.orbit.y0;
    let expect = [-2.0 * v[0] + y0 * md.psi_t, -2.0 * v[1] + y0 * (1.0 - md.phi_t)];
    let c = [report.c1, report.c2];
    let gap = norm([c[0] - expect[0], c[1] - expect[1]]);
    let m = md.matrix();
    let short = destruction_criterion(&m, v, None, None);
    report.short_vector = Some(v);
    report.short_agrees = Some(gap <= CONSISTENCY_TOL * (1.0 + norm(c)) && short.destroys == report.destroys);
    Ok(report)
}

/// One perturbed rescan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreservedCrossing {
    pub delta: f64,
    pub eps_star: Option<f64>,
    /// `eps*(delta) - eps*(0)`.
    pub shift: Option<f64>,
    /// First-order shift `-delta (dTr/d delta) / Tr'`.
    pub predicted_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreservationSmoke {
    pub eps_star: f64,
    pub tr_prime: f64,
    pub dtr_ddelta: f64,
    /// `|dTr/d delta / Tr'|`.
    pub scale: f64,
    pub rescans: Vec<PreservedCrossing>,
}

/// Inputs for [`preservation_smoke`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmokeSettings {
    pub e_ref: f64,
    /// Unperturbed crossing and its trace slope.
    pub eps_star: f64,
    pub tr_prime: f64,
    pub eps_range: (f64, f64),
    pub n: usize,
    pub scan: ScanSettings,
}

/// Rescan `H + delta F` for each `delta` and track the crossing nearest the
/// unperturbed one. Only momentum-free cross-preserving terms are accepted,
/// so the perturbed system is again of kinetic-plus-potential form.
pub fn preservation_smoke(
    h: &Hamiltonian,
    term: &PerturbationTerm,
    settings: &SmokeSettings,
    deltas: &[f64],
    tols: &Tolerances,
) -> Result<PreservationSmoke> {
    if !term.is_cross_preserving() {
        return Err(Error::InvalidInput(format!(
            "term '{}' is not cross-preserving",
            term.name
        )));
    }
    let f = term
        .as_potential()
        .ok_or_else(|| Error::InvalidInput(format!("term '{}' depends on momenta", term.name)))?;
    let shifted = |d: f64| Hamiltonian::new(h.potential().plus(&f.scaled(d)));

    let y0 = match settings.scan.y0 {
        Some(y) => y,
        None => h.well_bottom(settings.scan.well_guess)?,
    };
    let energy = settings.e_ref + settings.eps_star;
    let dd = 1e-4;
    let (_, up) = monodromy_at(&shifted(dd)?, energy, y0, settings.scan.well_guess)?;
    let (_, down) = monodromy_at(&shifted(-dd)?, energy, y0, settings.scan.well_guess)?;
    let dtr_ddelta = (up.trace() - down.trace()) / (2.0 * dd);
    if settings.tr_prime == 0.0 {
        return Err(Error::PreconditionViolated("crossing has Tr' = 0".into()));
    }

    let scan = ScanSettings {
        y0: Some(y0),
        classify: false,
        ..settings.scan
    };
    let rescans = deltas
        .par_iter()
        .map(|&delta| {
            let hd = shifted(delta)?;
            let s = libration_branch_scan(&hd, settings.e_ref, settings.eps_range, settings.n, &scan, tols)?;
            let eps_star = s
                .crossings
                .iter()
                .map(|c| c.eps_star)
                .min_by(|a, b| (a - settings.eps_star).abs().total_cmp(&(b - settings.eps_star).abs()));
            Ok(PreservedCrossing {
                delta,
                eps_star,
                shift: eps_star.map(|e| e - settings.eps_star),
                predicted_shift: -delta * dtr_ddelta / settings.tr_prime,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreservationSmoke {
        eps_star: settings.eps_star,
        tr_prime: settings.tr_prime,
        dtr_ddelta,
        scale: (dtr_ddelta / settings.tr_prime).abs(),
        rescans,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn harmonic(amp: f64) -> LibrationContext {
        let h = Hamiltonian::new(Polynomial::new([([2, 0], 0.5), ([0, 2], 0.5)])).unwrap();
        LibrationContext::new(h, 0.5 * amp * amp, None, 0.0).unwrap()
    }

    #[test]
    fn g_functions_by_hand() {
        let g = PerturbationTerm::rotation().g_functions();
        assert_eq!(g.eval(0.7, -0.3), [-0.7, 0.3]);
        assert!(PerturbationTerm::x2y().g_functions().is_zero());
        let px2y = PerturbationTerm::from_monomials("px2y", [(0, 1, 2, 0, 1.0)]);
        assert!(px2y.g_functions().is_zero());
        assert!(px2y.is_cross_preserving());
    }

    #[test]
    fn preservation_by_inspection() {
        assert!(PerturbationTerm::x2y().is_cross_preserving());
        assert!(!PerturbationTerm::rotation().is_cross_preserving());
        assert!(PerturbationTerm::from_monomials("zero", []).is_cross_preserving());
        assert!(PerturbationTerm::from_monomials("ypy", [(0, 3, 0, 1, 2.0)]).is_cross_preserving());
        assert!(!PerturbationTerm::from_monomials("xy", [(1, 1, 0, 0, 1.0)]).is_cross_preserving());
    }

    #[test]
    fn sampled_test_matches_inspection() {
        for term in [PerturbationTerm::x2y(), PerturbationTerm::rotation()] {
            let g = term.g_functions();
            let sampled = sampled_cross_preserving(
                |y, p| g.eval(y, p),
                (-1.0, 1.0),
                (-1.0, 1.0),
                9,
                SAMPLED_PRESERVATION_TOL,
            );
            assert_eq!(sampled, term.is_cross_preserving(), "{}", term.name);
        }
    }

    #[test]
    fn named_terms() {
        assert_eq!(
            PerturbationTerm::named("symmetric").unwrap().polynomial,
            PerturbationTerm::x2y().polynomial
        );
        assert!(PerturbationTerm::named("nope").is_err());
    }

    #[test]
    fn harmonic_rotation_closed_form() {
        // y = A sin t, phi = cos t, psi = sin t: c = (0, -2 pi A), M = I
        let amp = 0.6;
        let ctx = harmonic(amp);
        let r = rotation_case(&ctx).unwrap();
        assert!(r.c1.abs() < 1e-9, "c1 = {}", r.c1);
        assert!((r.c2 / (-2.0 * PI * amp) - 1.0).abs() < 1e-6, "c2 = {}", r.c2);
        assert!(r.xi_t.abs() < 1e-8 && (r.eta_t + 2.0 * PI * amp).abs() < 1e-8);
        assert!(r.degenerate_identity && !r.destroys);
        let v = r.short_vector.unwrap();
        assert!(v[0].abs() < 1e-9 && (v[1] - PI * amp).abs() < 1e-8);
        assert_eq!(r.short_agrees, Some(true));
        assert!(r.consistent);
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let ctx = harmonic(0.5);
        let zero = |_: f64, _: f64| [0.0, 0.0];
        assert_eq!(inhomogeneous_solution(&ctx, zero).unwrap(), [0.0, 0.0]);
        assert_eq!(c_integrals(&ctx, zero).unwrap(), [0.0, 0.0]);
        let r = analyze(&ctx, &PerturbationTerm::x2y()).unwrap();
        assert_eq!([r.c1, r.c2], [0.0, 0.0]);
    }

    #[test]
    fn matrix_examples() {
        let m = Mat2::new(1.0, 1.0, 0.0, 1.0);
        let r = destruction_criterion(&m, [0.0, 1.0], None, None);
        assert_eq!(r.criterion, [1.0, 0.0]);
        assert!(r.destroys && r.eigenspace_destroys && r.criteria_agree);
        let r = destruction_criterion(&m, [1.0, 0.0], None, None);
        assert_eq!(r.criterion, [0.0, 0.0]);
        assert!(!r.destroys && !r.eigenspace_destroys);
        let r = destruction_criterion(&Mat2::IDENTITY, [1.0, 2.0], None, None);
        assert!(r.degenerate_identity && !r.destroys);
    }

    #[test]
    fn report_json_keys() {
        let r = destruction_criterion(&Mat2::new(1.0, 1.0, 0.0, 1.0), [0.0, 1.0], None, None);
        let v = serde_json::to_value(&r).unwrap();
        for k in [
            "c1",
            "c2",
            "xi_T",
            "eta_T",
            "criterion",
            "destroys",
            "degenerate_identity",
            "eq60_vector",
            "eq60_agrees",
        ] {
            assert!(v.get(k).is_some(), "missing {k}");
        }
    }
}
