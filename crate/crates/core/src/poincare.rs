//! Poincaré families of `H = p_x^2/2 + p_y^2/2 + V(x, y)` near straight-line
//! librations on the y-axis.
//!
//! Section `y = y0` crossed upward, coordinates `q = x`, `p = p_x`,
//! `eps = E - E0`. When `V_x(0, y) = 0` identically the plane `x = p_x = 0`
//! is invariant and the librations form the fixed-point line `(0, 0, eps)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::classifier::{classify, BifurcationReport};
use crate::continuation::{fitted_slope, illinois, Boundary, Branch, BranchFits, Parametrization};
use crate::error::{Error, Result};
use crate::family::{finite_difference_jet, DerivativeJet, FdSteps, Point3, SymplecticFamily, TwoParamFamily};
use crate::linalg::{Mat2, Vec2};
use crate::ode::{integrate, integrate_to_section, OdeOptions, Section, Solution};
use crate::poly::Polynomial;
use crate::quadrature::integrate_adaptive;
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, PartialEq)]
struct PerturbationData {
    delta: f64,
    f: Polynomial<4>,
    fx: Polynomial<4>,
    fy: Polynomial<4>,
    fpx: Polynomial<4>,
    fpy: Polynomial<4>,
}

/// `H = p_x^2/2 + p_y^2/2 + V(x, y) [+ delta F(x, y, p_x, p_y)]` with
/// polynomial `V` and `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    v: Polynomial<2>,
    vx: Polynomial<2>,
    vy: Polynomial<2>,
    vxx: Polynomial<2>,
    vyy: Polynomial<2>,
    pert: Option<PerturbationData>,
}

impl Hamiltonian {
    /// Rejects potentials with `x^1 y^j` terms, which break `V_x(0, y) = 0`.
    pub fn new(v: Polynomial<2>) -> Result<Self> {
        if let Some(t) = v.terms.iter().find(|t| t.powers[0] == 1 && t.coeff != 0.0) {
            return Err(Error::NotStraightLine(format!(
                "term {} x y^{} gives V_x(0, y) != 0",
                t.coeff, t.powers[1]
            )));
        }
        if v.terms.iter().any(|t| !t.coeff.is_finite()) {
            return Err(Error::InvalidInput("non-finite potential coefficient".into()));
        }
        let vx = v.derivative(0);
        let vy = v.derivative(1);
        Ok(Self {
            vxx: vx.derivative(0),
            vyy: vy.derivative(1),
            v,
            vx,
            vy,
            pert: None,
        })
    }

    /// `V = y^2/2 + (lambda/4) y^4 + x^2 (omega^2 + alpha y) / 2`.
    pub fn demo(lambda: f64, omega: f64, alpha: f64) -> Self {
        Self::new(Polynomial::new([
            ([0, 2], 0.5),
            ([0, 4], 0.25 * lambda),
            ([2, 0], 0.5 * omega * omega),
            ([2, 1], 0.5 * alpha),
        ]))
        .expect("demo potential has no x-linear terms")
    }

    pub fn potential(&self) -> &Polynomial<2> {
        &self.v
    }

    /// The same system plus `delta F`.
    pub fn perturbed(&self, f: &Polynomial<4>, delta: f64) -> Self {
        Self {
            pert: Some(PerturbationData {
                delta,
                fx: f.derivative(0),
                fy: f.derivative(1),
                fpx: f.derivative(2),
                fpy: f.derivative(3),
                f: f.clone(),
            }),
            ..self.clone()
        }
    }

    fn with_delta(&self, delta: f64) -> Self {
        let mut h = self.clone();
        if let Some(p) = h.pert.as_mut() {
            p.delta = delta;
        }
        h
    }

    pub fn energy(&self, s: &[f64; 4]) -> f64 {
        let mut e = 0.5 * (s[2] * s[2] + s[3] * s[3]) + self.v.eval([s[0], s[1]]);
        if let Some(p) = &self.pert {
            e += p.delta * p.f.eval(*s);
        }
        e
    }

    /// Hamilton's equations for `(x, y, p_x, p_y)`.
    pub fn rhs(&self, s: &[f64; 4]) -> [f64; 4] {
        let xy = [s[0], s[1]];
        let mut d = [s[2], s[3], -self.vx.eval(xy), -self.vy.eval(xy)];
        if let Some(p) = &self.pert {
            d[0] += p.delta * p.fpx.eval(*s);
            d[1] += p.delta * p.fpy.eval(*s);
            d[2] -= p.delta * p.fx.eval(*s);
            d[3] -= p.delta * p.fy.eval(*s);
        }
        d
    }

    /// `V0(y) = V(0, y)`.
    pub fn v0(&self, y: f64) -> f64 {
        self.v.eval([0.0, y])
    }

    pub fn v0_prime(&self, y: f64) -> f64 {
        self.vy.eval([0.0, y])
    }

    fn v0_second(&self, y: f64) -> f64 {
        self.vyy.eval([0.0, y])
    }

    /// `f(y) = V_xx(0, y)`, the Hill coefficient.
    pub fn hill_f(&self, y: f64) -> f64 {
        self.vxx.eval([0.0, y])
    }

    /// `max |V_x(0, y)|` over `ys`.
    pub fn straight_line_defect(&self, ys: impl IntoIterator<Item = f64>) -> f64 {
        ys.into_iter().map(|y| self.vx.eval([0.0, y]).abs()).fold(0.0, f64::max)
    }

    /// Minimum of `V0` reached by Newton on `V0'` from `guess`.
    pub fn well_bottom(&self, guess: f64) -> Result<f64> {
        let mut y = guess;
        for _ in 0..100 {
            let (g, h) = (self.v0_prime(y), self.v0_second(y));
            if !(h > 0.0) {
                return Err(Error::NoWell { guess });
            }
            let dy = g / h;
            y -= dy;
            if !y.is_finite() {
                return Err(Error::NoWell { guess });
            }
            if dy.abs() <= 1e-15 * (1.0 + y.abs()) {
                break;
            }
        }
        if self.v0_prime(y).abs() > 1e-12 * (1.0 + self.v0_second(y)) || !(self.v0_second(y) > 0.0) {
            return Err(Error::NoWell { guess });
        }
        Ok(y)
    }

    /// Turning point of the 1-D motion at energy `e0` on the side `dir`.
    fn turning_point(&self, bottom: f64, e0: f64, dir: f64) -> Result<f64> {
        let mut inner = bottom;
        let mut d = 1e-3 * (1.0 + bottom.abs());
        let mut outer = bottom + dir * d;
        let mut found = false;
        for _ in 0..200 {
            if self.v0(outer) >= e0 {
                found = true;
                break;
            }
            if self.v0_prime(outer) * dir < 0.0 {
                return Err(Error::TurningPointNotFound(format!(
                    "potential turns down at y = {outer} below E = {e0}"
                )));
            }
            inner = outer;
            d *= 2.0;
            outer = bottom + dir * d;
            if outer.abs() > 1e8 {
                break;
            }
        }
        if !found {
            return Err(Error::TurningPointNotFound(format!(
                "no wall on side {dir} at E = {e0}"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (inner + outer);
            if mid == inner || mid == outer {
                break;
            }
            if self.v0(mid) >= e0 {
                outer = mid;
            } else {
                inner = mid;
            }
        }
        Ok(0.5 * (inner + outer))
    }
}

/// Section plane `y = y0`, crossed with `sign(dy/dt) = direction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectionSpec {
    pub y0: f64,
    pub direction: f64,
}

impl SectionSpec {
    pub fn upward(y0: f64) -> Self {
        Self { y0, direction: 1.0 }
    }

    fn event(&self) -> Section {
        Section {
            component: 1,
            value: self.y0,
            direction: self.direction,
        }
    }
}

/// Phase-space state on the section for `(q, p, eps)` at energy `e0 + eps`.
pub fn lift_section_point(h: &Hamiltonian, section: &SectionSpec, e0: f64, pt: Point3) -> Result<[f64; 4]> {
    let e = e0 + pt.eps;
    let radicand = 2.0 * (e - h.v.eval([pt.q, section.y0])) - pt.p * pt.p;
    if !(radicand >= 0.0) {
        return Err(Error::EnergyForbidden { radicand });
    }
    let sign = if section.direction >= 0.0 { 1.0 } else { -1.0 };
    let mut s = [pt.q, section.y0, pt.p, sign * radicand.sqrt()];
    if h.pert.is_some() {
        // H(s) = e along p_y by Newton; dH/dp_y is the velocity dy/dt
        for _ in 0..50 {
            let r = h.energy(&s) - e;
            let dh = h.rhs(&s)[1];
            if dh == 0.0 || !dh.is_finite() {
                return Err(Error::EnergyForbidden { radicand });
            }
            let step = r / dh;
            s[3] -= step;
            if step.abs() <= 1e-15 * (1.0 + s[3].abs()) {
                break;
            }
        }
        if (h.energy(&s) - e).abs() > 1e-12 * (1.0 + e.abs()) || h.rhs(&s)[1] * sign <= 0.0 {
            return Err(Error::EnergyForbidden { radicand });
        }
    }
    Ok(s)
}

/// First return of `state` to the section, as `(x, p_x)`.
pub fn section_return(
    h: &Hamiltonian,
    section: &SectionSpec,
    state: [f64; 4],
    budget: f64,
    opts: &OdeOptions,
) -> Result<([f64; 4], f64)> {
    let f = |_t: f64, s: &[f64; 4]| h.rhs(s);
    let hit = integrate_to_section(&f, 0.0, state, budget, section.event(), opts)?;
    Ok((hit.y, hit.t))
}

/// The Poincaré map as a one-parameter symplectic family in `(x, p_x, E - E0)`.
#[derive(Debug, Clone)]
pub struct PoincareFamily {
    pub hamiltonian: Hamiltonian,
    pub section: SectionSpec,
    pub e0: f64,
    /// Return-time budget; orbits not back by then fail with `NoReturn`.
    pub time_budget: f64,
    /// Points with `max(|q|, |p|)` above this are `DomainEscape`.
    pub chart_radius: Option<f64>,
    pub fd: FdSteps,
    pub ode: OdeOptions,
}

impl PoincareFamily {
    /// Family about the libration at `e0`, with the section through the well
    /// bottom and a budget of three 1-D periods.
    pub fn about(h: Hamiltonian, e0: f64, well_guess: f64) -> Result<Self> {
        let orbit = find_libration(&h, e0, None, well_guess)?;
        Ok(Self {
            section: SectionSpec::upward(orbit.y0),
            e0,
            time_budget: 3.0 * orbit.period,
            chart_radius: None,
            fd: FdSteps::default(),
            ode: OdeOptions::default(),
            hamiltonian: h,
        })
    }

    fn map_with(&self, h: &Hamiltonian, pt: Point3) -> Result<Vec2> {
        if let Some(r) = self.chart_radius {
            if pt.q.abs().max(pt.p.abs()) > r {
                return Err(Error::DomainEscape(format!(
                    "({}, {}) outside chart radius {r}",
                    pt.q, pt.p
                )));
            }
        }
        let s = lift_section_point(h, &self.section, self.e0, pt)?;
        let (y, _) = section_return(h, &self.section, s, self.time_budget, &self.ode)?;
        Ok([y[0], y[2]])
    }

    /// Return time of the orbit through `pt`.
    pub fn return_time(&self, pt: Point3) -> Result<f64> {
        let s = lift_section_point(&self.hamiltonian, &self.section, self.e0, pt)?;
        Ok(section_return(&self.hamiltonian, &self.section, s, self.time_budget, &self.ode)?.1)
    }
}

impl SymplecticFamily for PoincareFamily {
    fn eval(&self, pt: Point3) -> Result<Vec2> {
        self.map_with(&self.hamiltonian, pt)
    }

    fn jet(&self, pt: Point3, order: usize) -> Result<DerivativeJet> {
        finite_difference_jet(|x| self.eval(x), pt, order, self.fd)
    }
}

/// `H + delta F` as a two-parameter family; the base family's Hamiltonian
/// is the unperturbed one.
#[derive(Debug, Clone)]
pub struct PerturbedPoincare {
    pub base: PoincareFamily,
    perturbed: Hamiltonian,
    /// Step for the central difference in `delta`.
    pub delta_step: f64,
}

impl PerturbedPoincare {
    pub fn new(base: PoincareFamily, f: &Polynomial<4>) -> Self {
        let perturbed = base.hamiltonian.perturbed(f, 0.0);
        Self {
            base,
            perturbed,
            delta_step: 1e-4,
        }
    }
}

impl TwoParamFamily for PerturbedPoincare {
    fn eval_delta(&self, pt: Point3, delta: f64) -> Result<Vec2> {
        if delta == 0.0 {
            return self.base.eval(pt);
        }
        self.base.map_with(&self.perturbed.with_delta(delta), pt)
    }

    fn jet_delta(&self, pt: Point3, delta: f64, order: usize) -> Result<DerivativeJet> {
        finite_difference_jet(|x| self.eval_delta(x, delta), pt, order, self.base.fd)
    }

    fn delta_derivative(&self, pt: Point3) -> Result<Vec2> {
        let d = self.delta_step;
        let a = self.eval_delta(pt, d)?;
        let b = self.eval_delta(pt, -d)?;
        Ok([(a[0] - b[0]) / (2.0 * d), (a[1] - b[1]) / (2.0 * d)])
    }
}

/// A straight-line libration with its period and dense `(y, p_y)` path.
#[derive(Debug, Clone)]
pub struct LibratingOrbit {
    pub e0: f64,
    pub y0: f64,
    pub py0: f64,
    pub y1: f64,
    pub y2: f64,
    pub period: f64,
    /// `max |h(y, p_y) - E0|` over the step mesh.
    pub energy_drift: f64,
    /// `max(|y(T) - y0|, |p_y(T) - p_y0|)`.
    pub closure_error: f64,
    pub path: Solution<2>,
}

impl LibratingOrbit {
    pub fn state(&self, t: f64) -> [f64; 2] {
        self.path.eval(t)
    }
}

/// Libration at energy `e0` through `y0` (default: the well bottom near
/// `well_guess`).
pub fn find_libration(h: &Hamiltonian, e0: f64, y0: Option<f64>, well_guess: f64) -> Result<LibratingOrbit> {
    let bottom = h.well_bottom(well_guess)?;
    let depth = e0 - h.v0(bottom);
    if !(depth > 0.0) {
        return Err(Error::EnergyForbidden { radicand: 2.0 * depth });
    }
    let y1 = h.turning_point(bottom, e0, -1.0)?;
    let y2 = h.turning_point(bottom, e0, 1.0)?;
    let y0 = y0.unwrap_or(bottom);
    if !(y1 < y0 && y0 < y2) {
        return Err(Error::InvalidInput(format!("section y0 = {y0} outside ({y1}, {y2})")));
    }
    let py0 = (2.0 * (e0 - h.v0(y0))).sqrt();
    let t_quad = quadrature_period(h, y1, y2)?;
    let rhs = |_t: f64, s: &[f64; 2]| [s[1], -h.v0_prime(s[0])];
    let sec = Section {
        component: 0,
        value: y0,
        direction: 1.0,
    };
    let opts = OdeOptions::default();
    let hit = integrate_to_section(&rhs, 0.0, [y0, py0], 3.0 * t_quad, sec, &opts)?;
    let period = hit.t;
    let path = integrate(&rhs, 0.0, [y0, py0], period, &opts)?;
    let mut energy_drift: f64 = 0.0;
    for t in path.mesh() {
        let [y, p] = path.eval(t);
        energy_drift = energy_drift.max((0.5 * p * p + h.v0(y) - e0).abs());
    }
    let closure_error = (path.y_end[0] - y0).abs().max((path.y_end[1] - py0).abs());
    Ok(LibratingOrbit {
        e0,
        y0,
        py0,
        y1,
        y2,
        period,
        energy_drift,
        closure_error,
        path,
    })
}

/// `T = 2 int_{y1}^{y2} dy / sqrt(2 (E0 - V0(y)))`, with `y = c + r sin(theta)`
/// removing the endpoint singularities.
///
/// The turning points `y1 < y2` fix `E0`. Near each of them `E0 - V0` is
/// formed from the Taylor expansion of `V0` about that point (exact for
/// polynomials), which avoids cancellation.
pub fn quadrature_period(h: &Hamiltonian, y1: f64, y2: f64) -> Result<f64> {
    let (r, quarter) = (0.5 * (y2 - y1), std::f64::consts::FRAC_PI_4);
    let mut derivs = Vec::new();
    let mut d = h.v.substitute(0, 0.0).derivative(1);
    let mut fact = 1.0;
    for k in 1..=h.v.max_power(1).max(1) {
        fact *= k as f64;
        derivs.push((d.clone(), fact));
        d = d.derivative(1);
    }
    // V0(yt) - V0(yt + u) = -sum_k V0^(k)(yt) u^k / k!; the bisection
    // residual E0 - V0(yt) is left out because the integral reacts to it
    // like its square root
    let gap = |yt: f64, u: f64| {
        -derivs
            .iter()
            .enumerate()
            .map(|(i, (dk, fk))| dk.eval([0.0, yt]) * u.powi(i as i32 + 1) / fk)
            .sum::<f64>()
    };
    let g = |th: f64| {
        let rad = if th >= 0.0 {
            let s = (quarter - 0.5 * th).sin();
            2.0 * gap(y2, -2.0 * r * s * s)
        } else {
            let s = (quarter + 0.5 * th).sin();
            2.0 * gap(y1, 2.0 * r * s * s)
        };
        if rad > 0.0 {
            r * th.cos() / rad.sqrt()
        } else {
            0.0
        }
    };
    let half = std::f64::consts::FRAC_PI_2;
    let lo = integrate_adaptive(g, -half, 0.0, 1e-13, 1e-13)?.value;
    let hi = integrate_adaptive(g, 0.0, half, 1e-13, 1e-13)?.value;
    Ok(2.0 * (lo + hi))
}

/// `M = [[phi(T), psi(T)], [phi'(T), psi'(T)]]` of `xi'' + f(y(t)) xi = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonodromyData {
    pub phi_t: f64,
    pub psi_t: f64,
    pub dphi_t: f64,
    pub dpsi_t: f64,
    /// `|phi psi' - psi phi' - 1|` at `T`.
    pub wronskian_drift: f64,
}

impl MonodromyData {
    pub fn matrix(&self) -> Mat2 {
        Mat2::new(self.phi_t, self.psi_t, self.dphi_t, self.dpsi_t)
    }

    pub fn trace(&self) -> f64 {
        self.phi_t + self.dpsi_t
    }
}

/// Fundamental system of the Hill equation along a libration, integrated
/// together with the orbit: state `[y, p_y, phi, phi', psi, psi']`.
#[derive(Debug, Clone)]
pub struct HillSolution {
    pub period: f64,
    pub monodromy: MonodromyData,
    pub path: Solution<6>,
}

impl HillSolution {
    pub fn state(&self, t: f64) -> [f64; 6] {
        self.path.eval(t)
    }
}

/// Wronskian drift above which the Hill data are rejected.
pub const WRONSKIAN_TOL: f64 = 1e-9;

pub fn hill_fundamental(h: &Hamiltonian, orbit: &LibratingOrbit) -> Result<HillSolution> {
    let rhs = |_t: f64, s: &[f64; 6]| {
        let f = h.hill_f(s[0]);
        [s[1], -h.v0_prime(s[0]), s[3], -f * s[2], s[5], -f * s[4]]
    };
    let y0 = [orbit.y0, orbit.py0, 1.0, 0.0, 0.0, 1.0];
    let path = integrate(&rhs, 0.0, y0, orbit.period, &OdeOptions::default())?;
    let e = path.y_end;
    let w = e[2] * e[5] - e[4] * e[3];
    let monodromy = MonodromyData {
        phi_t: e[2],
        psi_t: e[4],
        dphi_t: e[3],
        dpsi_t: e[5],
        wronskian_drift: (w - 1.0).abs(),
    };
    if !(monodromy.wronskian_drift <= WRONSKIAN_TOL) {
        return Err(Error::NumericalBreakdown(format!(
            "Hill Wronskian drifted by {:e}",
            monodromy.wronskian_drift
        )));
    }
    Ok(HillSolution {
        period: orbit.period,
        monodromy,
        path,
    })
}

/// Orbit and Hill data for one libration, shared by downstream analyses.
#[derive(Debug, Clone)]
pub struct LibrationContext {
    pub hamiltonian: Hamiltonian,
    pub orbit: LibratingOrbit,
    pub hill: HillSolution,
}

impl LibrationContext {
    pub fn new(h: Hamiltonian, e0: f64, y0: Option<f64>, well_guess: f64) -> Result<Self> {
        let orbit = find_libration(&h, e0, y0, well_guess)?;
        let hill = hill_fundamental(&h, &orbit)?;
        Ok(Self {
            hamiltonian: h,
            orbit,
            hill,
        })
    }
}

/// One energy of a libration scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub eps: f64,
    pub period: f64,
    pub trace: f64,
    pub monodromy: MonodromyData,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LibrationCrossing {
    pub eps_star: f64,
    pub energy: f64,
    pub trace: f64,
    pub tr_prime: f64,
    pub monodromy: MonodromyData,
    /// Classification in the Poincaré family about the scan reference energy.
    pub report: Option<BifurcationReport>,
    pub classify_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LibrationScan {
    pub e_ref: f64,
    pub section: SectionSpec,
    pub rows: Vec<ScanRow>,
    /// The libration line `(0, 0, eps)` with its trace.
    pub branch: Branch,
    pub crossings: Vec<LibrationCrossing>,
    pub flat: bool,
    pub failures: Vec<Boundary>,
}

/// Settings for [`libration_branch_scan`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSettings {
    pub well_guess: f64,
    /// Section height; defaults to the well bottom.
    pub y0: Option<f64>,
    pub chart_radius: Option<f64>,
    /// Classify each located crossing in the Poincaré family.
    pub classify: bool,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            well_guess: 0.0,
            y0: None,
            chart_radius: None,
            classify: true,
        }
    }
}

pub(crate) fn monodromy_at(h: &Hamiltonian, energy: f64, y0: f64, well_guess: f64) -> Result<(f64, MonodromyData)> {
    let orbit = find_libration(h, energy, Some(y0), well_guess)?;
    let hill = hill_fundamental(h, &orbit)?;
    Ok((orbit.period, hill.monodromy))
}

/// Trace of the monodromy along the librations `E = e_ref + eps` for `n`
/// equally spaced `eps` in `eps_range`; `Tr = 2` crossings are refined on
/// the Hill trace and classified in the Poincaré family about `e_ref`.
pub fn libration_branch_scan(
    h: &Hamiltonian,
    e_ref: f64,
    eps_range: (f64, f64),
    n: usize,
    settings: &ScanSettings,
    tols: &Tolerances,
) -> Result<LibrationScan> {
    if n < 2 || !(eps_range.0 < eps_range.1) {
        return Err(Error::InvalidInput(
            "scan needs n >= 2 and an increasing eps range".into(),
        ));
    }
    let bottom = h.well_bottom(settings.well_guess)?;
    let y0 = settings.y0.unwrap_or(bottom);
    let ref_orbit = find_libration(h, e_ref, Some(y0), settings.well_guess)?;
    let section = SectionSpec::upward(y0);
    let de = (eps_range.1 - eps_range.0) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|k| eps_range.0 + k as f64 * de).collect();

    let results: Vec<Result<(f64, MonodromyData)>> = grid
        .par_iter()
        .map(|&eps| monodromy_at(h, e_ref + eps, y0, settings.well_guess))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (&eps, r) in grid.iter().zip(results) {
        match r {
            Ok((period, m)) => rows.push(ScanRow {
                eps,
                period,
                trace: m.trace(),
                monodromy: m,
            }),
            Err(e) => failures.push(Boundary {
                at: eps,
                reason: e.to_string(),
            }),
        }
    }

    let samples: Vec<Point3> = rows.iter().map(|r| Point3::new(0.0, 0.0, r.eps)).collect();
    let branch = Branch {
        parametrization: Parametrization::ByEps,
        param: rows.iter().map(|r| r.eps).collect(),
        trace: rows.iter().map(|r| r.trace).collect(),
        samples,
        frame: None,
        origin: Point3::ORIGIN,
        step: de,
        boundaries: failures.clone(),
        skipped: Vec::new(),
        fits: BranchFits::default(),
    };
    let flat = !rows.is_empty() && rows.iter().all(|r| (r.trace - 2.0).abs() <= tols.trace);

    let family = PoincareFamily {
        hamiltonian: h.clone(),
        section,
        e0: e_ref,
        time_budget: 3.0 * ref_orbit.period,
        chart_radius: settings.chart_radius,
        fd: FdSteps::default(),
        ode: OdeOptions::default(),
    };
    let tr = |eps: f64| -> Result<f64> { Ok(monodromy_at(h, e_ref + eps, y0, settings.well_guess)?.1.trace() - 2.0) };

    let mut crossings = Vec::new();
    if !flat {
        let brackets: Vec<(ScanRow, ScanRow)> = rows
            .windows(2)
            .filter(|w| w[1].eps - w[0].eps < 1.5 * de)
            .filter(|w| (w[0].trace - 2.0) * (w[1].trace - 2.0) < 0.0)
            .map(|w| (w[0], w[1]))
            .collect();
        let found: Vec<Result<LibrationCrossing>> = brackets
            .par_iter()
            .map(|(a, b)| {
                let eps_star = illinois(tr, a.eps, a.trace - 2.0, b.eps, b.trace - 2.0, 1e-12)?;
                let (_, m) = monodromy_at(h, e_ref + eps_star, y0, settings.well_guess)?;
                let tr_prime = fitted_slope(tr, eps_star, 0.25 * de)?;
                let (report, classify_error) = if settings.classify {
                    match classify(&family, Point3::new(0.0, 0.0, eps_star), tols) {
                        Ok(r) => (Some(r), None),
                        Err(e) => (None, Some(e.to_string())),
                    }
                } else {
                    (None, None)
                };
                Ok(LibrationCrossing {
                    eps_star,
                    energy: e_ref + eps_star,
                    trace: m.trace(),
                    tr_prime,
                    monodromy: m,
                    report,
                    classify_error,
                })
            })
            .collect();
        for c in found {
            crossings.push(c?);
        }
    }
    Ok(LibrationScan {
        e_ref,
        section,
        rows,
        branch,
        crossings,
        flat,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn harmonic(wx: f64) -> Hamiltonian {
        Hamiltonian::new(Polynomial::new([([2, 0], 0.5 * wx * wx), ([0, 2], 0.5)])).unwrap()
    }

    #[test]
    fn rejects_x_linear_terms() {
        let v = Polynomial::new([([1, 2], 1.0), ([0, 2], 0.5)]);
        assert!(matches!(Hamiltonian::new(v), Err(Error::NotStraightLine(_))));
    }

    #[test]
    fn lift_examples() {
        let h = harmonic(1.0);
        let s = lift_section_point(&h, &SectionSpec::upward(0.0), 0.5, Point3::ORIGIN).unwrap();
        assert_eq!(s, [0.0, 0.0, 0.0, 1.0]);
        let r = lift_section_point(&h, &SectionSpec::upward(0.0), 0.5, Point3::new(0.0, 0.0, -0.6));
        assert!(matches!(r, Err(Error::EnergyForbidden { .. })));
    }

    #[test]
    fn harmonic_libration() {
        let h = harmonic(1.0);
        let o = find_libration(&h, 0.5, None, 0.3).unwrap();
        assert!((o.y1 + 1.0).abs() < 1e-12 && (o.y2 - 1.0).abs() < 1e-12);
        assert!((o.period - 2.0 * PI).abs() < 1e-9);
        let o = find_libration(&h, 0.02, None, 0.0).unwrap();
        assert!((o.period - 2.0 * PI).abs() < 1e-9);
        assert!((quadrature_period(&h, o.y1, o.y2).unwrap() - 2.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn hill_closed_forms() {
        let w = 1.3;
        let h = harmonic(w);
        let o = find_libration(&h, 0.5, None, 0.0).unwrap();
        let m = hill_fundamental(&h, &o).unwrap().monodromy;
        let a = 2.0 * PI * w;
        assert!((m.phi_t - a.cos()).abs() < 1e-9);
        assert!((m.psi_t - a.sin() / w).abs() < 1e-9);
        assert!((m.dphi_t + w * a.sin()).abs() < 1e-9);
        assert!((m.dpsi_t - a.cos()).abs() < 1e-9);
    }

    #[test]
    fn poincare_fixes_libration_line() {
        let h = Hamiltonian::demo(1.0, 1.1, 1.5);
        let fam = PoincareFamily::about(h, 0.2, 0.0).unwrap();
        for eps in [-0.05, 0.0, 0.05] {
            assert_eq!(fam.eval(Point3::new(0.0, 0.0, eps)).unwrap(), [0.0, 0.0]);
        }
    }

    #[test]
    fn decoupled_map_is_identity() {
        let fam = PoincareFamily::about(harmonic(1.0), 0.5, 0.0).unwrap();
        let v = fam.eval(Point3::new(0.1, -0.05, 0.0)).unwrap();
        assert!((v[0] - 0.1).abs() < 1e-9 && (v[1] + 0.05).abs() < 1e-9);
    }
}
