//! Fixed-point location and branch continuation.
//!
//! Branches are graphs over `eps` (`ByEps`) or, for the tangent line of a
//! fork-like crossing, over `q~` in the adapted frame of the crossing
//! (`ByQ`). Stepping is on a fixed grid with step halving on failure.

use serde::Serialize;

use crate::classifier::{classify, BifurcationKind, BifurcationReport};
use crate::error::{Error, Result};
use crate::family::{Point3, SymplecticFamily};
use crate::fit::{extrapolate_to_zero, local_quadratic_fit, symmetric_derivatives};
use crate::frames::{AdaptedFrame, FramedFamily};
use crate::linalg::{normalize3, Mat2, Vec2};
use crate::tolerances::Tolerances;

/// Residual bound every stored branch sample satisfies.
pub const SAMPLE_RESIDUAL: f64 = 1e-9;

/// Residual targeted by Newton inside continuation.
const NEWTON_TOL: f64 = 1e-13;
const NEWTON_MAX_ITER: usize = 60;

fn step_tol(tol: f64, x: Vec2) -> f64 {
    (10.0 * tol).max(1e-11) * (1.0 + x[0].abs().max(x[1].abs()))
}

/// Newton's method on a 2x2 system; `eval` returns residual and Jacobian.
fn newton2<E>(eval: E, x0: Vec2, tol: f64, max_iter: usize) -> Result<Vec2>
where
    E: Fn(Vec2) -> Result<(Vec2, Mat2)>,
{
    let mut x = x0;
    let mut last_step = f64::INFINITY;
    for it in 0..=max_iter {
        let (r, jac) = eval(x)?;
        let res = r[0].abs().max(r[1].abs());
        if !res.is_finite() {
            return Err(Error::NumericalBreakdown(format!("non-finite residual at {x:?}")));
        }
        if res == 0.0 || (res <= tol && (it == 0 || last_step <= step_tol(tol, x))) {
            return Ok(x);
        }
        if it == max_iter {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: res,
            });
        }
        let det = jac.det();
        let d = match jac.solve([-r[0], -r[1]], 1e-15 * (1.0 + jac.max_abs().powi(2))) {
            Some(d) => d,
            None if res <= tol => return Ok(x),
            None => return Err(Error::SingularJacobian { det }),
        };
        x = [x[0] + d[0], x[1] + d[1]];
        last_step = d[0].abs().max(d[1].abs());
    }
    unreachable!("loop returns on its last iteration")
}

/// Solve `(Q, P)(q, p, eps) = (q, p)` for `(q, p)` at fixed `eps`.
pub fn newton_fixed_point<F: SymplecticFamily + ?Sized>(
    family: &F,
    eps: f64,
    guess: Vec2,
    tol: f64,
    max_iter: usize,
) -> Result<Vec2> {
    newton2(
        |x| {
            let jet = family.jet(Point3::new(x[0], x[1], eps), 1)?;
            let [q, p] = jet.value();
            Ok(([q - x[0], p - x[1]], jet.jacobian().sub(&Mat2::IDENTITY)))
        },
        guess,
        tol,
        max_iter,
    )
}

/// Solve for `(p~, eps~)` at fixed `q~` in a framed family.
fn newton_by_q<F: SymplecticFamily + ?Sized>(family: &F, q: f64, guess: Vec2) -> Result<Vec2> {
    newton2(
        |x| {
            let jet = family.jet(Point3::new(q, x[0], x[1]), 1)?;
            let [big_q, big_p] = jet.value();
            let j = Mat2::new(jet.dq(0, 1, 0), jet.dq(0, 0, 1), jet.dp(0, 1, 0) - 1.0, jet.dp(0, 0, 1));
            Ok(([big_q - q, big_p - x[0]], j))
        },
        guess,
        NEWTON_TOL,
        NEWTON_MAX_ITER,
    )
}

fn residual_at<F: SymplecticFamily + ?Sized>(family: &F, pt: Point3) -> Result<f64> {
    let [q, p] = family.eval(pt)?;
    Ok((q - pt.q).abs().max((p - pt.p).abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Parametrization {
    ByEps,
    ByQ,
}

/// Where and why a branch stopped short of its requested range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Boundary {
    pub at: f64,
    pub reason: String,
}

/// Derivative estimates at the branch origin: extrapolated symmetric
/// differences on the sample grid, or a 5-point quadratic fit when the grid
/// does not straddle the origin.
///
/// `ByEps`: `q'`, `p'`, `Tr'` with respect to `eps`.
/// `ByQ`: first and second derivatives of `p~` and `eps~` with respect to
/// `q~` in the branch frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BranchFits {
    pub q_prime: Option<f64>,
    pub p_prime: Option<f64>,
    pub tr_prime: Option<f64>,
    pub eps_prime: Option<f64>,
    pub eps_second: Option<f64>,
    pub p_second: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Branch {
    pub parametrization: Parametrization,
    /// Fixed points in original coordinates, ordered by `param`.
    pub samples: Vec<Point3>,
    /// `eps` for `ByEps`, `q~` for `ByQ`.
    pub param: Vec<f64>,
    /// Empty until [`trace_on_branch`] runs.
    pub trace: Vec<f64>,
    /// Frame of the `q~` parametrization (`ByQ` only).
    pub frame: Option<AdaptedFrame>,
    /// Point at which derivative fits are taken.
    pub origin: Point3,
    pub step: f64,
    pub boundaries: Vec<Boundary>,
    /// Grid values jumped over because Newton failed there.
    pub skipped: Vec<f64>,
    pub fits: BranchFits,
}

impl Branch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples in frame coordinates (`ByQ`), or as stored.
    pub fn frame_samples(&self) -> Vec<Point3> {
        match self.frame {
            Some(f) => self.samples.iter().map(|&s| f.to_frame(s)).collect(),
            None => self.samples.clone(),
        }
    }

    fn refit(&mut self) {
        const N: usize = 5;
        let mut fits = BranchFits::default();
        let h = self.step;
        // symmetric differences when the grid straddles the origin, else a
        // local quadratic fit
        let slope = |ys: &[f64], xs: &[f64], x0: f64| {
            symmetric_derivatives(xs, ys, x0, h)
                .or_else(|| local_quadratic_fit(xs, ys, x0, N).ok().map(|f| (f.slope(), f.second())))
        };
        match self.parametrization {
            Parametrization::ByEps => {
                let xs: Vec<f64> = self.samples.iter().map(|s| s.eps).collect();
                let qs: Vec<f64> = self.samples.iter().map(|s| s.q).collect();
                let ps: Vec<f64> = self.samples.iter().map(|s| s.p).collect();
                let x0 = self.origin.eps;
                fits.q_prime = slope(&qs, &xs, x0).map(|f| f.0);
                fits.p_prime = slope(&ps, &xs, x0).map(|f| f.0);
                if self.trace.len() == xs.len() {
                    fits.tr_prime = slope(&self.trace, &xs, x0).map(|f| f.0);
                }
            }
            Parametrization::ByQ => {
                let fs = self.frame_samples();
                let xs: Vec<f64> = fs.iter().map(|s| s.q).collect();
                let es: Vec<f64> = fs.iter().map(|s| s.eps).collect();
                let ps: Vec<f64> = fs.iter().map(|s| s.p).collect();
                let x0 = self.frame.map(|f| f.to_frame(self.origin).q).unwrap_or(0.0);
                if let Some((d1, d2)) = slope(&es, &xs, x0) {
                    fits.eps_prime = Some(d1);
                    fits.eps_second = Some(d2);
                }
                if let Some((d1, d2)) = slope(&ps, &xs, x0) {
                    fits.p_prime = Some(d1);
                    fits.p_second = Some(d2);
                }
            }
        }
        self.fits = fits;
    }

    /// Unit tangent at the origin from the fits, oriented with `eps >= 0`.
    pub fn fitted_tangent(&self) -> Option<[f64; 3]> {
        let v = match self.parametrization {
            Parametrization::ByEps => [self.fits.q_prime?, self.fits.p_prime?, 1.0],
            Parametrization::ByQ => self
                .frame?
                .vector_from_frame([1.0, self.fits.p_prime?, self.fits.eps_prime?]),
        };
        let v = normalize3(v);
        Some(if v[2] < 0.0 || (v[2] == 0.0 && v[0] < 0.0) {
            [-v[0], -v[1], -v[2]]
        } else {
            v
        })
    }
}

struct Marched {
    params: Vec<f64>,
    xs: Vec<Vec2>,
    boundaries: Vec<Boundary>,
    skipped: Vec<f64>,
}

/// Walk the grid `p0 + k * step` in one direction (`dir = +-1`).
fn march_one<S>(solve: &S, p0: f64, x0: Vec2, slope0: Option<Vec2>, limit: f64, step: f64, dir: f64) -> Marched
where
    S: Fn(f64, Vec2) -> Result<Vec2>,
{
    let min_h = step * 2f64.powi(-8);
    let slack = 1e-9 * step;
    let mut out = Marched {
        params: vec![p0],
        xs: vec![x0],
        boundaries: Vec::new(),
        skipped: Vec::new(),
    };
    let predict = |ps: &[f64], xs: &[Vec2], p: f64| -> Vec2 {
        let n = ps.len();
        if n >= 2 {
            let t = (p - ps[n - 1]) / (ps[n - 1] - ps[n - 2]);
            let (a, b) = (xs[n - 2], xs[n - 1]);
            [b[0] + t * (b[0] - a[0]), b[1] + t * (b[1] - a[1])]
        } else if let Some(s) = slope0 {
            [x0[0] + s[0] * (p - p0), x0[1] + s[1] * (p - p0)]
        } else {
            x0
        }
    };
    let in_range = |p: f64| dir * (p - limit) <= slack;

    let mut k = 1usize;
    'grid: loop {
        let mut target = p0 + dir * k as f64 * step;
        if !in_range(target) {
            break;
        }
        let mut p_try = target;
        let mut leapt = false;
        loop {
            let cur = *out.params.last().unwrap();
            let h = p_try - cur;
            let pred = predict(&out.params, &out.xs, p_try);
            let attempt = solve(p_try, pred).and_then(|x| {
                let jump = (x[0] - pred[0]).abs().max((x[1] - pred[1]).abs());
                if jump <= h.abs() {
                    Ok(x)
                } else {
                    Err(Error::NumericalBreakdown(format!(
                        "corrector jumped {jump:e} at step {h:e}; possible branch switch"
                    )))
                }
            });
            match attempt {
                Ok(x) => {
                    out.params.push(p_try);
                    out.xs.push(x);
                    if p_try == target {
                        k += 1;
                        continue 'grid;
                    }
                    p_try = target;
                }
                Err(e) => {
                    let half = 0.5 * h;
                    if half.abs() >= min_h {
                        p_try = cur + half;
                        continue;
                    }
                    let next = p0 + dir * (k + 1) as f64 * step;
                    if !leapt && in_range(next) {
                        leapt = true;
                        out.skipped.push(target);
                        k += 1;
                        target = next;
                        p_try = next;
                        continue;
                    }
                    out.boundaries.push(Boundary {
                        at: cur,
                        reason: e.to_string(),
                    });
                    break 'grid;
                }
            }
        }
    }
    out
}

fn march_both<S>(solve: &S, p0: f64, x0: Vec2, slope0: Option<Vec2>, range: (f64, f64), step: f64) -> Marched
where
    S: Fn(f64, Vec2) -> Result<Vec2> + Sync,
{
    let (lo, hi) = range;
    let (down, up) = rayon::join(
        || march_one(solve, p0, x0, slope0, lo, step, -1.0),
        || march_one(solve, p0, x0, slope0, hi, step, 1.0),
    );
    let mut params: Vec<f64> = down.params.iter().rev().copied().collect();
    let mut xs: Vec<Vec2> = down.xs.iter().rev().copied().collect();
    params.extend_from_slice(&up.params[1..]);
    xs.extend_from_slice(&up.xs[1..]);
    let mut boundaries = down.boundaries;
    boundaries.extend(up.boundaries);
    let mut skipped = down.skipped;
    skipped.extend(up.skipped);
    Marched {
        params,
        xs,
        boundaries,
        skipped,
    }
}

fn check_range(range: (f64, f64), step: f64, seed: f64) -> Result<()> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidInput(format!("step must be positive, got {step}")));
    }
    if !(range.0 <= seed && seed <= range.1) {
        return Err(Error::InvalidInput(format!(
            "seed {seed} outside range [{}, {}]",
            range.0, range.1
        )));
    }
    Ok(())
}

/// `d(q, p)/d eps` on a branch through a regular fixed point, if defined.
fn ift_slope<F: SymplecticFamily + ?Sized>(family: &F, pt: Point3) -> Option<Vec2> {
    let jet = family.jet(pt, 1).ok()?;
    let a = jet.jacobian().sub(&Mat2::IDENTITY);
    let [qe, pe] = jet.eps_partials();
    a.solve([-qe, -pe], 1e-8)
}

fn continue_by_eps<F: SymplecticFamily + ?Sized>(
    family: &F,
    seed: Point3,
    origin: Point3,
    slope0: Option<Vec2>,
    range: (f64, f64),
    step: f64,
) -> Result<Branch> {
    check_range(range, step, seed.eps)?;
    let residual = residual_at(family, seed)?;
    if !(residual <= SAMPLE_RESIDUAL) {
        return Err(Error::SeedNotFixed { residual });
    }
    // The local slope beats a tangent handed in from the crossing, which is
    // off by the curvature over the seed distance.
    let slope0 = ift_slope(family, seed).or(slope0);
    let solve = |eps: f64, guess: Vec2| -> Result<Vec2> {
        let x = newton_fixed_point(family, eps, guess, NEWTON_TOL, NEWTON_MAX_ITER)?;
        let r = residual_at(family, Point3::new(x[0], x[1], eps))?;
        if r <= SAMPLE_RESIDUAL {
            Ok(x)
        } else {
            Err(Error::NotFixedPoint { residual: r })
        }
    };
    let m = march_both(&solve, seed.eps, [seed.q, seed.p], slope0, range, step);
    let samples = m
        .params
        .iter()
        .zip(&m.xs)
        .map(|(&e, x)| Point3::new(x[0], x[1], e))
        .collect();
    let mut branch = Branch {
        parametrization: Parametrization::ByEps,
        samples,
        param: m.params,
        trace: Vec::new(),
        frame: None,
        origin,
        step,
        boundaries: m.boundaries,
        skipped: m.skipped,
        fits: BranchFits::default(),
    };
    branch.refit();
    Ok(branch)
}

/// Continue the fixed-point branch through `seed` over `eps_range` on the
/// grid `seed.eps + k * step`. Derivative fits are taken at the seed.
pub fn continue_branch<F: SymplecticFamily + ?Sized>(
    family: &F,
    seed: Point3,
    eps_range: (f64, f64),
    step: f64,
) -> Result<Branch> {
    continue_by_eps(family, seed, seed, None, eps_range, step)
}

/// Continue a `ByQ` branch of `framed` through the frame point `seed`
/// (frame coordinates) over `q_range`.
fn continue_by_q<F: SymplecticFamily + ?Sized>(
    framed: &FramedFamily<&F>,
    seed: Point3,
    slope0: Option<Vec2>,
    q_range: (f64, f64),
    step: f64,
) -> Result<Branch> {
    check_range(q_range, step, seed.q)?;
    let residual = residual_at(framed, seed)?;
    if !(residual <= SAMPLE_RESIDUAL) {
        return Err(Error::SeedNotFixed { residual });
    }
    let frame = framed.frame;
    let solve = |q: f64, guess: Vec2| -> Result<Vec2> {
        // at q~ = 0 the other line passes through too and (p~, eps~) is not
        // isolated; the crossing itself is the point of this line there
        if q.abs() <= 1e-9 * step {
            return Ok([0.0, 0.0]);
        }
        let x = newton_by_q(framed, q, guess)?;
        let pt = frame.from_frame(Point3::new(q, x[0], x[1]));
        let r = residual_at(framed.inner, pt)?;
        if r <= SAMPLE_RESIDUAL {
            Ok(x)
        } else {
            Err(Error::NotFixedPoint { residual: r })
        }
    };
    let m = march_both(&solve, seed.q, [seed.p, seed.eps], slope0, q_range, step);
    let samples = m
        .params
        .iter()
        .zip(&m.xs)
        .map(|(&q, x)| frame.from_frame(Point3::new(q, x[0], x[1])))
        .collect();
    let mut branch = Branch {
        parametrization: Parametrization::ByQ,
        samples,
        param: m.params,
        trace: Vec::new(),
        frame: Some(frame),
        origin: frame.base_point,
        step,
        boundaries: m.boundaries,
        skipped: m.skipped,
        fits: BranchFits::default(),
    };
    branch.refit();
    Ok(branch)
}

/// Fill `trace` with `Q_q + P_p` at every sample and refresh the fits.
pub fn trace_on_branch<F: SymplecticFamily + ?Sized>(family: &F, mut branch: Branch) -> Result<Branch> {
    branch.trace = branch
        .samples
        .iter()
        .map(|&s| family.jet(s, 1).map(|j| j.trace()))
        .collect::<Result<_>>()?;
    branch.refit();
    Ok(branch)
}

/// A located zero of `Tr - 2` on a branch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingReport {
    pub eps_star: f64,
    pub point: Point3,
    pub trace: f64,
    pub tr_prime: f64,
    pub report: BifurcationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingSearch {
    pub crossings: Vec<CrossingReport>,
    /// `|Tr - 2|` stayed within tolerance over the whole branch.
    pub flat: bool,
    /// Brackets whose refinement failed, with the reason.
    pub unresolved: Vec<(f64, f64, String)>,
}

/// Fixed point on a `ByEps` branch at `eps`, seeded by interpolation.
pub fn branch_point_at<F: SymplecticFamily + ?Sized>(family: &F, branch: &Branch, eps: f64) -> Result<Point3> {
    if branch.parametrization != Parametrization::ByEps || branch.samples.is_empty() {
        return Err(Error::PreconditionViolated("needs a non-empty ByEps branch".into()));
    }
    let s = &branch.samples;
    let guess = if s.len() < 2 {
        [s[0].q, s[0].p]
    } else {
        let i = s.partition_point(|p| p.eps < eps).clamp(1, s.len() - 1);
        let (a, b) = (s[i - 1], s[i]);
        let t = (eps - a.eps) / (b.eps - a.eps);
        [a.q + t * (b.q - a.q), a.p + t * (b.p - a.p)]
    };
    let x = newton_fixed_point(family, eps, guess, NEWTON_TOL, NEWTON_MAX_ITER)?;
    Ok(Point3::new(x[0], x[1], eps))
}

/// Illinois-modified regula falsi on `phi` over the bracket `[a, b]`.
pub(crate) fn illinois<G>(phi: G, mut a: f64, mut fa: f64, mut b: f64, mut fb: f64, xtol: f64) -> Result<f64>
where
    G: Fn(f64) -> Result<f64>,
{
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::InvalidInput("bracket does not change sign".into()));
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let c = if c.is_finite() && c > a.min(b) && c < a.max(b) {
            c
        } else {
            0.5 * (a + b)
        };
        let fc = phi(c)?;
        if fc == 0.0 {
            return Ok(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if (b - a).abs() <= xtol * (1.0 + c.abs()) {
            return Ok(if fa.abs() < fb.abs() { a } else { b });
        }
    }
    Err(Error::NoConvergence {
        iterations: 200,
        residual: fa.abs().min(fb.abs()),
    })
}

/// Slope of `f` at `x0` from a 5-point quadratic fit with spacing `h`.
pub(crate) fn fitted_slope<G>(f: G, x0: f64, h: f64) -> Result<f64>
where
    G: Fn(f64) -> Result<f64>,
{
    let xs: Vec<f64> = (-2..=2).map(|k| x0 + k as f64 * h).collect();
    let ys = xs.iter().map(|&x| f(x)).collect::<Result<Vec<f64>>>()?;
    Ok(crate::fit::quadratic_fit(&xs, &ys, x0)?.slope())
}

/// Sign changes of `Tr - 2` along a traced `ByEps` branch, refined to
/// `|d eps| <= 1e-12` and classified.
pub fn find_trace2_crossings<F: SymplecticFamily + ?Sized>(
    family: &F,
    branch: &Branch,
    tols: &Tolerances,
) -> Result<CrossingSearch> {
    if branch.parametrization != Parametrization::ByEps {
        return Err(Error::PreconditionViolated(
            "crossing search needs a ByEps branch".into(),
        ));
    }
    if branch.trace.len() != branch.samples.len() {
        return Err(Error::PreconditionViolated("trace_on_branch has not been run".into()));
    }
    let d: Vec<f64> = branch.trace.iter().map(|t| t - 2.0).collect();
    let mut search = CrossingSearch {
        crossings: Vec::new(),
        flat: false,
        unresolved: Vec::new(),
    };
    if d.iter().all(|x| x.abs() <= tols.trace) {
        search.flat = true;
        return Ok(search);
    }
    let phi = |eps: f64| -> Result<f64> { Ok(family.jet(branch_point_at(family, branch, eps)?, 1)?.trace() - 2.0) };
    let signed: Vec<usize> = (0..d.len()).filter(|&i| d[i] != 0.0).collect();
    for w in signed.windows(2) {
        let (i, j) = (w[0], w[1]);
        if d[i].signum() == d[j].signum() {
            continue;
        }
        let (a, b) = (branch.samples[i].eps, branch.samples[j].eps);
        let refined = illinois(phi, a, d[i], b, d[j], 1e-12).and_then(|eps_star| {
            let point = branch_point_at(family, branch, eps_star)?;
            let trace = family.jet(point, 1)?.trace();
            let h = 0.25 * (b - a).abs().min(branch.step);
            let tr_prime = fitted_slope(phi, eps_star, h)?;
            let report = classify(family, point, tols)?;
            Ok(CrossingReport {
                eps_star,
                point,
                trace,
                tr_prime,
                report,
            })
        });
        match refined {
            Ok(c) => search.crossings.push(c),
            Err(e) => search.unresolved.push((a, b, e.to_string())),
        }
    }
    Ok(search)
}

/// The two fixed-point lines through a cross-bifurcation.
///
/// `A` is the line with the larger `eps`-component of its tangent. For a
/// transcritical crossing both are continued over `eps`; for a fork-like
/// crossing `B` is continued over `q~` in the adapted frame.
pub fn split_cross_branches<F: SymplecticFamily + ?Sized>(
    family: &F,
    cross_pt: Point3,
    half_width: f64,
    step: f64,
    tols: &Tolerances,
) -> Result<(Branch, Branch)> {
    let report = classify(family, cross_pt, tols)?;
    if !report.kind.is_cross() {
        return Err(Error::NotCross {
            kind: report.kind.to_string(),
        });
    }
    let [a, b] = report.branch_tangents.expect("cross reports carry tangents");
    let seed_dist = 10.0 * step;
    let eps_range = (cross_pt.eps - half_width, cross_pt.eps + half_width);

    let by_eps = |t: [f64; 3]| -> Result<Branch> {
        let s = seed_dist / t[2];
        let slope = [t[0] / t[2], t[1] / t[2]];
        let eps = cross_pt.eps + seed_dist;
        let guess = [cross_pt.q + s * t[0], cross_pt.p + s * t[1]];
        let x = newton_fixed_point(family, eps, guess, NEWTON_TOL, NEWTON_MAX_ITER)?;
        let seed = Point3::new(x[0], x[1], eps);
        let b = continue_by_eps(family, seed, cross_pt, Some(slope), eps_range, step)?;
        trace_on_branch(family, b)
    };

    if report.kind != BifurcationKind::Rank1CrossForkLike {
        let (ra, rb) = rayon::join(|| by_eps(a), || by_eps(b));
        return Ok((ra?, rb?));
    }

    let frame = report.frame.expect("cross reports carry a frame");
    let framed = FramedFamily::new(family, frame);
    let ajet = framed.jet(Point3::ORIGIN, 2)?;
    let e2 = report.eps_b_second.expect("fork-like reports carry eps_B''");
    let p2 = -ajet.dq(2, 0, 0) / ajet.dq(0, 1, 0);
    let by_q = || -> Result<Branch> {
        let q = seed_dist;
        let guess = [0.5 * p2 * q * q, 0.5 * e2 * q * q];
        let x = newton_by_q(&framed, q, guess)?;
        let seed = Point3::new(q, x[0], x[1]);
        let b = continue_by_q(&framed, seed, Some([p2 * q, e2 * q]), (-half_width, half_width), step)?;
        trace_on_branch(family, b)
    };
    let (ra, rb) = rayon::join(|| by_eps(a), by_q);
    Ok((ra?, rb?))
}

/// Trace slopes of two lines through a crossing and the residual of the
/// slope relation being checked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeCheck {
    pub tr_a_prime: f64,
    pub tr_b_prime: f64,
    pub residual: f64,
}

/// `|Tr_A'(0) + Tr_B'(0)|` for a transcritical crossing.
pub fn verify_transcritical_slopes<F: SymplecticFamily + ?Sized>(
    _family: &F,
    a: &Branch,
    b: &Branch,
) -> Result<SlopeCheck> {
    if a.parametrization != Parametrization::ByEps || b.parametrization != Parametrization::ByEps {
        return Err(Error::PreconditionViolated(
            "both branches must be graphs over eps".into(),
        ));
    }
    let (Some(ta), Some(tb)) = (a.fits.tr_prime, b.fits.tr_prime) else {
        return Err(Error::PreconditionViolated("branches carry no trace fits".into()));
    };
    Ok(SlopeCheck {
        tr_a_prime: ta,
        tr_b_prime: tb,
        residual: (ta + tb).abs(),
    })
}

/// `|Tr_A'(0) + Tr_B'(0) / 2|` for a fork-like crossing, where `Tr_B'(0)` is
/// the limit of `(Tr_B(q) - 2) / eps_B(q)` as `q -> 0`, extrapolated from
/// symmetric samples `q = +-h 2^-k`.
pub fn verify_fork_slopes<F: SymplecticFamily + ?Sized>(family: &F, a: &Branch, b: &Branch) -> Result<SlopeCheck> {
    if a.parametrization != Parametrization::ByEps || b.parametrization != Parametrization::ByQ {
        return Err(Error::PreconditionViolated("needs A over eps and B over q".into()));
    }
    let tr_a = a
        .fits
        .tr_prime
        .ok_or_else(|| Error::PreconditionViolated("branch A carries no trace fit".into()))?;
    let frame = b.frame.expect("ByQ branches carry a frame");
    let (Some(e2), Some(p2)) = (b.fits.eps_second, b.fits.p_second) else {
        return Err(Error::PreconditionViolated("branch B carries no fits".into()));
    };
    let framed = FramedFamily::new(family, frame);

    let ratio_at = |q: f64| -> Result<Option<f64>> {
        let x = newton_by_q(&framed, q, [0.5 * p2 * q * q, 0.5 * e2 * q * q])?;
        if x[1].abs() < 1e-12 {
            return Ok(None);
        }
        let tr = framed.jet(Point3::new(q, x[0], x[1]), 1)?.trace();
        Ok(Some((tr - 2.0) / x[1]))
    };
    let h0 = 8.0 * b.step;
    let mut hs2 = Vec::new();
    let mut vals = Vec::new();
    for k in 0..5 {
        let h = h0 * 0.5f64.powi(k);
        if let (Some(r1), Some(r2)) = (ratio_at(h)?, ratio_at(-h)?) {
            hs2.push(h * h);
            vals.push(0.5 * (r1 + r2));
        }
    }
    if vals.len() < 2 {
        return Err(Error::NumericalBreakdown(
            "eps_B vanishes along the sampled line".into(),
        ));
    }
    let tr_b = extrapolate_to_zero(&hs2, &vals)?;
    Ok(SlopeCheck {
        tr_a_prime: tr_a,
        tr_b_prime: tr_b,
        residual: (tr_a + 0.5 * tr_b).abs(),
    })
}

/// Shear constant that makes the frame slopes of two `ByEps` branches
/// symmetric, `q~_A' + q~_B' = 0`.
pub fn symmetrizing_shear(frame: &AdaptedFrame, a: &Branch, b: &Branch) -> Option<f64> {
    let ta = frame.vector_to_frame([a.fits.q_prime?, a.fits.p_prime?, 1.0]);
    let tb = frame.vector_to_frame([b.fits.q_prime?, b.fits.p_prime?, 1.0]);
    Some(0.5 * (ta[0] + tb[0]))
}
