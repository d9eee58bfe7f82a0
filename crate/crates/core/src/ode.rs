//! Dormand–Prince 5(4) with Hairer's dense output and hyperplane events.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Upper bound on `|h|`; `0` means unbounded.
    pub h_max: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-11,
            atol: 1e-11,
            max_steps: 1_000_000,
            h_max: 0.0,
        }
    }
}

/// One accepted step with its dense-output coefficients.
#[derive(Debug, Clone)]
pub struct Segment<const N: usize> {
    pub t: f64,
    pub h: f64,
    r: [[f64; N]; 5],
}

impl<const N: usize> Segment<N> {
    fn eval(&self, t: f64) -> [f64; N] {
        let s = (t - self.t) / self.h;
        let s1 = 1.0 - s;
        let r = &self.r;
        std::array::from_fn(|i| r[0][i] + s * (r[1][i] + s1 * (r[2][i] + s * (r[3][i] + s1 * r[4][i]))))
    }
}

/// Continuous solution on `[t0, t_end]`.
#[derive(Debug, Clone)]
pub struct Solution<const N: usize> {
    pub t0: f64,
    pub t_end: f64,
    pub y_end: [f64; N],
    pub segments: Vec<Segment<N>>,
    pub steps: usize,
}

impl<const N: usize> Solution<N> {
    /// Dense-output value at `t` (clamped to the integrated interval).
    pub fn eval(&self, t: f64) -> [f64; N] {
        if self.segments.is_empty() {
            return self.y_end;
        }
        let i = self
            .segments
            .partition_point(|s| s.t + s.h <= t)
            .min(self.segments.len() - 1);
        self.segments[i].eval(t)
    }

    /// Step boundaries `t_0 < t_1 < ... < t_end`.
    pub fn mesh(&self) -> Vec<f64> {
        let mut m: Vec<f64> = self.segments.iter().map(|s| s.t).collect();
        m.push(self.t_end);
        m
    }
}

struct StepOut<const N: usize> {
    y: [f64; N],
    k: [[f64; N]; 7],
    err: f64,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

fn rk_step<const N: usize, F>(f: &F, t: f64, y: &[f64; N], k1: &[f64; N], h: f64, opts: &OdeOptions) -> StepOut<N>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let k2 = f(t + C2 * h, &axpy(y, h, &[(A21, k1)]));
    let k3 = f(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(
        t + C5 * h,
        &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let y6 = axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
    let k6 = f(t + h, &y6);
    let y_new = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(t + h, &y_new);
    let mut acc = 0.0;
    for i in 0..N {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
        acc += (e / sc).powi(2);
    }
    StepOut {
        y: y_new,
        k: [*k1, k2, k3, k4, k5, k6, k7],
        err: (acc / N as f64).sqrt(),
    }
}

fn dense<const N: usize>(t: f64, h: f64, y0: &[f64; N], s: &StepOut<N>) -> Segment<N> {
    let k = &s.k;
    let mut r = [[0.0; N]; 5];
    for i in 0..N {
        let ydiff = s.y[i] - y0[i];
        let bspl = h * k[0][i] - ydiff;
        r[0][i] = y0[i];
        r[1][i] = ydiff;
        r[2][i] = bspl;
        r[3][i] = ydiff - h * k[6][i] - bspl;
        r[4][i] = h * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
    }
    Segment { t, h, r }
}

fn rms<const N: usize>(v: &[f64; N], y: &[f64; N], opts: &OdeOptions) -> f64 {
    let s: f64 = (0..N)
        .map(|i| (v[i] / (opts.atol + opts.rtol * y[i].abs())).powi(2))
        .sum();
    (s / N as f64).sqrt()
}

/// Starting step following Hairer, Nørsett & Wanner, II.4.
fn initial_step<const N: usize, F>(f: &F, t: f64, y: &[f64; N], f0: &[f64; N], dir: f64, opts: &OdeOptions) -> f64
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let d0 = rms(y, y, opts);
    let d1 = rms(f0, y, opts);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = axpy(y, dir * h0, &[(1.0, f0)]);
    let f1 = f(t + dir * h0, &y1);
    let df: [f64; N] = std::array::from_fn(|i| f1[i] - f0[i]);
    let d2 = rms(&df, y, opts) / h0;
    let m = d1.max(d2);
    let h1 = if m <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / m).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

/// Hyperplane `y[component] = value`, crossed with `sign(dy/dt) = direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Section {
    pub component: usize,
    pub value: f64,
    pub direction: f64,
}

/// The first section crossing after the start time.
#[derive(Debug, Clone)]
pub struct SectionHit<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub solution: Solution<N>,
}

enum Stop {
    Time(f64),
    Section(Section, f64),
}

fn drive<const N: usize, F>(
    f: &F,
    t0: f64,
    y0: [f64; N],
    stop: Stop,
    opts: &OdeOptions,
) -> Result<(Solution<N>, Option<(f64, [f64; N])>)>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let t_limit = match stop {
        Stop::Time(t) | Stop::Section(_, t) => t,
    };
    if !(t_limit.is_finite() && t0.is_finite()) {
        return Err(Error::Integrator("non-finite time bounds".into()));
    }
    let mut sol = Solution {
        t0,
        t_end: t0,
        y_end: y0,
        segments: Vec::new(),
        steps: 0,
    };
    if t_limit == t0 {
        return Ok((sol, None));
    }
    let dir = (t_limit - t0).signum();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut h = dir * initial_step(f, t, &y, &k1, dir, opts);
    let h_max = if opts.h_max > 0.0 { opts.h_max } else { f64::INFINITY };
    let mut rejected_last = false;

    while dir * (t_limit - t) > 0.0 {
        if sol.steps >= opts.max_steps {
            return Err(Error::Integrator(format!(
                "step budget {} exhausted at t = {t}",
                opts.max_steps
            )));
        }
        let mut last = false;
        if h.abs() > h_max {
            h = dir * h_max;
        }
        if dir * (t + h - t_limit) >= 0.0 {
            h = t_limit - t;
            last = true;
        }
        if h.abs() <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::Integrator(format!("step size underflow at t = {t}")));
        }
        let s = rk_step(f, t, &y, &k1, h, opts);
        if !s.err.is_finite() || s.y.iter().any(|v| !v.is_finite()) {
            h *= 0.25;
            rejected_last = true;
            sol.steps += 1;
            continue;
        }
        let fac = (0.9 * s.err.powf(-0.2)).clamp(0.2, 10.0);
        if s.err > 1.0 {
            h *= fac.min(1.0);
            rejected_last = true;
            sol.steps += 1;
            continue;
        }
        sol.steps += 1;
        let seg = dense(t, h, &y, &s);
        let t_new = if last { t_limit } else { t + h };

        if let Stop::Section(sec, _) = stop {
            let g0 = y[sec.component] - sec.value;
            let g1 = s.y[sec.component] - sec.value;
            let crosses = if sec.direction >= 0.0 {
                g0 < 0.0 && g1 >= 0.0
            } else {
                g0 > 0.0 && g1 <= 0.0
            };
            if crosses {
                let hit = locate(f, &seg, t, &y, &k1, h, g0, sec, opts);
                sol.segments.push(seg);
                sol.t_end = t_new;
                sol.y_end = s.y;
                return Ok((sol, Some(hit)));
            }
        }

        sol.segments.push(seg);
        t = t_new;
        y = s.y;
        k1 = s.k[6];
        sol.t_end = t;
        sol.y_end = y;
        h *= if rejected_last { fac.min(1.0) } else { fac };
        rejected_last = false;
    }
    Ok((sol, None))
}

/// Bisection on the dense output to `1e-12` in time, a fresh step from the
/// step start to the located time, then one Newton step on the event.
#[allow(clippy::too_many_arguments)]
fn locate<const N: usize, F>(
    f: &F,
    seg: &Segment<N>,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
    g0: f64,
    sec: Section,
    opts: &OdeOptions,
) -> (f64, [f64; N])
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let g = |tt: f64| seg.eval(tt)[sec.component] - sec.value;
    let (mut lo, mut hi) = (t, t + h);
    let lo_sign = g0.signum();
    while (hi - lo).abs() > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if g(mid).signum() == lo_sign && g(mid) != 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t_star = 0.5 * (lo + hi);
    let y_star = if t_star == t {
        *y
    } else {
        rk_step(f, t, y, k1, t_star - t, opts).y
    };
    let rate = f(t_star, &y_star);
    let vel = rate[sec.component];
    if vel == 0.0 {
        return (t_star, y_star);
    }
    let dt = -(y_star[sec.component] - sec.value) / vel;
    let mut y_new: [f64; N] = std::array::from_fn(|i| y_star[i] + dt * rate[i]);
    y_new[sec.component] = sec.value;
    (t_star + dt, y_new)
}

/// Integrate `y' = f(t, y)` from `t0` to `t_end`.
pub fn integrate<const N: usize, F>(f: &F, t0: f64, y0: [f64; N], t_end: f64, opts: &OdeOptions) -> Result<Solution<N>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    drive(f, t0, y0, Stop::Time(t_end), opts).map(|(s, _)| s)
}

/// Integrate until the first crossing of `section` strictly after `t0`.
///
/// Fails with `NoReturn` when `t_max` is reached first.
pub fn integrate_to_section<const N: usize, F>(
    f: &F,
    t0: f64,
    y0: [f64; N],
    t_max: f64,
    section: Section,
    opts: &OdeOptions,
) -> Result<SectionHit<N>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let (solution, hit) = drive(f, t0, y0, Stop::Section(section, t_max), opts)?;
    match hit {
        Some((t, y)) => Ok(SectionHit { t, y, solution }),
        None => Err(Error::NoReturn { budget: t_max - t0 }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn oscillator(_t: f64, y: &[f64; 2]) -> [f64; 2] {
        [y[1], -y[0]]
    }

    #[test]
    fn harmonic_full_period() {
        let s = integrate(&oscillator, 0.0, [1.0, 0.0], 2.0 * PI, &OdeOptions::default()).unwrap();
        assert!((s.y_end[0] - 1.0).abs() < 1e-9);
        assert!(s.y_end[1].abs() < 1e-9);
        for k in 0..50 {
            let t = 2.0 * PI * k as f64 / 50.0;
            let v = s.eval(t);
            assert!((v[0] - t.cos()).abs() < 1e-9, "t = {t}");
            assert!((v[1] + t.sin()).abs() < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn backward_integration() {
        let s = integrate(&oscillator, 1.0, [1f64.cos(), -1f64.sin()], 0.0, &OdeOptions::default()).unwrap();
        assert!((s.y_end[0] - 1.0).abs() < 1e-10);
        assert!(s.y_end[1].abs() < 1e-10);
    }

    #[test]
    fn section_return_time() {
        // y = sin t, upward crossing of y = 0 after t = 0 is at 2 pi
        let sec = Section {
            component: 0,
            value: 0.0,
            direction: 1.0,
        };
        let hit = integrate_to_section(&oscillator, 0.0, [0.0, 1.0], 10.0, sec, &OdeOptions::default()).unwrap();
        assert!((hit.t - 2.0 * PI).abs() < 1e-10, "{}", hit.t);
        assert_eq!(hit.y[0], 0.0);
        assert!((hit.y[1] - 1.0).abs() < 1e-10);
        let down = Section { direction: -1.0, ..sec };
        let hit = integrate_to_section(&oscillator, 0.0, [0.0, 1.0], 10.0, down, &OdeOptions::default()).unwrap();
        assert!((hit.t - PI).abs() < 1e-10);
    }

    #[test]
    fn no_return_within_budget() {
        let sec = Section {
            component: 0,
            value: 0.0,
            direction: 1.0,
        };
        assert!(matches!(
            integrate_to_section(&oscillator, 0.0, [0.0, 1.0], 5.0, sec, &OdeOptions::default()),
            Err(Error::NoReturn { .. })
        ));
    }

    #[test]
    fn exponential_growth_accuracy() {
        let s = integrate(&|_t, y: &[f64; 1]| [y[0]], 0.0, [1.0], 3.0, &OdeOptions::default()).unwrap();
        assert!((s.y_end[0] / 3f64.exp() - 1.0).abs() < 1e-10);
    }
}
