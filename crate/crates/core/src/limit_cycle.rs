//! Fixed-step RK4 integration, Poincaré-section period detection and
//! uniform sampling of the blended limit cycle.
//!
//! The section is {x2 = 0, x1 > 0} crossed downward (x2 goes from positive to
//! non-positive). Crossing instants are refined by bisection on the RK4
//! sub-step from the bracketing step's start, so the refined state is what the
//! integrator would produce with a shortened final step.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::ceil;
use nalgebra::Vector2;

use crate::dynamics::{blended_field, vdp_field, LocalState, OscillatorSet};
use crate::error::{domain, Error, Result};

/// Reusable RK4 workspace for states of fixed dimension.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self { k1: vec![0.0; dim], k2: vec![0.0; dim], k3: vec![0.0; dim], k4: vec![0.0; dim], tmp: vec![0.0; dim] }
    }

    /// Advances `x` in place from `t` by `h`.
    pub fn step<F>(&mut self, rhs: &mut F, t: f64, x: &mut [f64], h: f64)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = x.len();
        rhs(t, x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        rhs(t + 0.5 * h, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        rhs(t + 0.5 * h, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        rhs(t + h, &self.tmp, &mut self.k4);
        for i in 0..n {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Time-stamped states.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }
}

/// Classical RK4 with step `dt`; the last step is shortened to land on `t_end`.
pub fn integrate<F>(mut rhs: F, x0: &[f64], t_start: f64, t_end: f64, dt: f64) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(domain(format!("step must be positive and finite, got {dt}")));
    }
    if !(t_end > t_start) {
        return Err(domain(format!("empty time span [{t_start}, {t_end}]")));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(domain("initial state has non-finite entries"));
    }
    let steps = ceil((t_end - t_start) / dt) as usize;
    let mut rk = Rk4::new(x0.len());
    let mut x = x0.to_vec();
    let mut traj = Trajectory { times: Vec::with_capacity(steps + 1), states: Vec::with_capacity(steps + 1) };
    traj.times.push(t_start);
    traj.states.push(x.clone());
    for k in 0..steps {
        let t = t_start + k as f64 * dt;
        let t_next = if k + 1 == steps { t_end } else { t_start + (k + 1) as f64 * dt };
        let h = t_next - t;
        if h <= 0.0 {
            break;
        }
        rk.step(&mut rhs, t, &mut x, h);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Blowup { time: t_next });
        }
        traj.times.push(t_next);
        traj.states.push(x.clone());
    }
    Ok(traj)
}

/// True when a step from `before` to `after` crosses the section downward.
#[inline]
pub(crate) fn crosses_section(before: &[f64], after: &[f64]) -> bool {
    before[1] > 0.0 && after[1] <= 0.0 && (before[0] > 0.0 || after[0] > 0.0)
}

const BISECTION_ITERS: usize = 60;

/// Locates the section crossing inside a step of length `h` starting at `x`.
/// Returns the sub-step τ and the state reached after τ.
pub(crate) fn refine_crossing<F>(rk: &mut Rk4, rhs: &mut F, t: f64, x: &[f64], h: f64) -> (f64, Vec<f64>)
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut lo = 0.0;
    let mut hi = h;
    let mut probe = x.to_vec();
    let mut hi_state = {
        probe.copy_from_slice(x);
        rk.step(rhs, t, &mut probe, h);
        probe.clone()
    };
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        probe.copy_from_slice(x);
        rk.step(rhs, t, &mut probe, mid);
        if probe[1] > 0.0 {
            lo = mid;
        } else {
            hi = mid;
            hi_state.copy_from_slice(&probe);
        }
    }
    (hi, hi_state)
}

/// Settling and period-search parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CycleSearch {
    /// Time spent relaxing onto the cycle before crossings are recorded.
    pub settle_time: f64,
    /// Required agreement of successive period estimates.
    pub tol: f64,
    /// Integration step.
    pub dt: f64,
    /// Initial state of the flow.
    pub x0: [f64; 2],
    /// Time allowed for the crossing search after settling.
    pub search_time: f64,
}

impl Default for CycleSearch {
    fn default() -> Self {
        Self { settle_time: 100.0, tol: 1e-6, dt: 1e-3, x0: [2.0, 0.0], search_time: 400.0 }
    }
}

/// Anchor state s_0 on the section and the period T of the cycle through it.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CycleAnchor {
    pub anchor: [f64; 2],
    pub period: f64,
}

/// Period detection for any planar autonomous field.
pub fn find_cycle_of<F>(mut field: F, search: &CycleSearch) -> Result<CycleAnchor>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let CycleSearch { settle_time, tol, dt, x0, search_time } = *search;
    if !(settle_time >= 0.0 && tol > 0.0 && dt > 0.0 && search_time > 0.0) {
        return Err(domain("cycle search needs settle_time >= 0 and positive tol, dt, search_time"));
    }
    if x0 == [0.0, 0.0] {
        return Err(domain("the origin is an equilibrium; pick a nonzero initial state"));
    }
    let mut rhs = |_t: f64, s: &[f64], out: &mut [f64]| field(s, out);
    let mut rk = Rk4::new(2);
    let mut x = x0.to_vec();

    let settle_steps = ceil(settle_time / dt) as usize;
    for k in 0..settle_steps {
        rk.step(&mut rhs, k as f64 * dt, &mut x, dt);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Blowup { time: (k + 1) as f64 * dt });
        }
    }

    let mut crossings: Vec<(f64, [f64; 2])> = Vec::new();
    let mut periods: Vec<f64> = Vec::new();
    let search_steps = ceil(search_time / dt) as usize;
    let mut prev = x.clone();
    for k in 0..search_steps {
        let t = k as f64 * dt;
        prev.copy_from_slice(&x);
        rk.step(&mut rhs, t, &mut x, dt);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Blowup { time: settle_time + t + dt });
        }
        if crosses_section(&prev, &x) {
            let (tau, s) = refine_crossing(&mut rk, &mut rhs, t, &prev, dt);
            if s[0] <= 0.0 {
                continue;
            }
            crossings.push((t + tau, [s[0], s[1]]));
            if let [.., (a, _), (b, _)] = crossings.as_slice() {
                periods.push(b - a);
            }
            if let [.., p, q] = periods.as_slice() {
                if (p - q).abs() < tol {
                    let (_, anchor) = *crossings.last().expect("crossing recorded");
                    return Ok(CycleAnchor { anchor, period: *q });
                }
            }
        }
    }
    match periods.as_slice() {
        [.., p, q] => Err(Error::NonConvergence { prev: *p, last: *q }),
        _ => Err(Error::NoCycle { budget: search_time }),
    }
}

/// Limit cycle of the blended dynamics of `osc`.
pub fn find_limit_cycle(osc: &OscillatorSet, search: &CycleSearch) -> Result<CycleAnchor> {
    find_cycle_of(|s, out| blended_field(osc, s, out), search)
}

/// Limit cycle of a single oscillator with parameter `mu`.
pub fn find_single_cycle(mu: f64, search: &CycleSearch) -> Result<CycleAnchor> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(domain(format!("damping parameter must be > 0, got {mu}")));
    }
    find_cycle_of(
        |s, out| {
            let [a, b] = vdp_field(s[0], s[1], mu);
            out[0] = a;
            out[1] = b;
        },
        search,
    )
}

/// Two-pass search: coarse settle at `dt = 1e-2`, then refinement at
/// `dt = T/4000` starting from the coarse anchor.
pub fn find_blended_cycle(osc: &OscillatorSet) -> Result<CycleAnchor> {
    let coarse = find_limit_cycle(osc, &CycleSearch { dt: 1e-2, tol: 1e-3, ..CycleSearch::default() })?;
    let fine = CycleSearch {
        settle_time: 2.0 * coarse.period,
        tol: 1e-8,
        dt: coarse.period / 4000.0,
        x0: coarse.anchor,
        search_time: 20.0 * coarse.period,
    };
    find_limit_cycle(osc, &fine)
}

/// The blended cycle sampled at f equally spaced instants t_l = l·Δt.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CycleSample {
    /// Period T.
    pub period: f64,
    /// Sampling interval Δt = T / f.
    pub interval: f64,
    /// Number of samples f.
    pub count: usize,
    /// Sample times, t_0 = 0.
    pub times: Vec<f64>,
    /// Cycle states at the sample times; `states[0]` is the anchor.
    pub states: Vec<[f64; 2]>,
    pub anchor: [f64; 2],
    /// Integration sub-steps per sampling interval used to build `states`.
    pub substeps: usize,
}

impl CycleSample {
    pub fn state(&self, l: usize) -> LocalState {
        let s = self.states[l];
        Vector2::new(s[0], s[1])
    }
}

/// Number of RK4 sub-steps so that `interval / substeps <= dt`.
pub fn substeps_for(interval: f64, dt: f64) -> usize {
    ceil((interval / dt) * (1.0 - 1e-12)).max(1.0) as usize
}

/// Flows `anchor` through one period and records f uniformly spaced states.
pub fn sample_cycle(anchor: CycleAnchor, count: usize, osc: &OscillatorSet, dt: f64) -> Result<CycleSample> {
    if count < 2 {
        return Err(domain(format!("need at least 2 samples per period, got {count}")));
    }
    if !(dt > 0.0 && anchor.period > 0.0) {
        return Err(domain("period and step must be positive"));
    }
    let interval = anchor.period / count as f64;
    let substeps = substeps_for(interval, dt);
    let h = interval / substeps as f64;
    let mut rhs = |_t: f64, s: &[f64], out: &mut [f64]| blended_field(osc, s, out);
    let mut rk = Rk4::new(2);
    let mut x = anchor.anchor.to_vec();
    let mut states = Vec::with_capacity(count);
    let mut times = Vec::with_capacity(count);
    for l in 0..count {
        times.push(l as f64 * interval);
        states.push([x[0], x[1]]);
        for k in 0..substeps {
            rk.step(&mut rhs, l as f64 * interval + k as f64 * h, &mut x, h);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Blowup { time: (l + 1) as f64 * interval });
        }
    }
    Ok(CycleSample { period: anchor.period, interval, count, times, states, anchor: anchor.anchor, substeps })
}

#[cfg(test)]
/// Flows a planar state under the blended field for `steps` steps of `h`.
fn flow_blended(osc: &OscillatorSet, s: [f64; 2], h: f64, steps: usize) -> [f64; 2] {
    let mut rhs = |_t: f64, s: &[f64], out: &mut [f64]| blended_field(osc, s, out);
    let mut rk = Rk4::new(2);
    let mut x = s.to_vec();
    for k in 0..steps {
        rk.step(&mut rhs, k as f64 * h, &mut x, h);
    }
    [x[0], x[1]]
}
