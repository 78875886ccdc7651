//! Online part of the method: strong static coupling until synchronized at
//! the anchor, then the periodic gain schedule under zero-order hold, with an
//! optional fallback to strong coupling when the tracking error grows.
//!
//! All simulation runs on the nonlinear coupled network. Integration uses
//! RK4 with `substeps` steps per sampling interval so that hold switches land
//! on grid points.
//!
//! The reference s(t) is the blended flow. During phase one (and every
//! re-sync) it starts from the node mean of the current state; during the
//! scheduled phase it is reset to the anchor at the start of every period, so
//! it equals the blended flow of s_0 at (t − t_switch) mod T.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use libm::{ceil, floor, hypot};

use crate::dynamics::{blended_field, coupled_field, mean_local, vdp_field, Coupling, LocalState, OscillatorSet};
use crate::error::{domain, Error, Result};
use crate::gain_opt::{optimize_schedule, sync_metric, value_function, GainSchedule, SolverOptions, SyncMetric};
use crate::graph::{CouplingGraph, DiagGain, EdgeGainSet};
use crate::limit_cycle::{crosses_section, find_blended_cycle, refine_crossing, sample_cycle, CycleSample, Rk4};

/// Threshold-triggered fallback to strong coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HybridOptions {
    /// Largest tolerated max_{i<j} ‖x_i − x_j‖ at a sample time.
    pub error_threshold: f64,
    /// Consensus tolerance max_i ‖x_i − x̄‖ that ends a re-sync episode.
    pub resync_epsilon: f64,
}

/// When a strong-coupling episode counts as synchronized. Both tests are
/// evaluated only at downward crossings of the anchor section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SyncTest {
    /// The blended reference s, started at the node mean, crosses within ε of
    /// s_0 and every ‖x_i − s‖ ≤ ε.
    #[default]
    Reference,
    /// The node mean x̄ crosses within ε of s_0 and every ‖x_i − x̄‖ ≤ ε.
    Consensus,
}

/// Everything a run needs besides the offline artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub osc: OscillatorSet,
    pub graph: CouplingGraph,
    /// x_i(0); `None` selects [`default_initial_states`].
    pub initial: Option<Vec<LocalState>>,
    pub k_c: f64,
    pub epsilon: f64,
    /// Samples per period f.
    pub samples: usize,
    pub omega: f64,
    /// Target integration step; defaults to T/4000.
    pub dt: Option<f64>,
    /// Duration of the scheduled phase, in periods.
    pub n_periods: usize,
    pub hybrid: Option<HybridOptions>,
    pub solver: SolverOptions,
    /// Phase-one time budget in periods.
    pub sync_budget_periods: f64,
    /// End test of phase one. Re-sync episodes always use
    /// [`SyncTest::Consensus`].
    pub sync_test: SyncTest,
}

impl RunConfig {
    pub const DEFAULT_EPSILON: f64 = 0.1;
    pub const DEFAULT_OMEGA: f64 = 0.01;
    pub const DEFAULT_ERROR_THRESHOLD: f64 = 0.5;

    /// Defaults: k_c = 200, ε = 0.1, f = 400, ω = 0.01, 20 periods, no hybrid.
    pub fn new(osc: OscillatorSet, graph: CouplingGraph) -> Self {
        Self {
            osc,
            graph,
            initial: None,
            k_c: 200.0,
            epsilon: Self::DEFAULT_EPSILON,
            samples: 400,
            omega: Self::DEFAULT_OMEGA,
            dt: None,
            n_periods: 20,
            hybrid: None,
            solver: SolverOptions::default(),
            sync_budget_periods: 50.0,
            sync_test: SyncTest::Reference,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.osc.len();
        if self.graph.node_count() != n {
            return Err(domain(format!("{n} oscillators but graph has {} nodes", self.graph.node_count())));
        }
        if !(self.k_c > 0.0 && self.k_c.is_finite()) {
            return Err(domain("k_c must be positive"));
        }
        if !(self.epsilon > 0.0) {
            return Err(domain("epsilon must be positive"));
        }
        if self.samples < 2 {
            return Err(domain("need at least 2 samples per period"));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(domain("omega must be finite and >= 0"));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(domain("dt must be positive"));
            }
        }
        if !(self.sync_budget_periods > 0.0) {
            return Err(domain("sync budget must be positive"));
        }
        if let Some(init) = &self.initial {
            if init.len() != n {
                return Err(domain(format!("{} initial states for {n} oscillators", init.len())));
            }
            if init.iter().any(|s| !(s[0].is_finite() && s[1].is_finite())) {
                return Err(domain("initial states must be finite"));
            }
            if init.iter().all(|s| s[0] == 0.0 && s[1] == 0.0) {
                return Err(domain("not all initial states may be zero"));
            }
        }
        if let Some(h) = &self.hybrid {
            if !(h.error_threshold > 0.0 && h.resync_epsilon > 0.0) {
                return Err(domain("hybrid thresholds must be positive"));
            }
        }
        Ok(())
    }
}

/// Each oscillator relaxed onto its own cycle from [2, 0].
pub fn default_initial_states(osc: &OscillatorSet) -> Vec<LocalState> {
    const SETTLE: f64 = 50.0;
    const DT: f64 = 1e-3;
    osc.mu()
        .iter()
        .map(|&mu| {
            let mut rhs = |_t: f64, s: &[f64], out: &mut [f64]| {
                let [a, b] = vdp_field(s[0], s[1], mu);
                out[0] = a;
                out[1] = b;
            };
            let mut rk = Rk4::new(2);
            let mut x = [2.0, 0.0];
            let steps = (SETTLE / DT) as usize;
            for k in 0..steps {
                rk.step(&mut rhs, k as f64 * DT, &mut x, DT);
            }
            LocalState::new(x[0], x[1])
        })
        .collect()
}

/// What drives the network during a trace row's interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Mode {
    Phase1,
    Phase2,
    Resync,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Phase1 => "phase1",
            Mode::Phase2 => "phase2",
            Mode::Resync => "resync",
        }
    }
}

/// One recorded instant.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRow {
    pub time: f64,
    pub mode: Mode,
    pub state: Vec<f64>,
    pub reference: [f64; 2],
    /// Gains active from this instant on.
    pub gains: Vec<DiagGain>,
    /// Schedule index of `gains` in phase two.
    pub sample: Option<usize>,
    pub v: f64,
    /// max_{i<j} ‖x_i − x_j‖.
    pub max_dev: f64,
    /// max_i ‖x_i − s‖.
    pub ref_dev: f64,
    /// Largest max_dev over the integration grid since the previous row.
    pub max_dev_between: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimulationTrace {
    pub node_count: usize,
    pub edges: Vec<(usize, usize)>,
    pub period: f64,
    pub interval: f64,
    /// First switch to the schedule, if reached.
    pub t_switch: Option<f64>,
    pub rows: Vec<TraceRow>,
}

/// Aggregates of a run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunSummary {
    pub period: f64,
    pub t_switch: Option<f64>,
    pub t_end: f64,
    /// Per edge, time average after the switch of the mean diagonal entry.
    pub per_edge_avg_gain: Vec<f64>,
    pub overall_avg_gain: Option<f64>,
    /// max pairwise deviation per period after the switch.
    pub max_dev_per_period: Vec<f64>,
    pub max_dev_after_switch: Option<f64>,
    /// Same, over every integration step instead of sample times only.
    pub max_dev_dense_after_switch: Option<f64>,
    pub max_ref_dev_after_switch: Option<f64>,
    /// V at the first row of every period after the switch.
    pub v_at_period_starts: Vec<f64>,
    /// Largest active gain over all edges, per sample of the first period.
    pub largest_gain_first_period: Vec<f64>,
    pub resync_events: usize,
    /// Share of post-switch time spent under static coupling.
    pub strong_coupling_fraction: f64,
}

fn pairwise_max(x: &[f64]) -> f64 {
    let n = x.len() / 2;
    let mut m: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            m = m.max(hypot(x[2 * i] - x[2 * j], x[2 * i + 1] - x[2 * j + 1]));
        }
    }
    m
}

fn reference_max(x: &[f64], s: &[f64]) -> f64 {
    (0..x.len() / 2).fold(0.0f64, |m, i| m.max(hypot(x[2 * i] - s[0], x[2 * i + 1] - s[1])))
}

enum SyncEnd {
    Synced(f64),
    Horizon,
}

enum FollowEnd {
    Finished,
    Breach(f64),
}

/// Integration state shared by all phases of one run.
struct Engine<'a> {
    osc: &'a OscillatorSet,
    graph: &'a CouplingGraph,
    metric: SyncMetric,
    anchor: [f64; 2],
    interval: f64,
    substeps: usize,
    rk_x: Rk4,
    rk_s: Rk4,
    trace: SimulationTrace,
    running_max: f64,
}

impl<'a> Engine<'a> {
    fn new(osc: &'a OscillatorSet, graph: &'a CouplingGraph, cycle: &CycleSample, substeps: usize) -> Result<Self> {
        let n = osc.len();
        Ok(Self {
            osc,
            graph,
            metric: sync_metric(n)?,
            anchor: cycle.anchor,
            interval: cycle.period / cycle.count as f64,
            substeps,
            rk_x: Rk4::new(2 * n),
            rk_s: Rk4::new(2),
            trace: SimulationTrace {
                node_count: n,
                edges: graph.edges().to_vec(),
                period: cycle.period,
                interval: cycle.period / cycle.count as f64,
                t_switch: None,
                rows: Vec::new(),
            },
            running_max: 0.0,
        })
    }

    fn h(&self) -> f64 {
        self.interval / self.substeps as f64
    }

    fn record(&mut self, time: f64, mode: Mode, x: &[f64], s: &[f64], gains: Vec<DiagGain>, sample: Option<usize>) {
        let v = value_function(x, &self.metric).unwrap_or(f64::NAN);
        let max_dev = pairwise_max(x);
        let max_dev_between = self.running_max.max(max_dev);
        self.running_max = 0.0;
        self.trace.rows.push(TraceRow {
            time,
            mode,
            state: x.to_vec(),
            reference: [s[0], s[1]],
            gains,
            sample,
            v,
            max_dev,
            ref_dev: reference_max(x, s),
            max_dev_between,
        });
    }

    fn step_pair(&mut self, coupling: Coupling<'_>, t: f64, x: &mut [f64], s: &mut [f64], h: f64) {
        let (osc, graph) = (self.osc, self.graph);
        let mut fx = |_t: f64, y: &[f64], out: &mut [f64]| coupled_field(osc, graph, coupling, y, out);
        self.rk_x.step(&mut fx, t, x, h);
        let mut fs = |_t: f64, y: &[f64], out: &mut [f64]| blended_field(osc, y, out);
        self.rk_s.step(&mut fs, t, s, h);
        self.running_max = self.running_max.max(pairwise_max(x));
    }

    /// Sub-step τ ∈ (0, h] at which the node mean crosses the section, and
    /// the network state there. `x` is the state at the start of the step.
    fn refine_mean_crossing(&mut self, k_c: f64, t: f64, x: &[f64], h: f64) -> (f64, Vec<f64>) {
        let (osc, graph) = (self.osc, self.graph);
        let mut fx = |_t: f64, y: &[f64], out: &mut [f64]| coupled_field(osc, graph, Coupling::Static(k_c), y, out);
        let (mut lo, mut hi) = (0.0, h);
        let mut probe = x.to_vec();
        self.rk_x.step(&mut fx, t, &mut probe, h);
        let mut hi_state = probe.clone();
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            probe.copy_from_slice(x);
            self.rk_x.step(&mut fx, t, &mut probe, mid);
            if mean_local(&probe)[1] > 0.0 {
                lo = mid;
            } else {
                hi = mid;
                hi_state.copy_from_slice(&probe);
            }
        }
        (hi, hi_state)
    }

    /// Static coupling k_c from `t0` until `test` passes, or until `horizon`.
    #[allow(clippy::too_many_arguments)]
    fn synchronize(
        &mut self,
        x: &mut [f64],
        t0: f64,
        k_c: f64,
        eps: f64,
        test: SyncTest,
        mode: Mode,
        budget: f64,
        horizon: f64,
    ) -> Result<SyncEnd> {
        let mut s = {
            let m = mean_local(x);
            vec![m[0], m[1]]
        };
        let uniform = vec![[k_c, k_c]; self.graph.edge_count()];
        self.record(t0, mode, x, &s, uniform.clone(), None);
        let h = self.h();
        let anchor = self.anchor;
        let near_anchor = |c: &[f64]| c[0] > 0.0 && hypot(c[0] - anchor[0], c[1] - anchor[1]) <= eps;
        let (mut px, mut ps) = (x.to_vec(), s.clone());
        let mut k: usize = 0;
        loop {
            let t = t0 + k as f64 * h;
            if t - t0 > budget {
                return Err(Error::PhaseOneTimeout { budget });
            }
            px.copy_from_slice(x);
            ps.copy_from_slice(&s);
            self.step_pair(Coupling::Static(k_c), t, x, &mut s, h);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Blowup { time: t + h });
            }
            match test {
                SyncTest::Reference if crosses_section(&ps, &s) => {
                    let osc = self.osc;
                    let mut fs = |_t: f64, y: &[f64], out: &mut [f64]| blended_field(osc, y, out);
                    let (tau, sc) = refine_crossing(&mut self.rk_s, &mut fs, t, &ps, h);
                    if near_anchor(&sc) {
                        let xc = self.refine_to(k_c, t, &px, tau);
                        if reference_max(&xc, &sc) <= eps {
                            x.copy_from_slice(&xc);
                            return Ok(SyncEnd::Synced(t + tau));
                        }
                    }
                }
                SyncTest::Consensus => {
                    let (m0, m1) = (mean_local(&px), mean_local(x));
                    if crosses_section(m0.as_slice(), m1.as_slice()) {
                        let (tau, xc) = self.refine_mean_crossing(k_c, t, &px, h);
                        let mc = mean_local(&xc);
                        if near_anchor(mc.as_slice()) && reference_max(&xc, mc.as_slice()) <= eps {
                            x.copy_from_slice(&xc);
                            return Ok(SyncEnd::Synced(t + tau));
                        }
                    }
                }
                _ => {}
            }
            k += 1;
            let t_next = t0 + k as f64 * h;
            if k.is_multiple_of(self.substeps) {
                self.record(t_next, mode, x, &s, uniform.clone(), None);
            }
            if t_next >= horizon {
                if !k.is_multiple_of(self.substeps) {
                    self.record(t_next, mode, x, &s, uniform.clone(), None);
                }
                return Ok(SyncEnd::Horizon);
            }
        }
    }

    /// Network state after a partial static-coupling step of `tau` from `x`.
    fn refine_to(&mut self, k_c: f64, t: f64, x: &[f64], tau: f64) -> Vec<f64> {
        let (osc, graph) = (self.osc, self.graph);
        let mut fx = |_t: f64, y: &[f64], out: &mut [f64]| coupled_field(osc, graph, Coupling::Static(k_c), y, out);
        let mut xc = x.to_vec();
        self.rk_x.step(&mut fx, t, &mut xc, tau);
        xc
    }

    /// Applies the schedule from sample 0 at `t_start` until `t_end`.
    fn follow(
        &mut self,
        x: &mut [f64],
        schedule: &GainSchedule,
        t_start: f64,
        t_end: f64,
        breach: Option<f64>,
    ) -> Result<FollowEnd> {
        let f = schedule.len();
        let total = ceil((t_end - t_start) / self.interval - 1e-9).max(0.0) as usize;
        let mut s = self.anchor.to_vec();
        for q in 0..total {
            let l = q % f;
            if l == 0 {
                s.copy_from_slice(&self.anchor);
            }
            let t_l = t_start + q as f64 * self.interval;
            let gains = &schedule.per_sample[l];
            self.record(t_l, Mode::Phase2, x, &s, gains.as_slice().to_vec(), Some(l));
            if let Some(limit) = breach {
                if pairwise_max(x) > limit {
                    // the hold that was about to start never runs
                    self.trace.rows.last_mut().expect("row recorded").mode = Mode::Resync;
                    return Ok(FollowEnd::Breach(t_l));
                }
            }
            let hold = (t_end - t_l).min(self.interval);
            let h = hold / self.substeps as f64;
            for k in 0..self.substeps {
                self.step_pair(Coupling::Scheduled(gains), t_l + k as f64 * h, x, &mut s, h);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { time: t_l + hold });
            }
        }
        let next = total % f;
        let tail = schedule.per_sample[next].as_slice().to_vec();
        let t_final = t_start + total as f64 * self.interval;
        self.record(t_final.min(t_end.max(t_start)), Mode::Phase2, x, &s, tail, Some(next));
        Ok(FollowEnd::Finished)
    }
}

/// Sub-steps per sampling interval: at least 10, fine enough for T/4000 (or
/// the configured step), and inside the RK4 stability region of the stiffest
/// coupling that will be applied.
pub fn substeps_for_run(cfg: &RunConfig, cycle: &CycleSample, schedule: Option<&GainSchedule>) -> usize {
    let interval = cycle.period / cycle.count as f64;
    let target = cfg.dt.unwrap_or(cycle.period / 4000.0);
    let max_gain = schedule.map(|s| s.betas.iter().copied().fold(0.0, f64::max)).unwrap_or(0.0).max(cfg.k_c);
    let max_in_degree = (0..cfg.graph.node_count()).map(|i| cfg.graph.neighbors(i).count()).max().unwrap_or(1);
    let mu_max = cfg.osc.mu().iter().copied().fold(0.0, f64::max);
    let stiffness = 2.0 * max_in_degree as f64 * max_gain + 4.0 * mu_max;
    let dt = target.min(2.0 / stiffness);
    crate::limit_cycle::substeps_for(interval, dt).max(10)
}

/// Offline half: blended cycle, its samples, and the optimized schedule.
pub fn prepare_offline(cfg: &RunConfig) -> Result<GainSchedule> {
    cfg.validate()?;
    let cycle = blended_cycle_sample(&cfg.osc, cfg.samples, cfg.dt)?;
    optimize_schedule(&cycle, &cfg.osc, &cfg.graph, cfg.omega, &cfg.solver)
}

/// Blended cycle sampled at `samples` points, integrated at `dt` (default T/4000).
pub fn blended_cycle_sample(osc: &OscillatorSet, samples: usize, dt: Option<f64>) -> Result<CycleSample> {
    let anchor = find_blended_cycle(osc)?;
    sample_cycle(anchor, samples, osc, dt.unwrap_or(anchor.period / 4000.0))
}

fn initial_state(cfg: &RunConfig) -> Vec<f64> {
    let init = cfg.initial.clone().unwrap_or_else(|| default_initial_states(&cfg.osc));
    init.iter().flat_map(|s| [s[0], s[1]]).collect()
}

/// Phase-one result: the recorded trace, the handoff state and switch time.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOne {
    pub trace: SimulationTrace,
    pub handoff: Vec<f64>,
    pub t_switch: f64,
}

/// Strong static coupling from x(0) until synchronized at the anchor.
pub fn phase_one(cfg: &RunConfig, cycle: &CycleSample) -> Result<PhaseOne> {
    cfg.validate()?;
    let substeps = substeps_for_run(cfg, cycle, None);
    let mut eng = Engine::new(&cfg.osc, &cfg.graph, cycle, substeps)?;
    let mut x = initial_state(cfg);
    let budget = cfg.sync_budget_periods * cycle.period;
    match eng.synchronize(&mut x, 0.0, cfg.k_c, cfg.epsilon, cfg.sync_test, Mode::Phase1, budget, f64::INFINITY)? {
        SyncEnd::Synced(t) => {
            eng.trace.t_switch = Some(t);
            Ok(PhaseOne { trace: eng.trace, handoff: x, t_switch: t })
        }
        SyncEnd::Horizon => unreachable!("infinite horizon"),
    }
}

/// Scheduled coupling from the handoff for `n_periods` periods.
pub fn phase_two(
    handoff: &[f64],
    t_switch: f64,
    schedule: &GainSchedule,
    n_periods: usize,
    osc: &OscillatorSet,
    substeps: usize,
) -> Result<SimulationTrace> {
    schedule.validate()?;
    if handoff.len() != 2 * osc.len() || schedule.graph.node_count() != osc.len() {
        return Err(domain("handoff state, oscillators and schedule disagree in size"));
    }
    let mut eng = Engine::new(osc, &schedule.graph, &schedule.cycle, substeps.max(1))?;
    eng.trace.t_switch = Some(t_switch);
    let mut x = handoff.to_vec();
    let t_end = t_switch + n_periods as f64 * schedule.cycle.period;
    eng.follow(&mut x, schedule, t_switch, t_end, None)?;
    Ok(eng.trace)
}

fn check_schedule_fits(cfg: &RunConfig, schedule: &GainSchedule) -> Result<()> {
    schedule.validate()?;
    if schedule.graph != cfg.graph {
        return Err(domain("schedule was optimized for a different graph"));
    }
    Ok(())
}

/// Phase one then `n_periods` of the given schedule.
pub fn run_two_phase_with(cfg: &RunConfig, schedule: &GainSchedule) -> Result<(SimulationTrace, RunSummary)> {
    cfg.validate()?;
    check_schedule_fits(cfg, schedule)?;
    let cycle = &schedule.cycle;
    let substeps = substeps_for_run(cfg, cycle, Some(schedule));
    let mut eng = Engine::new(&cfg.osc, &cfg.graph, cycle, substeps)?;
    let mut x = initial_state(cfg);
    let budget = cfg.sync_budget_periods * cycle.period;
    let SyncEnd::Synced(t_switch) =
        eng.synchronize(&mut x, 0.0, cfg.k_c, cfg.epsilon, cfg.sync_test, Mode::Phase1, budget, f64::INFINITY)?
    else {
        unreachable!("infinite horizon")
    };
    eng.trace.t_switch = Some(t_switch);
    if cfg.n_periods > 0 {
        let t_end = t_switch + cfg.n_periods as f64 * cycle.period;
        eng.follow(&mut x, schedule, t_switch, t_end, None)?;
    }
    let summary = compute_metrics(&eng.trace, cycle);
    Ok((eng.trace, summary))
}

/// Offline preparation followed by [`run_two_phase_with`].
pub fn run_two_phase(cfg: &RunConfig) -> Result<(SimulationTrace, RunSummary)> {
    let schedule = prepare_offline(cfg)?;
    run_two_phase_with(cfg, &schedule)
}

/// Like [`run_two_phase_with`], but falls back to static coupling whenever the
/// pairwise deviation exceeds the hybrid threshold at a sample time. A
/// fallback lasts until the node mean crosses the section near s_0 with all
/// nodes within `resync_epsilon` of it; the schedule then restarts at sample 0.
///
/// The network mean, not the blended reference, decides the restart: once the
/// gains are finite the synchronized network runs on a cycle whose period
/// differs from T, so its phase drifts away from any restarted reference.
pub fn run_hybrid_with(cfg: &RunConfig, schedule: &GainSchedule) -> Result<(SimulationTrace, RunSummary)> {
    cfg.validate()?;
    check_schedule_fits(cfg, schedule)?;
    let hybrid = cfg.hybrid.ok_or_else(|| domain("hybrid options not set"))?;
    let cycle = &schedule.cycle;
    let substeps = substeps_for_run(cfg, cycle, Some(schedule));
    let mut eng = Engine::new(&cfg.osc, &cfg.graph, cycle, substeps)?;
    let mut x = initial_state(cfg);
    let budget = cfg.sync_budget_periods * cycle.period;
    let SyncEnd::Synced(t_switch) =
        eng.synchronize(&mut x, 0.0, cfg.k_c, cfg.epsilon, cfg.sync_test, Mode::Phase1, budget, f64::INFINITY)?
    else {
        unreachable!("infinite horizon")
    };
    eng.trace.t_switch = Some(t_switch);
    let t_end = t_switch + cfg.n_periods as f64 * cycle.period;
    let mut t = t_switch;
    let threshold = hybrid.error_threshold.is_finite().then_some(hybrid.error_threshold);
    while t < t_end {
        match eng.follow(&mut x, schedule, t, t_end, threshold)? {
            FollowEnd::Finished => break,
            FollowEnd::Breach(tb) => {
                // drop the breach row; synchronize() records the same instant
                let row = eng.trace.rows.pop().expect("breach row");
                debug_assert_eq!(row.time, tb);
                match eng.synchronize(
                    &mut x,
                    tb,
                    cfg.k_c,
                    hybrid.resync_epsilon,
                    SyncTest::Consensus,
                    Mode::Resync,
                    budget,
                    t_end,
                )? {
                    SyncEnd::Synced(ts) => t = ts,
                    SyncEnd::Horizon => break,
                }
            }
        }
    }
    let summary = compute_metrics(&eng.trace, cycle);
    Ok((eng.trace, summary))
}

pub fn run_hybrid(cfg: &RunConfig) -> Result<(SimulationTrace, RunSummary)> {
    let schedule = prepare_offline(cfg)?;
    run_hybrid_with(cfg, &schedule)
}

/// Aggregates a trace; every quantity refers to the time after the first switch.
pub fn compute_metrics(trace: &SimulationTrace, cycle: &CycleSample) -> RunSummary {
    let period = cycle.period;
    let rows = &trace.rows;
    let t_end = rows.last().map_or(0.0, |r| r.time);
    let mut summary = RunSummary {
        period,
        t_switch: trace.t_switch,
        t_end,
        per_edge_avg_gain: Vec::new(),
        overall_avg_gain: None,
        max_dev_per_period: Vec::new(),
        max_dev_after_switch: None,
        max_dev_dense_after_switch: None,
        max_ref_dev_after_switch: None,
        v_at_period_starts: Vec::new(),
        largest_gain_first_period: Vec::new(),
        resync_events: 0,
        strong_coupling_fraction: 0.0,
    };
    let Some(ts) = trace.t_switch else { return summary };
    let start = rows.partition_point(|r| r.time < ts || r.mode == Mode::Phase1);
    let post = &rows[start..];
    if post.len() < 2 {
        return summary;
    }
    let edges = trace.edges.len();
    let mut gain_area = vec![0.0; edges];
    let mut strong = 0.0;
    let mut total = 0.0;
    let mut prev_mode = Mode::Phase2;
    for w in post.windows(2) {
        let dt = w[1].time - w[0].time;
        total += dt;
        if w[0].mode != Mode::Phase2 {
            strong += dt;
        }
        for (area, k) in gain_area.iter_mut().zip(&w[0].gains) {
            *area += dt * 0.5 * (k[0] + k[1]);
        }
    }
    for r in post {
        if r.mode == Mode::Resync && prev_mode == Mode::Phase2 {
            summary.resync_events += 1;
        }
        prev_mode = r.mode;
    }
    if total > 0.0 {
        summary.per_edge_avg_gain = gain_area.iter().map(|a| a / total).collect();
        summary.overall_avg_gain = Some(summary.per_edge_avg_gain.iter().sum::<f64>() / edges.max(1) as f64);
        summary.strong_coupling_fraction = strong / total;
    }
    let mut max_dev = 0.0f64;
    let mut max_ref = 0.0f64;
    for r in post {
        let p = floor((r.time - ts) / period + 1e-9).max(0.0) as usize;
        let p = p.min(floor((t_end - ts) / period - 1e-9).max(0.0) as usize);
        if summary.max_dev_per_period.len() <= p {
            summary.max_dev_per_period.resize(p + 1, 0.0);
            summary.v_at_period_starts.push(r.v);
        }
        summary.max_dev_per_period[p] = summary.max_dev_per_period[p].max(r.max_dev);
        max_dev = max_dev.max(r.max_dev);
        max_ref = max_ref.max(r.ref_dev);
    }
    summary.max_dev_after_switch = Some(max_dev);
    let dense = post[1..].iter().map(|r| r.max_dev_between).fold(post[0].max_dev, f64::max);
    summary.max_dev_dense_after_switch = Some(dense);
    summary.max_ref_dev_after_switch = Some(max_ref);
    summary.largest_gain_first_period = post
        .iter()
        .take(cycle.count)
        .map(|r| r.gains.iter().flat_map(|k| k.iter().copied()).fold(0.0, f64::max))
        .collect();
    summary
}

/// Uniform-gain schedule on the sampled cycle (reference runs, tests).
pub fn uniform_schedule(graph: &CouplingGraph, cycle: &CycleSample, k: f64) -> Result<GainSchedule> {
    GainSchedule::constant(graph.clone(), cycle.clone(), EdgeGainSet::uniform(graph, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn baseline_cfg() -> RunConfig {
        RunConfig::new(OscillatorSet::new(vec![0.5, 3.0, 6.0, 10.0]).unwrap(), CouplingGraph::chain(4).unwrap())
    }

    #[test]
    fn config_validation() {
        let mut cfg = baseline_cfg();
        assert!(cfg.validate().is_ok());
        cfg.initial = Some(vec![LocalState::zeros(); 4]);
        assert!(cfg.validate().is_err());
        cfg.initial = Some(vec![LocalState::new(1.0, 0.0); 3]);
        assert!(cfg.validate().is_err());
        let mut cfg = baseline_cfg();
        cfg.epsilon = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = baseline_cfg();
        cfg.k_c = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_initial_states_are_distinct_and_nonzero() {
        let cfg = baseline_cfg();
        let init = default_initial_states(&cfg.osc);
        assert_eq!(init.len(), 4);
        assert!(init.iter().all(|s| s.norm() > 0.5));
        assert_eq!(init, default_initial_states(&cfg.osc));
    }

    #[test]
    fn homogeneous_identical_start_syncs_at_first_crossing() {
        let osc = OscillatorSet::new(vec![2.0; 4]).unwrap();
        let mut cfg = RunConfig::new(osc.clone(), CouplingGraph::chain(4).unwrap());
        let cycle = blended_cycle_sample(&osc, 100, None).unwrap();
        // start exactly on the cycle, slightly after the anchor
        let start = cycle.state(5);
        cfg.initial = Some(vec![start; 4]);
        let one = phase_one(&cfg, &cycle).unwrap();
        assert!(one.trace.rows.iter().all(|r| r.max_dev == 0.0));
        assert!((one.t_switch - (cycle.period - 5.0 * cycle.interval)).abs() < 1e-3);
    }

    #[test]
    fn zero_gain_static_coupling_times_out() {
        let mut cfg = baseline_cfg();
        let cycle = blended_cycle_sample(&cfg.osc, 100, None).unwrap();
        cfg.k_c = 1e-9;
        cfg.sync_budget_periods = 5.0;
        assert!(matches!(phase_one(&cfg, &cycle), Err(Error::PhaseOneTimeout { .. })));
    }

    #[test]
    fn metrics_of_uniform_schedule() {
        let mut cfg = baseline_cfg();
        cfg.samples = 100;
        cfg.n_periods = 2;
        let cycle = blended_cycle_sample(&cfg.osc, 100, None).unwrap();
        let sched = uniform_schedule(&cfg.graph, &cycle, 200.0).unwrap();
        let (trace, summary) = run_two_phase_with(&cfg, &sched).unwrap();
        assert!((summary.overall_avg_gain.unwrap() - 200.0).abs() < 1e-9);
        assert_eq!(summary.max_dev_per_period.len(), 2);
        assert_eq!(summary.resync_events, 0);
        assert!(trace.rows.windows(2).all(|w| w[1].time > w[0].time));
        let ts = summary.t_switch.unwrap();
        assert!((summary.t_end - ts - 2.0 * cycle.period).abs() < 1e-9);
    }

    #[test]
    fn consensus_trace_has_zero_metrics() {
        let osc = OscillatorSet::new(vec![1.0; 3]).unwrap();
        let mut cfg = RunConfig::new(osc.clone(), CouplingGraph::complete(3).unwrap());
        let cycle = blended_cycle_sample(&osc, 50, None).unwrap();
        cfg.initial = Some(vec![cycle.state(0); 3]);
        cfg.samples = 50;
        cfg.n_periods = 1;
        let sched = uniform_schedule(&cfg.graph, &cycle, 0.0).unwrap();
        let (_, summary) = run_two_phase_with(&cfg, &sched).unwrap();
        assert_eq!(summary.max_dev_after_switch, Some(0.0));
        assert!(summary.v_at_period_starts.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_periods_is_phase_one_only() {
        let mut cfg = baseline_cfg();
        cfg.samples = 100;
        cfg.n_periods = 0;
        let cycle = blended_cycle_sample(&cfg.osc, 100, None).unwrap();
        let sched = uniform_schedule(&cfg.graph, &cycle, 200.0).unwrap();
        let (trace, summary) = run_two_phase_with(&cfg, &sched).unwrap();
        assert!(trace.rows.iter().all(|r| r.mode == Mode::Phase1));
        assert!(summary.overall_avg_gain.is_none());
    }

    #[test]
    fn infinite_threshold_hybrid_equals_two_phase() {
        let mut cfg = baseline_cfg();
        cfg.samples = 100;
        cfg.n_periods = 2;
        let cycle = blended_cycle_sample(&cfg.osc, 100, None).unwrap();
        let sched = uniform_schedule(&cfg.graph, &cycle, 50.0).unwrap();
        let plain = run_two_phase_with(&cfg, &sched).unwrap();
        cfg.hybrid = Some(HybridOptions { error_threshold: f64::INFINITY, resync_epsilon: 0.1 });
        let hybrid = run_hybrid_with(&cfg, &sched).unwrap();
        assert_eq!(plain, hybrid);
    }

    #[test]
    fn hybrid_segments_alternate_and_resyncs_end_on_the_section() {
        let mut cfg = baseline_cfg();
        cfg.samples = 100;
        cfg.n_periods = 4;
        cfg.hybrid = Some(HybridOptions { error_threshold: 0.5, resync_epsilon: 0.1 });
        let cycle = blended_cycle_sample(&cfg.osc, 100, None).unwrap();
        let sched = uniform_schedule(&cfg.graph, &cycle, 0.0).unwrap();
        let (trace, summary) = run_hybrid_with(&cfg, &sched).unwrap();
        assert!(summary.resync_events >= 2);
        assert!(summary.strong_coupling_fraction > 0.0 && summary.strong_coupling_fraction < 1.0);
        assert!(trace.rows.windows(2).all(|w| w[1].time > w[0].time));
        let post: Vec<_> = trace.rows.iter().filter(|r| r.mode != Mode::Phase1).collect();
        for w in post.windows(2) {
            if w[0].mode == Mode::Resync && w[1].mode == Mode::Phase2 {
                // schedule restarts at sample 0 with the mean on the section
                assert_eq!(w[1].sample, Some(0));
                let m = mean_local(&w[1].state);
                assert!(m[1].abs() < 1e-6 && m[0] > 0.0, "mean {m:?}");
                assert!(reference_max(&w[1].state, m.as_slice()) <= 0.1);
            }
        }
        let ts = summary.t_switch.unwrap();
        assert!(summary.t_end >= ts + 4.0 * cycle.period - 1e-9);
    }

    #[test]
    fn consensus_test_ends_phase_one_on_the_section() {
        let mut cfg = baseline_cfg();
        cfg.sync_test = SyncTest::Consensus;
        cfg.initial = Some(vec![
            LocalState::new(2.5, -1.0),
            LocalState::new(-0.3, 2.0),
            LocalState::new(1.0, 1.0),
            LocalState::new(-2.0, -2.0),
        ]);
        let cycle = blended_cycle_sample(&cfg.osc, 100, None).unwrap();
        let one = phase_one(&cfg, &cycle).unwrap();
        let m = mean_local(&one.handoff);
        assert!(m[1].abs() < 1e-6);
        assert!((m[0] - cycle.anchor[0]).abs() <= cfg.epsilon);
        assert!(reference_max(&one.handoff, m.as_slice()) <= cfg.epsilon);
    }

    #[test]
    fn schedule_for_other_graph_is_rejected() {
        let cfg = baseline_cfg();
        let cycle = blended_cycle_sample(&cfg.osc, 20, None).unwrap();
        let other = CouplingGraph::complete(4).unwrap();
        let sched = uniform_schedule(&other, &cycle, 1.0).unwrap();
        assert!(run_two_phase_with(&cfg, &sched).is_err());
    }
}
