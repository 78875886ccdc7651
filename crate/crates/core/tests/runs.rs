use std::sync::OnceLock;

use vdpsync_core::gain_opt::{optimize_schedule, sync_metric, value_function};
use vdpsync_core::simulate::{
    blended_cycle_sample, phase_one, phase_two, run_two_phase_with, substeps_for_run, uniform_schedule, Mode,
    RunConfig, RunSummary, SimulationTrace,
};
use vdpsync_core::{CouplingGraph, GainSchedule, OscillatorSet};

fn baseline() -> RunConfig {
    RunConfig::new(OscillatorSet::new(vec![0.5, 3.0, 6.0, 10.0]).unwrap(), CouplingGraph::chain(4).unwrap())
}

fn schedule() -> &'static GainSchedule {
    static S: OnceLock<GainSchedule> = OnceLock::new();
    S.get_or_init(|| {
        let cfg = baseline();
        let cycle = blended_cycle_sample(&cfg.osc, 400, None).unwrap();
        optimize_schedule(&cycle, &cfg.osc, &cfg.graph, cfg.omega, &cfg.solver).unwrap()
    })
}

fn optimized_run() -> &'static (SimulationTrace, RunSummary) {
    static R: OnceLock<(SimulationTrace, RunSummary)> = OnceLock::new();
    R.get_or_init(|| run_two_phase_with(&baseline(), schedule()).unwrap())
}

fn post_switch(trace: &SimulationTrace) -> impl Iterator<Item = &vdpsync_core::simulate::TraceRow> {
    trace.rows.iter().filter(|r| r.mode == Mode::Phase2)
}

#[test]
fn scheduled_phase_lasts_exactly_twenty_periods() {
    let (trace, summary) = optimized_run();
    let ts = summary.t_switch.unwrap();
    let t = trace.period;
    assert!((summary.t_end - ts - 20.0 * t).abs() < 1e-9 * t);
    assert_eq!(summary.max_dev_per_period.len(), 20);
    assert!(trace.rows.windows(2).all(|w| w[1].time > w[0].time));
}

#[test]
fn reference_restarts_from_the_anchor_every_period() {
    let (trace, _) = optimized_run();
    let cycle = &schedule().cycle;
    for r in post_switch(trace) {
        let l = r.sample.unwrap();
        let s = cycle.states[l];
        let d = (r.reference[0] - s[0]).hypot(r.reference[1] - s[1]);
        assert!(d < 1e-6, "sample {l} at t = {}: reference off by {d}", r.time);
    }
}

#[test]
fn gains_follow_the_schedule_in_order() {
    let (trace, _) = optimized_run();
    let s = schedule();
    let rows: Vec<_> = post_switch(trace).collect();
    for (k, r) in rows.iter().enumerate() {
        assert_eq!(r.sample, Some(k % s.len()));
        assert_eq!(r.gains.as_slice(), s.per_sample[k % s.len()].as_slice());
    }
}

#[test]
fn identical_configurations_give_identical_summaries() {
    let again = run_two_phase_with(&baseline(), schedule()).unwrap();
    assert_eq!(again.1, optimized_run().1);
}

#[test]
fn strong_uniform_coupling_is_at_least_as_tight_as_the_schedule() {
    let cfg = baseline();
    let uniform = uniform_schedule(&cfg.graph, &schedule().cycle, cfg.k_c).unwrap();
    let (_, strong) = run_two_phase_with(&cfg, &uniform).unwrap();
    let (_, opt) = optimized_run();
    assert!(strong.max_dev_after_switch.unwrap() <= opt.max_dev_after_switch.unwrap());
    assert!((strong.overall_avg_gain.unwrap() - cfg.k_c).abs() < 1e-9);
}

#[test]
fn removing_all_gains_desynchronizes_the_network() {
    let cfg = baseline();
    let cycle = &schedule().cycle;
    let p1 = phase_one(&cfg, cycle).unwrap();
    let zero = uniform_schedule(&cfg.graph, cycle, 0.0).unwrap();
    let substeps = substeps_for_run(&cfg, cycle, None);
    let trace = phase_two(&p1.handoff, p1.t_switch, &zero, 3, &cfg.osc, substeps).unwrap();
    let p = sync_metric(4).unwrap();
    let v: Vec<f64> = trace.rows.iter().map(|r| value_function(&r.state, &p).unwrap()).collect();
    assert!(v.iter().zip(trace.rows.iter()).all(|(a, r)| (a - r.v).abs() <= 1e-9 * (1.0 + a)));
    // V is not monotone sample by sample (it dips right after the release and
    // on the slow branches), but it leaves the handoff level within one period
    let first_period = &v[..=cycle.count];
    let peak = first_period.iter().copied().fold(0.0, f64::max);
    assert!(peak > 10.0 * v[0], "V peaked at {peak} from {}", v[0]);
    assert!(first_period[cycle.count] > v[0]);
    let free = trace.rows.iter().map(|r| r.max_dev).fold(0.0, f64::max);
    let bound = optimized_run().1.max_dev_after_switch.unwrap();
    assert!(free > bound, "uncoupled deviation {free} within optimized bound {bound}");
}
