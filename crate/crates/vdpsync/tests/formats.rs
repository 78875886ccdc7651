use std::path::Path;

use vdpsync::formats::{graph_hash, CycleFile, ScheduleFile};
use vdpsync::optimize_schedule_par;
use vdpsync_core::gain_opt::optimize_schedule;
use vdpsync_core::simulate::blended_cycle_sample;
use vdpsync_core::{CouplingGraph, OscillatorSet, SolverOptions};

fn osc() -> OscillatorSet {
    OscillatorSet::new(vec![0.5, 3.0, 6.0, 10.0]).unwrap()
}

#[test]
fn parallel_optimization_equals_sequential() {
    let osc = osc();
    let cycle = blended_cycle_sample(&osc, 80, None).unwrap();
    for g in [CouplingGraph::chain(4).unwrap(), CouplingGraph::complete(4).unwrap()] {
        let seq = optimize_schedule(&cycle, &osc, &g, 0.01, &SolverOptions::default()).unwrap();
        let par = optimize_schedule_par(&cycle, &osc, &g, 0.01, &SolverOptions::default()).unwrap();
        assert_eq!(seq, par);
    }
}

#[test]
fn schedule_file_round_trips_exactly() {
    let osc = osc();
    let cycle = blended_cycle_sample(&osc, 30, None).unwrap();
    let g = CouplingGraph::chain(4).unwrap();
    let s = optimize_schedule_par(&cycle, &osc, &g, 0.01, &SolverOptions::default()).unwrap();
    let bytes = ScheduleFile::new(osc.mu(), &s).to_json();
    let p = Path::new("mem.json");
    let back = ScheduleFile::from_json(p, &bytes).unwrap().to_schedule(p).unwrap();
    assert_eq!(back, s);

    let c = CycleFile::from_json(p, &CycleFile::new(osc.mu(), &cycle).to_json()).unwrap();
    assert_eq!(c.cycle, cycle);
}

#[test]
fn tampered_schedule_files_are_rejected() {
    let osc = osc();
    let cycle = blended_cycle_sample(&osc, 10, None).unwrap();
    let g = CouplingGraph::chain(4).unwrap();
    let s = optimize_schedule_par(&cycle, &osc, &g, 0.01, &SolverOptions::default()).unwrap();
    let p = Path::new("mem.json");
    let text = String::from_utf8(ScheduleFile::new(osc.mu(), &s).to_json()).unwrap();

    let other = graph_hash(&CouplingGraph::complete(4).unwrap());
    let wrong_hash = text.replace(&graph_hash(&g), &other);
    assert!(ScheduleFile::from_json(p, wrong_hash.as_bytes()).and_then(|f| f.to_schedule(p)).is_err());

    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["samples"].as_array_mut().unwrap().pop();
    let short = serde_json::to_vec(&v).unwrap();
    assert!(ScheduleFile::from_json(p, &short).and_then(|f| f.to_schedule(p)).is_err());

    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["version"] = 99.into();
    assert!(ScheduleFile::from_json(p, &serde_json::to_vec(&v).unwrap()).is_err());
}
