use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use vdpsync_core::gain_opt::SolveStatus;
use vdpsync_core::simulate::{run_hybrid_with, run_two_phase_with, RunSummary, SimulationTrace};
use vdpsync_core::GainSchedule;

use crate::cache::Cache;
use crate::config::{ConfigFile, GraphKind, GraphSpec};
use crate::error::{CliError, CliResult};
use crate::formats::{cycle_csv, json_bytes, schedule_csv, summary_json, trace_csv, CycleFile, ScheduleFile};
use crate::output::OutputSet;

/// What a command printed and wrote.
#[derive(Debug, Default)]
pub struct Report {
    pub lines: Vec<String>,
    pub written: Vec<PathBuf>,
}

impl Report {
    pub(crate) fn finish(mut self, outputs: OutputSet) -> CliResult<Self> {
        self.written = outputs.commit()?;
        Ok(self)
    }
}

/// Writes the sampled blended cycle as `cycle.csv` and `cycle.json`.
pub fn cmd_cycle(cfg: &ConfigFile, out: &Path, cache: &Cache) -> CliResult<Report> {
    let osc = cfg.oscillators()?;
    let cycle = cache.cycle(&osc, cfg.schedule.samples, cfg.schedule.dt)?;
    let mut files = OutputSet::new();
    files.add(out.join("cycle.csv"), cycle_csv(&cycle));
    files.add(out.join("cycle.json"), CycleFile::new(osc.mu(), &cycle).to_json());
    let report = Report {
        lines: vec![
            format!("T = {:.6}", cycle.period),
            format!("dt = {:.6} (f = {})", cycle.interval, cycle.count),
            format!("s0 = [{:.6}, {:.6}]", cycle.anchor[0], cycle.anchor[1]),
        ],
        ..Report::default()
    };
    report.finish(files)
}

fn schedule_for(cfg: &ConfigFile, cache: &Cache) -> CliResult<GainSchedule> {
    let osc = cfg.oscillators()?;
    let g = cfg.graph()?;
    cache.schedule(&osc, &g, cfg.schedule.samples, cfg.schedule.dt, cfg.schedule.omega, &cfg.solver)
}

fn schedule_lines(s: &GainSchedule) -> Vec<String> {
    let st = s.stats();
    let mut lines: Vec<String> = s
        .graph
        .edges()
        .iter()
        .zip(&st.per_edge_avg)
        .map(|((i, j), avg)| format!("edge {i}<-{j}: average gain {avg:.3}"))
        .collect();
    lines.push(format!("overall average gain {:.3} (omega = {})", st.overall_avg, s.omega));
    lines.push(format!("largest beta {:.3}, mean beta {:.3}", st.max_beta, st.mean_beta));
    let stalled = s.statuses.iter().filter(|x| **x == SolveStatus::Stalled).count();
    if st.iteration_limited + stalled > 0 {
        lines.push(format!("warning: {} samples hit the iteration limit, {stalled} stalled", st.iteration_limited));
    }
    lines
}

/// Optimizes (or loads from cache) the schedule; writes JSON and CSV forms.
pub fn cmd_optimize(cfg: &ConfigFile, out: &Path, cache: &Cache) -> CliResult<Report> {
    let schedule = schedule_for(cfg, cache)?;
    let mut files = OutputSet::new();
    files.add(out.join("schedule.json"), ScheduleFile::new(&cfg.mu, &schedule).to_json());
    files.add(out.join("schedule.csv"), schedule_csv(&cfg.mu, &schedule));
    Report { lines: schedule_lines(&schedule), ..Report::default() }.finish(files)
}

/// Loads a schedule file and checks it belongs to this configuration.
pub fn load_schedule_for(cfg: &ConfigFile, path: &Path) -> CliResult<GainSchedule> {
    let file = ScheduleFile::load(path)?;
    let schedule = file.to_schedule(path)?;
    if file.header.mu != cfg.mu {
        return Err(CliError::Config(format!("{} was computed for mu = {:?}", path.display(), file.header.mu)));
    }
    if schedule.graph != cfg.graph()? {
        return Err(CliError::Config(format!("{} was computed for a different graph", path.display())));
    }
    Ok(schedule)
}

/// Runs the configured simulation on a schedule.
pub fn simulate(cfg: &ConfigFile, schedule: &GainSchedule) -> CliResult<(SimulationTrace, RunSummary)> {
    let run = cfg.run_config()?;
    let result =
        if run.hybrid.is_some() { run_hybrid_with(&run, schedule) } else { run_two_phase_with(&run, schedule) };
    Ok(result?)
}

/// Writes `trace.csv` and `summary.json`.
pub fn cmd_simulate(cfg: &ConfigFile, out: &Path, cache: &Cache, schedule: Option<&Path>) -> CliResult<Report> {
    let schedule = match schedule {
        Some(p) => load_schedule_for(cfg, p)?,
        None => schedule_for(cfg, cache)?,
    };
    let (trace, summary) = simulate(cfg, &schedule)?;
    let mode = if cfg.hybrid.is_some() { "hybrid" } else { "two_phase" };
    let mut files = OutputSet::new();
    files.add(out.join("trace.csv"), trace_csv(&trace));
    files.add(out.join("summary.json"), summary_json(mode, cfg, schedule.stats(), &summary));
    let mut lines = vec![format!("phase one ended at t = {:.4}", summary.t_switch.unwrap_or(f64::NAN))];
    if let Some(avg) = summary.overall_avg_gain {
        lines.push(format!("average applied gain {avg:.3}"));
    }
    if let Some(d) = summary.max_dev_after_switch {
        lines.push(format!(
            "max pairwise deviation after switch {d:.4} (dense {:.4})",
            summary.max_dev_dense_after_switch.unwrap_or(d)
        ));
    }
    if cfg.hybrid.is_some() {
        lines.push(format!(
            "{} re-sync events, strong coupling {:.1}% of the time",
            summary.resync_events,
            100.0 * summary.strong_coupling_fraction
        ));
    }
    Report { lines, ..Report::default() }.finish(files)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    Omega,
    F,
    Topology,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::Omega => "omega",
            SweepParam::F => "f",
            SweepParam::Topology => "topology",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub avg_gain: Option<f64>,
    pub max_beta: Option<f64>,
    pub mean_beta: Option<f64>,
    pub t_switch: Option<f64>,
    pub max_dev: Option<f64>,
    pub max_dev_dense: Option<f64>,
    pub resync_events: Option<usize>,
    pub strong_coupling_fraction: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub betas: Vec<f64>,
}

fn sweep_row(value: String, cfg: &ConfigFile, cache: &Cache) -> SweepRow {
    let mut row = SweepRow {
        value,
        avg_gain: None,
        max_beta: None,
        mean_beta: None,
        t_switch: None,
        max_dev: None,
        max_dev_dense: None,
        resync_events: None,
        strong_coupling_fraction: None,
        error: None,
        betas: Vec::new(),
    };
    let schedule = match schedule_for(cfg, cache) {
        Ok(s) => s,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let st = schedule.stats();
    row.avg_gain = Some(st.overall_avg);
    row.max_beta = Some(st.max_beta);
    row.mean_beta = Some(st.mean_beta);
    row.betas = schedule.betas.clone();
    match simulate(cfg, &schedule) {
        Ok((_, s)) => {
            row.t_switch = s.t_switch;
            row.max_dev = s.max_dev_after_switch;
            row.max_dev_dense = s.max_dev_dense_after_switch;
            row.resync_events = Some(s.resync_events);
            row.strong_coupling_fraction = Some(s.strong_coupling_fraction);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// One configuration per sweep value, evaluated concurrently.
pub fn sweep_configs(cfg: &ConfigFile, param: SweepParam) -> CliResult<Vec<(String, ConfigFile)>> {
    let mut rows = Vec::new();
    match param {
        SweepParam::Omega => {
            for &w in &cfg.sweep.omega {
                let mut c = cfg.clone();
                c.schedule.omega = w;
                rows.push((w.to_string(), c));
            }
        }
        SweepParam::F => {
            for &f in &cfg.sweep.samples {
                let mut c = cfg.clone();
                c.schedule.samples = f;
                rows.push((f.to_string(), c));
            }
        }
        SweepParam::Topology => {
            for &k in &cfg.sweep.topology {
                if k == GraphKind::Edges {
                    return Err(CliError::Config("sweep.topology accepts only \"chain\" and \"complete\"".into()));
                }
                let mut c = cfg.clone();
                c.graph = GraphSpec::of_kind(k);
                rows.push((c.graph.label(), c));
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Config(format!("sweep.{} is empty", param.name())));
    }
    for (_, c) in &rows {
        c.run_config()?;
    }
    Ok(rows)
}

pub fn run_sweep(cfg: &ConfigFile, param: SweepParam, cache: &Cache) -> CliResult<Vec<SweepRow>> {
    let configs = sweep_configs(cfg, param)?;
    Ok(configs.par_iter().map(|(v, c)| sweep_row(v.clone(), c, cache)).collect())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `sweep_<param>.csv` and `.json`; topology sweeps also write the
/// per-sample largest gain of every graph.
pub fn cmd_sweep(cfg: &ConfigFile, out: &Path, cache: &Cache, param: SweepParam) -> CliResult<Report> {
    let rows = run_sweep(cfg, param, cache)?;
    if rows.iter().all(|r| r.error.is_some()) {
        return Err(CliError::Usage(format!(
            "every sweep row failed; first error: {}",
            rows[0].error.as_deref().unwrap_or_default()
        )));
    }
    let name = param.name();
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        name,
        "avg_gain",
        "max_beta",
        "mean_beta",
        "t_switch",
        "max_dev",
        "max_dev_dense",
        "resync_events",
        "strong_coupling_fraction",
        "error",
    ];
    w.write_record(header).expect("in-memory write");
    let mut lines = Vec::new();
    for r in &rows {
        w.write_record([
            r.value.clone(),
            opt(r.avg_gain),
            opt(r.max_beta),
            opt(r.mean_beta),
            opt(r.t_switch),
            opt(r.max_dev),
            opt(r.max_dev_dense),
            r.resync_events.map(|v| v.to_string()).unwrap_or_default(),
            opt(r.strong_coupling_fraction),
            r.error.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
        lines.push(match &r.error {
            Some(e) => format!("{name} = {}: failed: {e}", r.value),
            None => format!(
                "{name} = {}: avg gain {:.3}, max beta {:.3}, max deviation {:.4}",
                r.value,
                r.avg_gain.unwrap_or(f64::NAN),
                r.max_beta.unwrap_or(f64::NAN),
                r.max_dev.unwrap_or(f64::NAN)
            ),
        });
    }
    let mut files = OutputSet::new();
    files.add(out.join(format!("sweep_{name}.csv")), w.into_inner().expect("in-memory flush"));
    files.add(out.join(format!("sweep_{name}.json")), json_bytes(&rows));
    if param == SweepParam::Topology {
        let f = rows.iter().map(|r| r.betas.len()).max().unwrap_or(0);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut head = vec!["l".to_string()];
        head.extend(rows.iter().map(|r| format!("beta_{}", r.value)));
        w.write_record(&head).expect("in-memory write");
        for l in 0..f {
            let mut rec = vec![l.to_string()];
            rec.extend(rows.iter().map(|r| r.betas.get(l).map(|b| b.to_string()).unwrap_or_default()));
            w.write_record(&rec).expect("in-memory write");
        }
        files.add(out.join("sweep_topology_beta.csv"), w.into_inner().expect("in-memory flush"));
    }
    Report { lines, ..Report::default() }.finish(files)
}
