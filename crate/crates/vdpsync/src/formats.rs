//! On-disk formats. Every JSON document starts with `format` and `version`
//! fields; readers reject anything else.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vdpsync_core::gain_opt::{ScheduleStats, SolveStatus};
use vdpsync_core::simulate::{RunSummary, SimulationTrace};
use vdpsync_core::{CouplingGraph, CycleSample, EdgeGainSet, GainSchedule};

use crate::error::{CliError, CliResult};

pub const CYCLE_FORMAT: &str = "vdpsync-cycle";
pub const SCHEDULE_FORMAT: &str = "vdpsync-schedule";
pub const SUMMARY_FORMAT: &str = "vdpsync-summary";
pub const VERSION: u32 = 1;

/// Short content hash of a graph: node count and sorted edge list.
pub fn graph_hash(g: &CouplingGraph) -> String {
    let mut text = format!("n={};", g.node_count());
    for (i, j) in g.edges() {
        text.push_str(&format!("{i}<{j};"));
    }
    hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string()
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("plain data serializes");
    out.push(b'\n');
    out
}

fn check_header(path: &Path, format: &str, version: u32, want: &str) -> CliResult<()> {
    if format != want {
        return Err(CliError::format(path, format!("expected format {want:?}, found {format:?}")));
    }
    if version != VERSION {
        return Err(CliError::format(path, format!("unsupported version {version}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleFile {
    pub format: String,
    pub version: u32,
    pub mu: Vec<f64>,
    pub cycle: CycleSample,
}

impl CycleFile {
    pub fn new(mu: &[f64], cycle: &CycleSample) -> Self {
        Self { format: CYCLE_FORMAT.into(), version: VERSION, mu: mu.to_vec(), cycle: cycle.clone() }
    }

    pub fn to_json(&self) -> Vec<u8> {
        to_json(self)
    }

    pub fn from_json(path: &Path, bytes: &[u8]) -> CliResult<Self> {
        let f: Self = serde_json::from_slice(bytes).map_err(|e| CliError::format(path, e))?;
        check_header(path, &f.format, f.version, CYCLE_FORMAT)?;
        Ok(f)
    }
}

/// `l,t,s1,s2` rows after a `# key=value` header line.
pub fn cycle_csv(cycle: &CycleSample) -> Vec<u8> {
    let mut out = format!(
        "# {CYCLE_FORMAT} v{VERSION} T={} dt={} f={} anchor={},{}\n",
        cycle.period, cycle.interval, cycle.count, cycle.anchor[0], cycle.anchor[1]
    )
    .into_bytes();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["l", "t", "s1", "s2"]).expect("in-memory write");
    for (l, (t, s)) in cycle.times.iter().zip(&cycle.states).enumerate() {
        w.write_record([l.to_string(), t.to_string(), s[0].to_string(), s[1].to_string()]).expect("in-memory write");
    }
    out.extend(w.into_inner().expect("in-memory flush"));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleHeader {
    pub n: usize,
    pub f: usize,
    pub period: f64,
    pub interval: f64,
    pub omega: f64,
    pub graph_hash: String,
    /// 0-based `(receiver, sender)` pairs in gain order.
    pub edges: Vec<(usize, usize)>,
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub l: usize,
    /// `None` for schedules that were not optimized.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub status: SolveStatus,
    pub gains: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub format: String,
    pub version: u32,
    pub header: ScheduleHeader,
    pub cycle: CycleSample,
    pub samples: Vec<SampleRecord>,
}

impl ScheduleFile {
    pub fn new(mu: &[f64], s: &GainSchedule) -> Self {
        let header = ScheduleHeader {
            n: s.graph.node_count(),
            f: s.cycle.count,
            period: s.cycle.period,
            interval: s.cycle.interval,
            omega: s.omega,
            graph_hash: graph_hash(&s.graph),
            edges: s.graph.edges().to_vec(),
            mu: mu.to_vec(),
        };
        let samples = (0..s.len())
            .map(|l| SampleRecord {
                l,
                alpha: s.alphas[l].is_finite().then_some(s.alphas[l]),
                beta: s.betas[l],
                status: s.statuses[l],
                gains: s.per_sample[l].as_slice().to_vec(),
            })
            .collect();
        Self { format: SCHEDULE_FORMAT.into(), version: VERSION, header, cycle: s.cycle.clone(), samples }
    }

    pub fn to_json(&self) -> Vec<u8> {
        to_json(self)
    }

    pub fn from_json(path: &Path, bytes: &[u8]) -> CliResult<Self> {
        let f: Self = serde_json::from_slice(bytes).map_err(|e| CliError::format(path, e))?;
        check_header(path, &f.format, f.version, SCHEDULE_FORMAT)?;
        Ok(f)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(path, &bytes)
    }

    /// Rebuilds and validates the schedule.
    pub fn to_schedule(&self, path: &Path) -> CliResult<GainSchedule> {
        let h = &self.header;
        let bad = |msg: String| CliError::format(path, msg);
        let graph = CouplingGraph::new(h.n, h.edges.iter().copied()).map_err(|e| bad(e.to_string()))?;
        if graph.edges() != h.edges.as_slice() || graph_hash(&graph) != h.graph_hash {
            return Err(bad("graph hash does not match the edge list".into()));
        }
        if h.f != self.cycle.count || self.samples.len() != h.f || h.period != self.cycle.period {
            return Err(bad("header disagrees with the cycle or the sample count".into()));
        }
        let mut per_sample = Vec::with_capacity(h.f);
        for (l, rec) in self.samples.iter().enumerate() {
            if rec.l != l {
                return Err(bad(format!("record {l} carries index {}", rec.l)));
            }
            per_sample.push(
                EdgeGainSet::from_entries(&graph, rec.gains.clone()).map_err(|e| bad(format!("sample {l}: {e}")))?,
            );
        }
        let schedule = GainSchedule {
            graph,
            cycle: self.cycle.clone(),
            omega: h.omega,
            per_sample,
            alphas: self.samples.iter().map(|r| r.alpha.unwrap_or(f64::NAN)).collect(),
            betas: self.samples.iter().map(|r| r.beta).collect(),
            statuses: self.samples.iter().map(|r| r.status).collect(),
        };
        schedule.validate().map_err(|e| bad(e.to_string()))?;
        Ok(schedule)
    }
}

/// One row per edge per sample after a `# key=value` header line.
pub fn schedule_csv(mu: &[f64], s: &GainSchedule) -> Vec<u8> {
    let c = &s.cycle;
    let mut out = format!(
        "# {SCHEDULE_FORMAT} v{VERSION} n={} f={} T={} dt={} omega={} graph={} mu={}\n",
        s.graph.node_count(),
        c.count,
        c.period,
        c.interval,
        s.omega,
        graph_hash(&s.graph),
        mu.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
    )
    .into_bytes();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["l", "t", "edge", "i", "j", "k1", "k2", "alpha", "beta", "status"]).expect("in-memory write");
    for l in 0..s.len() {
        for (e, &(i, j)) in s.graph.edges().iter().enumerate() {
            let k = s.per_sample[l].get(e);
            let alpha = if s.alphas[l].is_finite() { s.alphas[l].to_string() } else { String::new() };
            w.write_record([
                l.to_string(),
                c.times[l].to_string(),
                e.to_string(),
                i.to_string(),
                j.to_string(),
                k[0].to_string(),
                k[1].to_string(),
                alpha,
                s.betas[l].to_string(),
                status_name(s.statuses[l]).into(),
            ])
            .expect("in-memory write");
        }
    }
    out.extend(w.into_inner().expect("in-memory flush"));
    out
}

pub fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::IterationLimit => "iteration_limit",
        SolveStatus::Stalled => "stalled",
    }
}

/// Trace columns: time, mode, sample, x{i}_1, x{i}_2, s_1, s_2, V, max_dev,
/// ref_dev, then k{i}-{j}_1, k{i}-{j}_2 per edge.
pub fn trace_csv(trace: &SimulationTrace) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = vec!["time".into(), "mode".into(), "sample".into()];
    for i in 0..trace.node_count {
        header.push(format!("x{i}_1"));
        header.push(format!("x{i}_2"));
    }
    header.extend(["s_1", "s_2", "V", "max_dev", "ref_dev"].map(String::from));
    for (i, j) in &trace.edges {
        header.push(format!("k{i}-{j}_1"));
        header.push(format!("k{i}-{j}_2"));
    }
    w.write_record(&header).expect("in-memory write");
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for r in &trace.rows {
        rec.clear();
        rec.push(r.time.to_string());
        rec.push(r.mode.as_str().into());
        rec.push(r.sample.map(|l| l.to_string()).unwrap_or_default());
        rec.extend(r.state.iter().map(f64::to_string));
        rec.push(r.reference[0].to_string());
        rec.push(r.reference[1].to_string());
        rec.push(r.v.to_string());
        rec.push(r.max_dev.to_string());
        rec.push(r.ref_dev.to_string());
        for k in &r.gains {
            rec.push(k[0].to_string());
            rec.push(k[1].to_string());
        }
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Parsed trace CSV, column-major by name.
#[derive(Debug, Clone)]
pub struct TraceTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl TraceTable {
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut r =
            csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(|e| CliError::format(path, e))?;
        let header: Vec<String> =
            r.headers().map_err(|e| CliError::format(path, e))?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.map_err(|e| CliError::format(path, e))?.iter().map(String::from).collect());
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn node_count(&self) -> usize {
        (0..).take_while(|i| self.column(&format!("x{i}_1")).is_some()).count()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryFile<'a, C: Serialize> {
    pub format: &'static str,
    pub version: u32,
    pub mode: &'static str,
    pub config: &'a C,
    pub schedule: ScheduleStats,
    pub summary: &'a RunSummary,
}

pub fn summary_json<C: Serialize>(
    mode: &'static str,
    config: &C,
    stats: ScheduleStats,
    summary: &RunSummary,
) -> Vec<u8> {
    to_json(&SummaryFile { format: SUMMARY_FORMAT, version: VERSION, mode, config, schedule: stats, summary })
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    to_json(value)
}
