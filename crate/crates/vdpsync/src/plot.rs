//! Plot-ready CSV files for the figures, plus a matplotlib stub per figure
//! that reads only the emitted data file.

use std::path::{Path, PathBuf};

use vdpsync_core::dynamics::vdp_field;
use vdpsync_core::limit_cycle::{find_single_cycle, integrate, CycleSearch};

use crate::commands::Report;
use crate::config::ConfigFile;
use crate::error::{CliError, CliResult};
use crate::formats::{ScheduleFile, TraceTable};
use crate::output::OutputSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Figure {
    /// Uncoupled oscillators on their own limit cycles (config only).
    Fig1a,
    /// Phase one phase plane (trace).
    Fig1b,
    /// Per-edge gains over one period (schedule).
    Fig2,
    /// Scheduled phase phase plane and deviation (trace).
    Fig4,
    /// Hybrid run phase plane, deviation and mode (trace).
    Fig5,
    /// Same as fig4, for a coarser sampling (trace).
    Fig6,
    /// Largest gain per sample, one column per schedule (schedules).
    Fig7,
}

impl Figure {
    pub fn id(self) -> &'static str {
        match self {
            Figure::Fig1a => "fig1a",
            Figure::Fig1b => "fig1b",
            Figure::Fig2 => "fig2",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
        }
    }
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn phase_plane_stub(id: &str, n: usize, with_reference: bool) -> String {
    let reference =
        if with_reference { "ax.plot(d[\"s_1\"], d[\"s_2\"], \"k--\", lw=1, label=\"reference\")\n" } else { "" };
    format!(
        "import matplotlib.pyplot as plt\nimport pandas as pd\n\n\
d = pd.read_csv(\"{id}.csv\")\nfig, ax = plt.subplots()\n\
for i in range({n}):\n    ax.plot(d[f\"x{{i}}_1\"], d[f\"x{{i}}_2\"], lw=0.8, label=f\"oscillator {{i}}\")\n\
{reference}ax.set_xlabel(\"x1\")\nax.set_ylabel(\"x2\")\nax.legend()\nfig.savefig(\"{id}.png\", dpi=150)\n"
    )
}

fn series_stub(id: &str, x: &str, ylabel: &str) -> String {
    format!(
        "import matplotlib.pyplot as plt\nimport pandas as pd\n\n\
d = pd.read_csv(\"{id}.csv\")\nfig, ax = plt.subplots()\n\
for c in d.columns:\n    if c != \"{x}\":\n        ax.plot(d[\"{x}\"], d[c], lw=0.8, label=c)\n\
ax.set_xlabel(\"{x}\")\nax.set_ylabel(\"{ylabel}\")\nax.legend(fontsize=6)\nfig.savefig(\"{id}.png\", dpi=150)\n"
    )
}

fn one_input(inputs: &[PathBuf], fig: Figure) -> CliResult<&Path> {
    match inputs {
        [p] => Ok(p),
        _ => Err(CliError::Usage(format!("{} needs exactly one --input file", fig.id()))),
    }
}

fn fig1a(cfg: &ConfigFile) -> CliResult<(Vec<String>, Vec<Vec<String>>, usize)> {
    let osc = cfg.oscillators()?;
    let mut rows = Vec::new();
    for (i, &mu) in osc.mu().iter().enumerate() {
        let c = find_single_cycle(mu, &CycleSearch::default())?;
        let dt = c.period / 2000.0;
        let traj = integrate(
            |_, x, out: &mut [f64]| {
                let [a, b] = vdp_field(x[0], x[1], mu);
                out[0] = a;
                out[1] = b;
            },
            &c.anchor,
            0.0,
            c.period,
            dt,
        )?;
        for (t, s) in traj.times.iter().zip(&traj.states) {
            rows.push(vec![i.to_string(), mu.to_string(), t.to_string(), s[0].to_string(), s[1].to_string()]);
        }
    }
    let header = ["oscillator", "mu", "t", "x1", "x2"].map(String::from).to_vec();
    Ok((header, rows, osc.len()))
}

/// Trace rows whose mode is in `modes`, reduced to time, mode, states,
/// reference and deviation columns.
fn trace_extract(path: &Path, modes: &[&str]) -> CliResult<(Vec<String>, Vec<Vec<String>>, usize)> {
    let table = TraceTable::load(path)?;
    if table.rows.is_empty() {
        return Err(CliError::Usage(format!("{} contains no trace rows", path.display())));
    }
    let n = table.node_count();
    let mut names = vec!["time".to_string(), "mode".to_string()];
    for i in 0..n {
        names.push(format!("x{i}_1"));
        names.push(format!("x{i}_2"));
    }
    names.extend(["s_1", "s_2", "max_dev"].map(String::from));
    let cols = names
        .iter()
        .map(|c| table.column(c).ok_or_else(|| CliError::format(path, format!("missing column {c}"))))
        .collect::<CliResult<Vec<_>>>()?;
    let mode_col = cols[1];
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .filter(|r| modes.contains(&r[mode_col].as_str()))
        .map(|r| cols.iter().map(|&c| r[c].clone()).collect())
        .collect();
    if rows.is_empty() {
        return Err(CliError::Usage(format!("{} has no rows in mode {}", path.display(), modes.join("/"))));
    }
    Ok((names, rows, n))
}

fn fig2(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let file = ScheduleFile::load(path)?;
    let s = file.to_schedule(path)?;
    let mut header = vec!["t".to_string()];
    for (i, j) in s.graph.edges() {
        header.push(format!("k{i}-{j}_1"));
        header.push(format!("k{i}-{j}_2"));
    }
    let rows = (0..s.len())
        .map(|l| {
            let mut r = vec![s.cycle.times[l].to_string()];
            for k in s.per_sample[l].as_slice() {
                r.push(k[0].to_string());
                r.push(k[1].to_string());
            }
            r
        })
        .collect();
    Ok((header, rows))
}

fn fig7(inputs: &[PathBuf]) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    if inputs.is_empty() {
        return Err(CliError::Usage("fig7 needs one or more --input schedule files".into()));
    }
    let mut header = vec!["t".to_string()];
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    for p in inputs {
        let s = ScheduleFile::load(p)?.to_schedule(p)?;
        if !times.is_empty() && s.cycle.times != times {
            return Err(CliError::Usage("fig7 inputs must share the same sampling".into()));
        }
        times = s.cycle.times.clone();
        let stem = p.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default();
        let mut label = format!("largest_gain_{stem}");
        if header.contains(&label) {
            label = format!("{label}_{}", header.len() - 1);
        }
        header.push(label);
        columns.push(s.per_sample.iter().map(|g| g.max_entry()).collect());
    }
    let rows = times
        .iter()
        .enumerate()
        .map(|(l, t)| std::iter::once(t.to_string()).chain(columns.iter().map(|c| c[l].to_string())).collect())
        .collect();
    Ok((header, rows))
}

/// Emits `<fig>.csv` and `plot_<fig>.py` into `out`.
pub fn cmd_plotdata(cfg: Option<&ConfigFile>, out: &Path, fig: Figure, inputs: &[PathBuf]) -> CliResult<Report> {
    let id = fig.id();
    let (header, rows, stub) = match fig {
        Figure::Fig1a => {
            let cfg = cfg.ok_or_else(|| CliError::Usage("fig1a needs --config".into()))?;
            let (h, r, _) = fig1a(cfg)?;
            let stub = format!(
                "import matplotlib.pyplot as plt\nimport pandas as pd\n\n\
d = pd.read_csv(\"{id}.csv\")\nfig, ax = plt.subplots()\n\
for (i, mu), g in d.groupby([\"oscillator\", \"mu\"]):\n    ax.plot(g[\"x1\"], g[\"x2\"], label=f\"mu = {{mu}}\")\n\
ax.set_xlabel(\"x1\")\nax.set_ylabel(\"x2\")\nax.legend()\nfig.savefig(\"{id}.png\", dpi=150)\n"
            );
            (h, r, stub)
        }
        Figure::Fig1b => {
            let (h, r, n) = trace_extract(one_input(inputs, fig)?, &["phase1"])?;
            (h, r, phase_plane_stub(id, n, true))
        }
        Figure::Fig4 | Figure::Fig6 => {
            let (h, r, n) = trace_extract(one_input(inputs, fig)?, &["phase2"])?;
            (h, r, phase_plane_stub(id, n, false))
        }
        Figure::Fig5 => {
            let (h, r, n) = trace_extract(one_input(inputs, fig)?, &["phase2", "resync"])?;
            (h, r, phase_plane_stub(id, n, false))
        }
        Figure::Fig2 => {
            let (h, r) = fig2(one_input(inputs, fig)?)?;
            (h, r, series_stub(id, "t", "gain"))
        }
        Figure::Fig7 => {
            let (h, r) = fig7(inputs)?;
            (h, r, series_stub(id, "t", "largest gain over all edges"))
        }
    };
    let mut files = OutputSet::new();
    files.add(out.join(format!("{id}.csv")), csv_bytes(&header, &rows));
    files.add(out.join(format!("plot_{id}.py")), stub.into_bytes());
    Report { lines: vec![format!("{id}: {} rows", rows.len())], ..Report::default() }.finish(files)
}
