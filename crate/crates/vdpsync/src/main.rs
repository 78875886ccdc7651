use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vdpsync::commands::{cmd_cycle, cmd_optimize, cmd_simulate, cmd_sweep, Report, SweepParam};
use vdpsync::plot::{cmd_plotdata, Figure};
use vdpsync::{Cache, CliError, CliResult, ConfigFile};

/// Two-phase synchronization of heterogeneous Van der Pol oscillator networks.
#[derive(Debug, Parser)]
#[command(name = "vdpsync", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: output.dir from the config, else ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cache directory for cycles and schedules (overrides VDPSYNC_CACHE).
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Recompute everything and store nothing in the cache.
    #[arg(long, global = true)]
    no_cache: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Blended limit cycle and its samples.
    Cycle,
    /// Per-sample optimized gain schedule.
    Optimize,
    /// Phase one, then the scheduled (or hybrid) phase.
    Simulate {
        /// Reuse a schedule file instead of the cache.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// One summary row per value of a parameter.
    Sweep {
        #[arg(long, value_enum)]
        param: SweepParam,
    },
    /// Plot-ready data for one figure.
    Plotdata {
        #[arg(long, value_enum)]
        figure: Figure,
        /// Trace or schedule file(s) the figure is built from.
        #[arg(long)]
        input: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<Report> {
    let config = cli.config.as_deref().map(ConfigFile::load).transpose()?;
    let need = |what: &str| config.as_ref().ok_or_else(|| CliError::Usage(format!("{what} needs --config")));
    let out = cli
        .out
        .clone()
        .or_else(|| config.as_ref().and_then(|c| c.output.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    let cache = if cli.no_cache {
        Cache::disabled()
    } else {
        Cache::resolve(cli.cache.as_deref(), config.as_ref().and_then(|c| c.output.cache.as_deref()), &out)
    };
    match &cli.command {
        Command::Cycle => cmd_cycle(need("cycle")?, &out, &cache),
        Command::Optimize => cmd_optimize(need("optimize")?, &out, &cache),
        Command::Simulate { schedule } => cmd_simulate(need("simulate")?, &out, &cache, schedule.as_deref()),
        Command::Sweep { param } => cmd_sweep(need("sweep")?, &out, &cache, *param),
        Command::Plotdata { figure, input } => cmd_plotdata(config.as_ref(), &out, *figure, input),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
            for path in &report.written {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.into()
        }
    }
}
