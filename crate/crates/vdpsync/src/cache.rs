//! Offline artifacts keyed by a content hash of everything that determines
//! them. Unreadable or stale entries are recomputed; failing to store an
//! entry only produces a warning.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use vdpsync_core::simulate::blended_cycle_sample;
use vdpsync_core::{CouplingGraph, CycleSample, GainSchedule, OscillatorSet, SolverOptions};

use crate::error::CliResult;
use crate::formats::{CycleFile, ScheduleFile, VERSION};
use crate::output::write_atomic;
use crate::parallel::optimize_schedule_par;

/// Overrides the cache directory unless `--cache` is given.
pub const CACHE_ENV: &str = "VDPSYNC_CACHE";

#[derive(Debug, Clone, Default)]
pub struct Cache {
    dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct CycleKey<'a> {
    kind: &'static str,
    version: u32,
    mu: &'a [f64],
    samples: usize,
    dt: Option<f64>,
}

#[derive(Serialize)]
struct ScheduleKey<'a> {
    kind: &'static str,
    version: u32,
    mu: &'a [f64],
    n: usize,
    edges: &'a [(usize, usize)],
    samples: usize,
    dt: Option<f64>,
    omega: f64,
    solver: &'a SolverOptions,
}

fn hash_key<T: Serialize>(key: &T) -> String {
    let text = serde_json::to_string(key).expect("plain data serializes");
    hex::encode(Sha256::digest(text.as_bytes()))[..24].to_string()
}

impl Cache {
    pub fn disabled() -> Self {
        Self { dir: None }
    }

    pub fn at(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()) }
    }

    /// Precedence: `--cache` flag, then `VDPSYNC_CACHE`, then the config's
    /// `output.cache`, then `<out>/cache`.
    pub fn resolve(flag: Option<&Path>, config: Option<&Path>, out: &Path) -> Self {
        let env = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        let dir = flag.map(Path::to_path_buf).or(env).or_else(|| config.map(Path::to_path_buf));
        Self::at(dir.unwrap_or_else(|| out.join("cache")))
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn entry(&self, prefix: &str, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{prefix}-{key}.json")))
    }

    fn store(path: &Path, bytes: Vec<u8>) {
        if let Err(e) = write_atomic(path, bytes) {
            eprintln!("warning: could not write cache entry: {e}");
        }
    }

    pub fn cycle(&self, osc: &OscillatorSet, samples: usize, dt: Option<f64>) -> CliResult<CycleSample> {
        let key = hash_key(&CycleKey { kind: "cycle", version: VERSION, mu: osc.mu(), samples, dt });
        let path = self.entry("cycle", &key);
        if let Some(p) = &path {
            if let Ok(bytes) = std::fs::read(p) {
                match CycleFile::from_json(p, &bytes) {
                    Ok(f) if f.mu == osc.mu() && f.cycle.count == samples => return Ok(f.cycle),
                    _ => eprintln!("warning: ignoring stale cache entry {}", p.display()),
                }
            }
        }
        let cycle = blended_cycle_sample(osc, samples, dt)?;
        if let Some(p) = &path {
            Self::store(p, CycleFile::new(osc.mu(), &cycle).to_json());
        }
        Ok(cycle)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn schedule(
        &self,
        osc: &OscillatorSet,
        g: &CouplingGraph,
        samples: usize,
        dt: Option<f64>,
        omega: f64,
        solver: &SolverOptions,
    ) -> CliResult<GainSchedule> {
        let key = hash_key(&ScheduleKey {
            kind: "schedule",
            version: VERSION,
            mu: osc.mu(),
            n: g.node_count(),
            edges: g.edges(),
            samples,
            dt,
            omega,
            solver,
        });
        let path = self.entry("schedule", &key);
        if let Some(p) = &path {
            if let Ok(bytes) = std::fs::read(p) {
                match ScheduleFile::from_json(p, &bytes).and_then(|f| f.to_schedule(p)) {
                    Ok(s) if s.graph == *g && s.omega == omega && s.cycle.count == samples => return Ok(s),
                    _ => eprintln!("warning: ignoring stale cache entry {}", p.display()),
                }
            }
        }
        let cycle = self.cycle(osc, samples, dt)?;
        let schedule = optimize_schedule_par(&cycle, osc, g, omega, solver)?;
        if let Some(p) = &path {
            Self::store(p, ScheduleFile::new(osc.mu(), &schedule).to_json());
        }
        Ok(schedule)
    }
}
