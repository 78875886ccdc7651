//! TOML run configuration.
//!
//! Every section is optional except `mu`. Unknown keys are rejected; the
//! parser's message carries the line and column of the offending key.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vdpsync_core::simulate::{HybridOptions, RunConfig, SyncTest};
use vdpsync_core::{CouplingGraph, LocalState, OscillatorSet, SolverOptions};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    /// Bidirectional path 0, 1, ..., n-1.
    #[default]
    Chain,
    /// Every ordered pair.
    Complete,
    /// Explicit `[receiver, sender]` list.
    Edges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSpec {
    pub kind: GraphKind,
    /// 0-based `[i, j]` pairs meaning i receives from j. Only with `kind = "edges"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
}

impl GraphSpec {
    pub fn of_kind(kind: GraphKind) -> Self {
        Self { kind, edges: None }
    }

    pub fn build(&self, n: usize) -> CliResult<CouplingGraph> {
        let g = match (self.kind, &self.edges) {
            (GraphKind::Chain, None) => CouplingGraph::chain(n),
            (GraphKind::Complete, None) => CouplingGraph::complete(n),
            (GraphKind::Edges, Some(e)) => CouplingGraph::new(n, e.iter().map(|p| (p[0], p[1]))),
            (GraphKind::Edges, None) => {
                return Err(CliError::Config("graph.kind = \"edges\" needs graph.edges".into()))
            }
            (_, Some(_)) => return Err(CliError::Config("graph.edges is only allowed with kind = \"edges\"".into())),
        };
        g.map_err(|e| CliError::Config(format!("graph: {e}")))
    }

    pub fn label(&self) -> String {
        match self.kind {
            GraphKind::Chain => "chain".into(),
            GraphKind::Complete => "complete".into(),
            GraphKind::Edges => "edges".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseOneSection {
    pub k_c: f64,
    pub epsilon: f64,
    pub budget_periods: f64,
    pub test: SyncTest,
}

impl Default for PhaseOneSection {
    fn default() -> Self {
        Self { k_c: 200.0, epsilon: RunConfig::DEFAULT_EPSILON, budget_periods: 50.0, test: SyncTest::Reference }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    /// Samples per period f.
    pub samples: usize,
    pub omega: f64,
    /// Integration step for cycle sampling and simulation; default T/4000.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { samples: 400, omega: RunConfig::DEFAULT_OMEGA, dt: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    /// Length of the scheduled phase in periods; 0 runs phase one only.
    pub periods: usize,
    /// Explicit x_i(0), one `[x1, x2]` per oscillator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<[f64; 2]>>,
    /// Draws x_i(0) uniformly from [−3, 3]² when `initial` is absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self { periods: 20, initial: None, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridSection {
    pub error_threshold: f64,
    /// Defaults to `phase_one.epsilon`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resync_epsilon: Option<f64>,
}

impl Default for HybridSection {
    fn default() -> Self {
        Self { error_threshold: RunConfig::DEFAULT_ERROR_THRESHOLD, resync_epsilon: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub omega: Vec<f64>,
    pub samples: Vec<usize>,
    pub topology: Vec<GraphKind>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            omega: vec![0.001, 0.01, 0.1, 1.0],
            samples: vec![100, 400],
            topology: vec![GraphKind::Chain, GraphKind::Complete],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub mu: Vec<f64>,
    #[serde(default)]
    pub graph: GraphSpec,
    #[serde(default)]
    pub phase_one: PhaseOneSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hybrid: Option<HybridSection>,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.run_config()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn oscillators(&self) -> CliResult<OscillatorSet> {
        OscillatorSet::new(self.mu.clone()).map_err(|e| CliError::Config(format!("mu: {e}")))
    }

    pub fn graph(&self) -> CliResult<CouplingGraph> {
        self.graph.build(self.mu.len())
    }

    fn initial_states(&self) -> CliResult<Option<Vec<LocalState>>> {
        let n = self.mu.len();
        if let Some(init) = &self.simulation.initial {
            if init.len() != n {
                return Err(CliError::Config(format!(
                    "simulation.initial has {} states for {n} oscillators",
                    init.len()
                )));
            }
            return Ok(Some(init.iter().map(|s| LocalState::new(s[0], s[1])).collect()));
        }
        Ok(self.simulation.seed.map(|seed| random_initial_states(n, seed)))
    }

    /// Validated run configuration.
    pub fn run_config(&self) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::new(self.oscillators()?, self.graph()?);
        cfg.initial = self.initial_states()?;
        cfg.k_c = self.phase_one.k_c;
        cfg.epsilon = self.phase_one.epsilon;
        cfg.sync_budget_periods = self.phase_one.budget_periods;
        cfg.sync_test = self.phase_one.test;
        cfg.samples = self.schedule.samples;
        cfg.omega = self.schedule.omega;
        cfg.dt = self.schedule.dt;
        cfg.n_periods = self.simulation.periods;
        cfg.solver = self.solver;
        cfg.hybrid = self.hybrid.as_ref().map(|h| HybridOptions {
            error_threshold: h.error_threshold,
            resync_epsilon: h.resync_epsilon.unwrap_or(self.phase_one.epsilon),
        });
        let s = &cfg.solver;
        if !(s.max_gain > 0.0 && s.gap_tol > 0.0 && s.barrier_growth > 1.0 && s.max_newton_steps > 0) {
            return Err(CliError::Config(
                "solver: need max_gain > 0, gap_tol > 0, barrier_growth > 1, max_newton_steps > 0".into(),
            ));
        }
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

/// Uniform draws from [−3, 3]² with a ChaCha8 stream.
pub fn random_initial_states(n: usize, seed: u64) -> Vec<LocalState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| LocalState::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))).collect()
}
