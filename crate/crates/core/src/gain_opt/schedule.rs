use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::Matrix2;

use super::solver::{optimize_gains_at_sample, SampleSolution, SolveStatus, SolverOptions};
use super::{sync_metric, SyncMetric};
use crate::dynamics::{linearize, OscillatorSet};
use crate::error::{domain, Error, Result};
use crate::graph::{CouplingGraph, EdgeGainSet};
use crate::limit_cycle::CycleSample;

/// One period's worth of optimized edge gains, applied with zero-order hold.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GainSchedule {
    pub graph: CouplingGraph,
    pub cycle: CycleSample,
    pub omega: f64,
    pub per_sample: Vec<EdgeGainSet>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub statuses: Vec<SolveStatus>,
}

/// Period averages of a schedule.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScheduleStats {
    /// Per edge: both diagonal entries averaged over the period, then together.
    pub per_edge_avg: Vec<f64>,
    pub overall_avg: f64,
    pub max_beta: f64,
    pub mean_beta: f64,
    pub iteration_limited: usize,
}

impl GainSchedule {
    /// Assembles per-sample results in index order.
    pub fn assemble(
        graph: CouplingGraph,
        cycle: CycleSample,
        omega: f64,
        solutions: Vec<SampleSolution>,
    ) -> Result<Self> {
        if solutions.len() != cycle.count {
            return Err(domain(format!(
                "{} sample solutions for a cycle with {} samples",
                solutions.len(),
                cycle.count
            )));
        }
        let mut per_sample = Vec::with_capacity(solutions.len());
        let mut alphas = Vec::with_capacity(solutions.len());
        let mut betas = Vec::with_capacity(solutions.len());
        let mut statuses = Vec::with_capacity(solutions.len());
        for s in solutions {
            s.gains.check_for(&graph)?;
            per_sample.push(s.gains);
            alphas.push(s.alpha);
            betas.push(s.beta);
            statuses.push(s.status);
        }
        Ok(Self { graph, cycle, omega, per_sample, alphas, betas, statuses })
    }

    /// A schedule with the same gains at every sample.
    pub fn constant(graph: CouplingGraph, cycle: CycleSample, gains: EdgeGainSet) -> Result<Self> {
        gains.check_for(&graph)?;
        let f = cycle.count;
        let beta = gains.max_entry();
        Ok(Self {
            graph,
            cycle,
            omega: 0.0,
            per_sample: (0..f).map(|_| gains.clone()).collect(),
            alphas: alloc::vec![f64::NAN; f],
            betas: alloc::vec![beta; f],
            statuses: alloc::vec![SolveStatus::Converged; f],
        })
    }

    pub fn len(&self) -> usize {
        self.per_sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_sample.is_empty()
    }

    /// Checks the length, bound and sign invariants.
    pub fn validate(&self) -> Result<()> {
        let f = self.cycle.count;
        if self.per_sample.len() != f || self.alphas.len() != f || self.betas.len() != f || self.statuses.len() != f {
            return Err(domain("schedule length does not match its cycle"));
        }
        for (l, (gains, &beta)) in self.per_sample.iter().zip(&self.betas).enumerate() {
            gains.check_for(&self.graph)?;
            if !(beta >= 0.0) {
                return Err(domain(format!("sample {l}: negative bound {beta}")));
            }
            if gains.entries().any(|k| !(k >= 0.0 && k <= beta + 1e-7)) {
                return Err(domain(format!("sample {l}: gain outside [0, beta]")));
            }
        }
        Ok(())
    }

    pub fn stats(&self) -> ScheduleStats {
        let f = self.per_sample.len().max(1) as f64;
        let edges = self.graph.edge_count();
        let per_edge_avg: Vec<f64> = (0..edges)
            .map(|e| self.per_sample.iter().map(|s| 0.5 * (s.get(e)[0] + s.get(e)[1])).sum::<f64>() / f)
            .collect();
        let overall_avg = per_edge_avg.iter().sum::<f64>() / edges.max(1) as f64;
        ScheduleStats {
            per_edge_avg,
            overall_avg,
            max_beta: self.betas.iter().copied().fold(0.0, f64::max),
            mean_beta: self.betas.iter().sum::<f64>() / f,
            iteration_limited: self.statuses.iter().filter(|s| **s == SolveStatus::IterationLimit).count(),
        }
    }
}

/// Jacobians of every oscillator at cycle sample `l`.
pub fn sample_blocks(cycle: &CycleSample, osc: &OscillatorSet, l: usize) -> Result<Vec<Matrix2<f64>>> {
    let s = cycle.state(l);
    osc.mu().iter().map(|&mu| linearize(&s, mu).map(|lin| lin.a)).collect()
}

/// Solves the subproblem of sample `l`, tagging failures with the index.
pub fn solve_sample(
    cycle: &CycleSample,
    osc: &OscillatorSet,
    g: &CouplingGraph,
    p: &SyncMetric,
    omega: f64,
    opts: &SolverOptions,
    l: usize,
) -> Result<SampleSolution> {
    sample_blocks(cycle, osc, l)
        .and_then(|a| optimize_gains_at_sample(&a, g, p, omega, opts))
        .map_err(|e| Error::Sample { index: l, source: Box::new(e) })
}

/// Sequential schedule optimization over all f samples.
pub fn optimize_schedule(
    cycle: &CycleSample,
    osc: &OscillatorSet,
    g: &CouplingGraph,
    omega: f64,
    opts: &SolverOptions,
) -> Result<GainSchedule> {
    if osc.len() != g.node_count() {
        return Err(domain("oscillator count and graph size differ"));
    }
    let p = sync_metric(g.node_count())?;
    let solutions =
        (0..cycle.count).map(|l| solve_sample(cycle, osc, g, &p, omega, opts, l)).collect::<Result<Vec<_>>>()?;
    GainSchedule::assemble(g.clone(), cycle.clone(), omega, solutions)
}
