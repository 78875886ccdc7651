use rayon::prelude::*;
use vdpsync_core::gain_opt::{solve_sample, sync_metric};
use vdpsync_core::{CouplingGraph, CycleSample, Error, GainSchedule, OscillatorSet, Result, SolverOptions};

/// Same result as `vdpsync_core::gain_opt::optimize_schedule`, with the f
/// independent subproblems spread over the rayon pool. On failure the error
/// of the lowest failing sample index is returned.
pub fn optimize_schedule_par(
    cycle: &CycleSample,
    osc: &OscillatorSet,
    g: &CouplingGraph,
    omega: f64,
    opts: &SolverOptions,
) -> Result<GainSchedule> {
    if osc.len() != g.node_count() {
        return Err(Error::Domain("oscillator count and graph size differ".into()));
    }
    let p = sync_metric(g.node_count())?;
    let results: Vec<Result<_>> =
        (0..cycle.count).into_par_iter().map(|l| solve_sample(cycle, osc, g, &p, omega, opts, l)).collect();
    let solutions = results.into_iter().collect::<Result<Vec<_>>>()?;
    GainSchedule::assemble(g.clone(), cycle.clone(), omega, solutions)
}
