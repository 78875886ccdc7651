//! Lyapunov-based per-sample gain optimization.
//!
//! For a sample point on the blended cycle the network is linearized to
//! `ẋ = (A - L_K) x + b`. With the disagreement metric
//! `V(x) = xᵀ P x`, `P = (n I_n - 1 1ᵀ) ⊗ I_2`, each sample solves
//!
//! ```text
//! minimize    α + ω β
//! subject to  (A - L_K)ᵀ P + P (A - L_K) ⪯ α I
//!             0 ≤ k ≤ β   for every diagonal gain entry k
//! ```
//!
//! `L_K` is affine in the gain entries, so the problem is a small convex
//! semidefinite program; [`solver`] handles it with a log-barrier
//! interior-point method.

mod oracle;
mod schedule;
mod solver;

pub use oracle::{grid_oracle, grid_oracle_exhaustive};
pub use schedule::{optimize_schedule, sample_blocks, solve_sample, GainSchedule, ScheduleStats};
pub use solver::{optimize_gains_at_sample, SampleSolution, SolveStatus, SolverOptions};

use alloc::format;

use nalgebra::{DMatrix, Matrix2};

use crate::error::{domain, Result};
use crate::graph::{build_lk, CouplingGraph, EdgeGainSet};

/// The disagreement weight P.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncMetric(DMatrix<f64>);

impl SyncMetric {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn node_count(&self) -> usize {
        self.0.nrows() / 2
    }
}

/// P = (n·I_n − 1·1ᵀ) ⊗ I_2.
pub fn sync_metric(n: usize) -> Result<SyncMetric> {
    if n < 2 {
        return Err(domain(format!("metric needs n >= 2, got {n}")));
    }
    let m = DMatrix::from_fn(2 * n, 2 * n, |a, b| {
        if a % 2 != b % 2 {
            0.0
        } else if a / 2 == b / 2 {
            (n - 1) as f64
        } else {
            -1.0
        }
    });
    Ok(SyncMetric(m))
}

/// V(x) = xᵀ P x, the sum of squared distances over unordered pairs.
pub fn value_function(x: &[f64], p: &SyncMetric) -> Result<f64> {
    let m = p.matrix();
    if x.len() != m.nrows() {
        return Err(domain(format!("state has length {}, metric expects {}", x.len(), m.nrows())));
    }
    let mut v = 0.0;
    for (a, xa) in x.iter().enumerate() {
        for (b, xb) in x.iter().enumerate() {
            v += xa * m[(a, b)] * xb;
        }
    }
    Ok(v.max(0.0))
}

/// Block-diagonal A_l from the per-oscillator Jacobians.
pub fn block_diag(a_blocks: &[Matrix2<f64>]) -> DMatrix<f64> {
    let n = a_blocks.len();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for (i, blk) in a_blocks.iter().enumerate() {
        a.view_mut((2 * i, 2 * i), (2, 2)).copy_from(blk);
    }
    a
}

fn symmetrize(s: &mut DMatrix<f64>) {
    let t = s.transpose();
    *s += t;
    *s *= 0.5;
}

/// S = (A − L_K)ᵀ P + P (A − L_K), explicitly symmetrized.
pub fn lyapunov_form(
    a_blocks: &[Matrix2<f64>],
    gains: &EdgeGainSet,
    g: &CouplingGraph,
    p: &SyncMetric,
) -> Result<DMatrix<f64>> {
    check_blocks(a_blocks, g, p)?;
    let m = block_diag(a_blocks) - build_lk(g, gains)?;
    let pm = p.matrix() * &m;
    let mut s = pm.transpose() + pm;
    symmetrize(&mut s);
    Ok(s)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max(s: &DMatrix<f64>) -> f64 {
    s.symmetric_eigenvalues().max()
}

fn check_blocks(a_blocks: &[Matrix2<f64>], g: &CouplingGraph, p: &SyncMetric) -> Result<()> {
    if a_blocks.len() != g.node_count() || p.node_count() != g.node_count() {
        return Err(domain(format!(
            "{} Jacobian blocks, graph with {} nodes, metric for {} nodes",
            a_blocks.len(),
            g.node_count(),
            p.node_count()
        )));
    }
    if a_blocks.iter().any(|b| b.iter().any(|v| !v.is_finite())) {
        return Err(domain("Jacobian block has non-finite entries"));
    }
    Ok(())
}
