//! Exhaustive grid search used to check the interior-point solver.
//!
//! Only problems with at most four gain entries are accepted. With no
//! self-loops and strong connectivity this means two nodes joined in both
//! directions, where the Lyapunov form depends on the two edge gains only
//! through their sum per coordinate: in the coordinates (x_1 + x_2, x_2 − x_1)
//! P annihilates the first block and L_K contributes −(K_12 + K_21) to the
//! difference block. Among grid splits of a fixed sum the most even one has
//! the smallest max entry, so scanning every pair of per-coordinate sums
//! reaches the grid optimum in (2N+1)² evaluations instead of (N+1)⁴.
//! [`grid_oracle_exhaustive`] walks every grid point literally and is used on
//! coarse grids to confirm the reduction.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::Matrix2;

use super::solver::{SampleSolution, SolveStatus};
use super::{check_blocks, lambda_max, lyapunov_form, SyncMetric};
use crate::error::{domain, Result};
use crate::graph::{CouplingGraph, EdgeGainSet};

const MAX_ENTRIES: usize = 4;

fn grid_len(grid_max: f64, grid_step: f64) -> Result<usize> {
    if !(grid_max >= 0.0 && grid_max.is_finite()) {
        return Err(domain("grid_max must be finite and >= 0"));
    }
    if grid_max == 0.0 {
        return Ok(0);
    }
    if !(grid_step > 0.0) {
        return Err(domain("grid_step must be > 0"));
    }
    Ok((grid_max / grid_step + 1e-9) as usize)
}

fn check_tractable(a_blocks: &[Matrix2<f64>], g: &CouplingGraph, p: &SyncMetric, omega: f64) -> Result<()> {
    check_blocks(a_blocks, g, p)?;
    if 2 * g.edge_count() > MAX_ENTRIES {
        return Err(domain(format!("grid oracle refuses {} gain entries (limit {MAX_ENTRIES})", 2 * g.edge_count())));
    }
    if !(omega >= 0.0 && omega.is_finite()) {
        return Err(domain("weighting factor must be finite and >= 0"));
    }
    Ok(())
}

fn objective(
    a_blocks: &[Matrix2<f64>],
    g: &CouplingGraph,
    p: &SyncMetric,
    omega: f64,
    gains: &EdgeGainSet,
) -> Result<f64> {
    let s = lyapunov_form(a_blocks, gains, g, p)?;
    Ok(lambda_max(&s) + omega * gains.max_entry())
}

/// Grid-best triple over entries in {0, step, ..., grid_max}.
pub fn grid_oracle(
    a_blocks: &[Matrix2<f64>],
    g: &CouplingGraph,
    p: &SyncMetric,
    omega: f64,
    grid_max: f64,
    grid_step: f64,
) -> Result<SampleSolution> {
    check_tractable(a_blocks, g, p, omega)?;
    let n = grid_len(grid_max, grid_step)?;
    let (fwd, bwd) = (g.edge_index((0, 1)), g.edge_index((1, 0)));
    let (Some(fwd), Some(bwd)) = (fwd, bwd) else {
        return Err(domain("grid oracle expects the bidirectional two-node graph"));
    };
    // split a sum of `s` grid units as evenly as possible
    let split = |s: usize| (s.div_ceil(2), s / 2);
    let mut best: Option<(f64, EdgeGainSet)> = None;
    let mut entries = [[0.0; 2]; 2];
    for s1 in 0..=2 * n {
        for s2 in 0..=2 * n {
            let (a1, b1) = split(s1);
            let (a2, b2) = split(s2);
            entries[fwd] = [a1 as f64 * grid_step, a2 as f64 * grid_step];
            entries[bwd] = [b1 as f64 * grid_step, b2 as f64 * grid_step];
            let gains = EdgeGainSet::from_entries(g, entries.to_vec())?;
            let obj = objective(a_blocks, g, p, omega, &gains)?;
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, gains));
            }
        }
    }
    let (_, gains) = best.expect("grid contains the origin");
    SampleSolution::evaluate(a_blocks, g, p, omega, gains, SolveStatus::Converged)
}

/// Literal scan of all (N+1)^(2|E|) grid points.
pub fn grid_oracle_exhaustive(
    a_blocks: &[Matrix2<f64>],
    g: &CouplingGraph,
    p: &SyncMetric,
    omega: f64,
    grid_max: f64,
    grid_step: f64,
) -> Result<SampleSolution> {
    check_tractable(a_blocks, g, p, omega)?;
    let n = grid_len(grid_max, grid_step)?;
    let dims = 2 * g.edge_count();
    let mut idx = [0usize; MAX_ENTRIES];
    let mut best: Option<(f64, EdgeGainSet)> = None;
    loop {
        let flat: Vec<f64> = idx[..dims].iter().map(|&i| i as f64 * grid_step).collect();
        let gains = EdgeGainSet::from_entries(g, flat.chunks(2).map(|c| [c[0], c[1]]).collect())?;
        let obj = objective(a_blocks, g, p, omega, &gains)?;
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, gains));
        }
        // odometer increment
        let mut d = 0;
        while d < dims {
            idx[d] += 1;
            if idx[d] <= n {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == dims {
            break;
        }
    }
    let (_, gains) = best.expect("grid contains the origin");
    SampleSolution::evaluate(a_blocks, g, p, omega, gains, SolveStatus::Converged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::linearize;
    use crate::gain_opt::sync_metric;
    use alloc::vec;
    use nalgebra::Vector2;

    fn setup(s: [f64; 2]) -> (Vec<Matrix2<f64>>, CouplingGraph, SyncMetric) {
        let s = Vector2::new(s[0], s[1]);
        let a = [0.5, 10.0].iter().map(|&m| linearize(&s, m).unwrap().a).collect();
        (a, CouplingGraph::chain(2).unwrap(), sync_metric(2).unwrap())
    }

    #[test]
    fn refuses_large_problems() {
        let g = CouplingGraph::chain(3).unwrap();
        let p = sync_metric(3).unwrap();
        let a = vec![Matrix2::zeros(); 3];
        assert!(grid_oracle(&a, &g, &p, 0.1, 10.0, 1.0).is_err());
        assert!(grid_oracle_exhaustive(&a, &g, &p, 0.1, 10.0, 1.0).is_err());
    }

    #[test]
    fn zero_grid_is_the_witness() {
        let (a, g, p) = setup([2.0, 0.0]);
        let sol = grid_oracle(&a, &g, &p, 0.01, 0.0, 0.5).unwrap();
        assert!(sol.gains.entries().all(|k| k == 0.0));
        let s0 = lambda_max(&lyapunov_form(&a, &EdgeGainSet::zeros(&g), &g, &p).unwrap());
        assert_eq!(sol.alpha, s0);
        assert_eq!(sol.beta, 0.0);
    }

    #[test]
    fn form_depends_only_on_edge_sums() {
        let (a, g, p) = setup([1.1, 2.7]);
        let x = EdgeGainSet::from_pairs(&g, [((0, 1), [3.0, 10.0]), ((1, 0), [5.0, 2.0])]).unwrap();
        let y = EdgeGainSet::from_pairs(&g, [((0, 1), [8.0, 0.0]), ((1, 0), [0.0, 12.0])]).unwrap();
        let sx = lyapunov_form(&a, &x, &g, &p).unwrap();
        let sy = lyapunov_form(&a, &y, &g, &p).unwrap();
        assert!((sx - sy).abs().max() < 1e-12);
    }

    #[test]
    fn reduced_scan_matches_literal_scan() {
        for (s, omega) in [([2.0, 0.0], 0.01), ([0.4, 3.5], 0.1), ([-1.5, -1.0], 0.001), ([1.0, 1.0], 1.0)] {
            let (a, g, p) = setup(s);
            let fast = grid_oracle(&a, &g, &p, omega, 300.0, 25.0).unwrap();
            let slow = grid_oracle_exhaustive(&a, &g, &p, omega, 300.0, 25.0).unwrap();
            assert!((fast.objective - slow.objective).abs() <= 1e-9 * slow.objective.abs().max(1.0));
        }
    }

    #[test]
    fn single_entry_convex_scan_is_within_a_step() {
        // one active coordinate: only the second coordinate of A differs
        let g = CouplingGraph::chain(2).unwrap();
        let p = sync_metric(2).unwrap();
        let a = vec![Matrix2::new(0.0, 0.0, 0.0, 1.0), Matrix2::new(0.0, 0.0, 0.0, 3.0)];
        let omega = 0.05;
        let step = 0.5;
        let grid = grid_oracle(&a, &g, &p, omega, 50.0, step).unwrap();
        // continuous minimizer by fine golden-section search over the even split
        let obj = |k: f64| {
            let gains = EdgeGainSet::from_entries(&g, vec![[0.0, k], [0.0, k]]).unwrap();
            objective(&a, &g, &p, omega, &gains).unwrap()
        };
        let (mut lo, mut hi) = (0.0, 50.0);
        let r = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let (c, d) = (hi - r * (hi - lo), lo + r * (hi - lo));
            if obj(c) < obj(d) {
                hi = d;
            } else {
                lo = c;
            }
        }
        let k_star = 0.5 * (lo + hi);
        assert!((grid.beta - k_star).abs() <= step, "grid {} vs {}", grid.beta, k_star);
    }
}
