//! Log-barrier interior-point method for the per-sample gain problem.
//!
//! Decision vector `z = (k_1, ..., k_m, α, β)` with `m = 2|E|`. The barrier
//!
//! ```text
//! φ_t(z) = t (α + ω β) − log det(α I − S(k)) − Σ log k_e − Σ log(β − k_e) − log(k_max − β)
//! ```
//!
//! is minimized by damped Newton steps for an increasing sequence of `t`.
//! Because `S(k) = S_0 − Σ k_e G_e` is affine, `log det` has the closed-form
//! gradient `−tr(F⁻¹ F_e)` and Hessian `tr(F⁻¹ F_a F⁻¹ F_b)`. On exit the
//! duality gap is at most `ν / t` with `ν = 2n + 2m + 1`.

use alloc::vec;
use alloc::vec::Vec;

use libm::log;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix2};

use super::{check_blocks, lambda_max, lyapunov_form, symmetrize, SyncMetric};
use crate::error::{domain, Result};
use crate::graph::{CouplingGraph, EdgeGainSet};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SolverOptions {
    /// Upper bound on every gain entry (box constraint, keeps ω = 0 bounded).
    pub max_gain: f64,
    /// Relative duality-gap tolerance.
    pub gap_tol: f64,
    /// Factor by which the barrier weight grows between centering passes.
    pub barrier_growth: f64,
    /// Total Newton-step budget.
    pub max_newton_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_gain: 1e4, gap_tol: 1e-7, barrier_growth: 20.0, max_newton_steps: 4000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SolveStatus {
    Converged,
    /// Newton budget ran out; the result is the best feasible iterate seen.
    IterationLimit,
    /// Line search made no progress before the gap tolerance was met.
    Stalled,
}

/// Optimal gains of one sample with the tight α* = λ_max(S(K*)) and β* = max K*.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSolution {
    pub gains: EdgeGainSet,
    pub alpha: f64,
    pub beta: f64,
    pub objective: f64,
    pub status: SolveStatus,
}

impl SampleSolution {
    pub(crate) fn evaluate(
        a_blocks: &[Matrix2<f64>],
        g: &CouplingGraph,
        p: &SyncMetric,
        omega: f64,
        gains: EdgeGainSet,
        status: SolveStatus,
    ) -> Result<Self> {
        let alpha = lambda_max(&lyapunov_form(a_blocks, &gains, g, p)?);
        let beta = gains.max_entry();
        Ok(Self { gains, alpha, beta, objective: alpha + omega * beta, status })
    }
}

struct Problem {
    s0: DMatrix<f64>,
    // ∂S/∂k_e = −g[e]
    g: Vec<DMatrix<f64>>,
    omega: f64,
    cap: f64,
}

impl Problem {
    fn entries(&self) -> usize {
        self.g.len()
    }

    fn lmi(&self, z: &[f64]) -> DMatrix<f64> {
        let m = self.entries();
        let dim = self.s0.nrows();
        let mut f = DMatrix::identity(dim, dim) * z[m] - &self.s0;
        for (k, ge) in z[..m].iter().zip(&self.g) {
            f += ge * *k;
        }
        f
    }

    /// Barrier value and the LMI factorization, or `None` outside the domain.
    fn barrier(&self, z: &[f64], t: f64) -> Option<(f64, Cholesky<f64, Dyn>)> {
        let m = self.entries();
        let (alpha, beta) = (z[m], z[m + 1]);
        if beta >= self.cap {
            return None;
        }
        let mut scalar = -log(self.cap - beta);
        for &k in &z[..m] {
            if k <= 0.0 || k >= beta {
                return None;
            }
            scalar -= log(k) + log(beta - k);
        }
        let chol = Cholesky::new(self.lmi(z))?;
        let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|&d| log(d)).sum::<f64>();
        let val = t * (alpha + self.omega * beta) - logdet + scalar;
        val.is_finite().then_some((val, chol))
    }

    fn newton_system(&self, z: &[f64], t: f64, chol: &Cholesky<f64, Dyn>) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.entries();
        let nv = m + 2;
        let beta = z[m + 1];
        let finv = chol.inverse();
        // W_a = F⁻¹ F_a for a in k-entries, then α
        let mut w: Vec<DMatrix<f64>> = self.g.iter().map(|ge| &finv * ge).collect();
        w.push(finv.clone());

        let mut grad = DVector::zeros(nv);
        let mut hess = DMatrix::zeros(nv, nv);
        for a in 0..=m {
            grad[a] = -w[a].trace();
            for b in a..=m {
                let h = trace_of_product(&w[a], &w[b]);
                hess[(a, b)] = h;
                hess[(b, a)] = h;
            }
        }
        grad[m] += t;
        grad[m + 1] += t * self.omega + 1.0 / (self.cap - beta);
        hess[(m + 1, m + 1)] += 1.0 / ((self.cap - beta) * (self.cap - beta));
        for e in 0..m {
            let (lo, hi) = (z[e], beta - z[e]);
            grad[e] += -1.0 / lo + 1.0 / hi;
            grad[m + 1] -= 1.0 / hi;
            let h_hi = 1.0 / (hi * hi);
            hess[(e, e)] += 1.0 / (lo * lo) + h_hi;
            hess[(e, m + 1)] -= h_hi;
            hess[(m + 1, e)] -= h_hi;
            hess[(m + 1, m + 1)] += h_hi;
        }
        (grad, hess)
    }
}

const MAX_CENTERING_STEPS: usize = 100;

fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

fn solve_spd(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(c) = Cholesky::new(h.clone()) {
        return Some(c.solve(rhs));
    }
    // tiny Levenberg shift for nearly singular Hessians
    let scale = h.diagonal().iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-300);
    let mut shifted = h.clone();
    for i in 0..h.nrows() {
        shifted[(i, i)] += 1e-12 * scale;
    }
    Cholesky::new(shifted).map(|c| c.solve(rhs))
}

/// Minimizes λ_max(S(K)) + ω·max K over 0 ≤ K ≤ `opts.max_gain`.
pub fn optimize_gains_at_sample(
    a_blocks: &[Matrix2<f64>],
    g: &CouplingGraph,
    p: &SyncMetric,
    omega: f64,
    opts: &SolverOptions,
) -> Result<SampleSolution> {
    check_blocks(a_blocks, g, p)?;
    if !(omega >= 0.0 && omega.is_finite()) {
        return Err(domain("weighting factor must be finite and >= 0"));
    }
    if !(opts.max_gain > 0.0 && opts.gap_tol > 0.0 && opts.barrier_growth > 1.0) {
        return Err(domain("solver options need max_gain > 0, gap_tol > 0, barrier_growth > 1"));
    }

    let zero = EdgeGainSet::zeros(g);
    let s0 = lyapunov_form(a_blocks, &zero, g, p)?;
    let m = 2 * g.edge_count();
    let n2 = s0.nrows();
    let pm = p.matrix();
    let unit = |e: usize| {
        let (i, j) = g.edges()[e / 2];
        let d = e % 2;
        let mut l = DMatrix::zeros(n2, n2);
        l[(2 * i + d, 2 * i + d)] = 1.0;
        l[(2 * i + d, 2 * j + d)] = -1.0;
        let pl = pm * l;
        let mut ge = pl.transpose() + pl;
        symmetrize(&mut ge);
        ge
    };
    let problem = Problem { s0: s0.clone(), g: (0..m).map(unit).collect(), omega, cap: opts.max_gain };

    let witness = SampleSolution::evaluate(a_blocks, g, p, omega, zero, SolveStatus::Converged)?;

    let k0 = (opts.max_gain / 4.0).min(1.0);
    let mut z = vec![k0; m];
    let start_gains = EdgeGainSet::uniform(g, k0);
    let alpha0 = lambda_max(&lyapunov_form(a_blocks, &start_gains, g, p)?);
    z.push(alpha0 + 1.0 + 0.1 * alpha0.abs());
    z.push((2.0 * k0).min(0.5 * (k0 + opts.max_gain)));

    let nu = (n2 + 2 * m + 1) as f64;
    let obj0 = z[m] + omega * z[m + 1];
    let mut t = nu / obj0.abs().max(1.0);
    let mut steps = 0usize;
    let mut status = SolveStatus::Converged;

    'outer: loop {
        // centering
        for _ in 0..MAX_CENTERING_STEPS {
            let Some((val, chol)) = problem.barrier(&z, t) else {
                return Err(domain("barrier iterate left the feasible region"));
            };
            let (grad, hess) = problem.newton_system(&z, t, &chol);
            let Some(dz) = solve_spd(&hess, &(-&grad)) else { break };
            let decrement = -grad.dot(&dz);
            if !(decrement > 1e-8) {
                break;
            }
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = z.iter().zip(dz.iter()).map(|(a, d)| a + step * d).collect();
                if let Some((tv, _)) = problem.barrier(&trial, t) {
                    if tv <= val - 0.25 * step * decrement {
                        z = trial;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            steps += 1;
            if steps >= opts.max_newton_steps {
                status = SolveStatus::IterationLimit;
                break 'outer;
            }
            if !accepted {
                status = SolveStatus::Stalled;
                break 'outer;
            }
        }
        let obj = z[m] + omega * z[m + 1];
        if nu / t <= opts.gap_tol * obj.abs().max(1.0) {
            break;
        }
        t *= opts.barrier_growth;
    }

    let gains = EdgeGainSet::from_entries(g, z[..m].chunks(2).map(|c| [c[0].max(0.0), c[1].max(0.0)]).collect())?;
    let sol = SampleSolution::evaluate(a_blocks, g, p, omega, gains, status)?;
    Ok(if sol.objective <= witness.objective { sol } else { SampleSolution { status, ..witness } })
}
