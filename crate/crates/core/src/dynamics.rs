//! Van der Pol vector fields: local, blended, and diffusively coupled.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix2, Vector2};

use crate::error::{domain, Result};
use crate::graph::{CouplingGraph, EdgeGainSet};

/// State of one oscillator, `[x1, x2]`.
pub type LocalState = Vector2<f64>;

/// The damping parameters μ_i of a heterogeneous oscillator population.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "RawOscillatorSet"))]
pub struct OscillatorSet {
    mu: Vec<f64>,
}

#[cfg(feature = "serde")]
#[derive(serde::Deserialize)]
struct RawOscillatorSet {
    mu: Vec<f64>,
}

#[cfg(feature = "serde")]
impl TryFrom<RawOscillatorSet> for OscillatorSet {
    type Error = crate::Error;

    fn try_from(raw: RawOscillatorSet) -> Result<Self> {
        Self::new(raw.mu)
    }
}

impl OscillatorSet {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.len() < 2 {
            return Err(domain(format!("need at least 2 oscillators, got {}", mu.len())));
        }
        if let Some(bad) = mu.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(domain(format!("damping parameter must be finite and > 0, got {bad}")));
        }
        Ok(Self { mu })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn mean_mu(&self) -> f64 {
        self.mu.iter().sum::<f64>() / self.mu.len() as f64
    }
}

/// Stacked local states `[x_1; ...; x_n]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GlobalState(Vec<f64>);

impl GlobalState {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.len() < 4 || !x.len().is_multiple_of(2) {
            return Err(domain(format!("global state length {} is not 2n with n >= 2", x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(domain("global state has non-finite entries"));
        }
        Ok(Self(x))
    }

    pub fn from_locals(locals: &[LocalState]) -> Result<Self> {
        Self::new(locals.iter().flat_map(|s| [s[0], s[1]]).collect())
    }

    pub fn node_count(&self) -> usize {
        self.0.len() / 2
    }

    pub fn local(&self, i: usize) -> LocalState {
        Vector2::new(self.0[2 * i], self.0[2 * i + 1])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Node average (1/n) Σ x_i.
    pub fn mean(&self) -> LocalState {
        mean_local(&self.0)
    }
}

/// A_{i,l} and b_{i,l} of the first-order expansion at a cycle point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedLocal {
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
}

/// Unchecked Van der Pol field; see [`vdp_rhs`] for the validating form.
#[inline]
pub fn vdp_field(x1: f64, x2: f64, mu: f64) -> [f64; 2] {
    [x2, -x1 + mu * (1.0 - x1 * x1) * x2]
}

fn check_local(state: &LocalState, mu: f64) -> Result<()> {
    if !(state.iter().all(|v| v.is_finite()) && mu.is_finite()) {
        return Err(domain("non-finite oscillator state or parameter"));
    }
    if mu <= 0.0 {
        return Err(domain(format!("damping parameter must be > 0, got {mu}")));
    }
    Ok(())
}

/// f_i(x) = [x2, -x1 + μ(1 - x1²) x2].
pub fn vdp_rhs(state: &LocalState, mu: f64) -> Result<LocalState> {
    check_local(state, mu)?;
    let [a, b] = vdp_field(state[0], state[1], mu);
    Ok(Vector2::new(a, b))
}

/// ∂f_i/∂x evaluated at `state`.
pub fn vdp_jacobian(state: &LocalState, mu: f64) -> Result<Matrix2<f64>> {
    check_local(state, mu)?;
    let (x1, x2) = (state[0], state[1]);
    Ok(Matrix2::new(0.0, 1.0, -1.0 - 2.0 * mu * x1 * x2, mu * (1.0 - x1 * x1)))
}

/// Tangent model `ẋ ≈ A x + b` of f_i around `s`.
pub fn linearize(s: &LocalState, mu: f64) -> Result<LinearizedLocal> {
    let a = vdp_jacobian(s, mu)?;
    let b = vdp_rhs(s, mu)? - a * s;
    Ok(LinearizedLocal { a, b })
}

/// Node-averaged vector field (1/n) Σ f_i(s).
pub fn blended_rhs(state: &LocalState, osc: &OscillatorSet) -> Result<LocalState> {
    check_local(state, osc.mean_mu())?;
    let n = osc.len() as f64;
    let sum = osc
        .mu()
        .iter()
        .map(|&m| {
            let [a, b] = vdp_field(state[0], state[1], m);
            Vector2::new(a, b)
        })
        .fold(Vector2::zeros(), |acc, v| acc + v);
    Ok(sum / n)
}

/// How the neighbors are coupled at a given instant.
#[derive(Debug, Clone, Copy)]
pub enum Coupling<'a> {
    /// k_c on every edge and both coordinates.
    Static(f64),
    /// Edge-wise diagonal gains.
    Scheduled(&'a EdgeGainSet),
}

/// Writes f(x) + u(x) into `out` for the nonlinear coupled network.
///
/// No validation; callers check dimensions once up front.
pub(crate) fn coupled_field(
    osc: &OscillatorSet,
    g: &CouplingGraph,
    coupling: Coupling<'_>,
    x: &[f64],
    out: &mut [f64],
) {
    for (i, &mu) in osc.mu().iter().enumerate() {
        let [a, b] = vdp_field(x[2 * i], x[2 * i + 1], mu);
        out[2 * i] = a;
        out[2 * i + 1] = b;
    }
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        let k = match coupling {
            Coupling::Static(k) => [k, k],
            Coupling::Scheduled(gains) => gains.get(e),
        };
        out[2 * i] += k[0] * (x[2 * j] - x[2 * i]);
        out[2 * i + 1] += k[1] * (x[2 * j + 1] - x[2 * i + 1]);
    }
}

pub(crate) fn blended_field(osc: &OscillatorSet, s: &[f64], out: &mut [f64]) {
    let [a, b] = vdp_field(s[0], s[1], osc.mean_mu());
    out[0] = a;
    out[1] = b;
}

pub(crate) fn mean_local(x: &[f64]) -> LocalState {
    let n = x.len() / 2;
    let mut m = Vector2::zeros();
    for i in 0..n {
        m[0] += x[2 * i];
        m[1] += x[2 * i + 1];
    }
    m / n as f64
}

fn check_network(x: &GlobalState, osc: &OscillatorSet, g: &CouplingGraph) -> Result<()> {
    if x.node_count() != osc.len() || g.node_count() != osc.len() {
        return Err(domain(format!(
            "dimension mismatch: state has {} nodes, {} oscillators, graph has {} nodes",
            x.node_count(),
            osc.len(),
            g.node_count()
        )));
    }
    Ok(())
}

/// f(x) - k_c (L ⊗ I_2) x.
pub fn coupled_rhs_static(x: &GlobalState, osc: &OscillatorSet, g: &CouplingGraph, k_c: f64) -> Result<Vec<f64>> {
    check_network(x, osc, g)?;
    if !(k_c.is_finite() && k_c >= 0.0) {
        return Err(domain(format!("coupling gain must be finite and >= 0, got {k_c}")));
    }
    let mut out = vec![0.0; x.as_slice().len()];
    coupled_field(osc, g, Coupling::Static(k_c), x.as_slice(), &mut out);
    Ok(out)
}

/// Stack of f_i(x_i) + Σ_j K_ij (x_j - x_i), nonlinear f_i.
pub fn coupled_rhs_scheduled(
    x: &GlobalState,
    osc: &OscillatorSet,
    g: &CouplingGraph,
    gains: &EdgeGainSet,
) -> Result<Vec<f64>> {
    check_network(x, osc, g)?;
    gains.check_for(g)?;
    let mut out = vec![0.0; x.as_slice().len()];
    coupled_field(osc, g, Coupling::Scheduled(gains), x.as_slice(), &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(a: f64, b: f64) -> LocalState {
        Vector2::new(a, b)
    }

    fn uncoupled(x: &GlobalState, osc: &OscillatorSet) -> Vec<f64> {
        (0..osc.len())
            .flat_map(|i| {
                let f = vdp_rhs(&x.local(i), osc.mu()[i]).unwrap();
                [f[0], f[1]]
            })
            .collect()
    }

    #[test]
    fn rhs_examples() {
        assert_eq!(vdp_rhs(&v(2.0, 0.0), 0.5).unwrap(), v(0.0, -2.0));
        assert_eq!(vdp_rhs(&v(0.0, 1.0), 3.0).unwrap(), v(1.0, 3.0));
        assert_eq!(vdp_rhs(&v(1.0, 1.0), 10.0).unwrap(), v(1.0, -1.0));
        assert!(vdp_rhs(&v(f64::NAN, 0.0), 1.0).is_err());
        assert!(vdp_rhs(&v(0.0, f64::INFINITY), 1.0).is_err());
        assert!(vdp_rhs(&v(0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn jacobian_examples() {
        assert_eq!(vdp_jacobian(&v(2.0, 0.0), 1.0).unwrap(), Matrix2::new(0., 1., -1., -3.));
        for mu in [0.5, 3.0, 7.0] {
            assert_eq!(vdp_jacobian(&v(0.0, 0.0), mu).unwrap(), Matrix2::new(0., 1., -1., mu));
        }
        assert_eq!(vdp_jacobian(&v(1.0, 1.0), 2.0).unwrap(), Matrix2::new(0., 1., -5., 0.));
    }

    #[test]
    fn linearize_examples() {
        let l = linearize(&v(2.0, 0.0), 1.0).unwrap();
        assert_eq!(l.a, Matrix2::new(0., 1., -1., -3.));
        assert_eq!(l.b, v(0.0, 0.0));
        let l = linearize(&v(1.0, 1.0), 2.0).unwrap();
        assert_eq!(l.a, Matrix2::new(0., 1., -5., 0.));
        assert_eq!(l.b, v(0.0, 4.0));
        assert_eq!(linearize(&v(0.0, 0.0), 5.0).unwrap().b, v(0.0, 0.0));
    }

    #[test]
    fn blended_examples() {
        let osc = OscillatorSet::new(vec![0.5, 3.0, 6.0, 10.0]).unwrap();
        assert_eq!(osc.mean_mu(), 4.875);
        let s = v(0.7, -1.3);
        let b = blended_rhs(&s, &osc).unwrap();
        assert!((b - vdp_rhs(&s, 4.875).unwrap()).norm() < 1e-14);
        let homo = OscillatorSet::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(blended_rhs(&v(2.0, 0.0), &homo).unwrap(), v(0.0, -2.0));
        assert_eq!(blended_rhs(&v(0.0, 0.0), &osc).unwrap(), v(0.0, 0.0));
    }

    #[test]
    fn oscillator_set_invariants() {
        assert!(OscillatorSet::new(vec![1.0]).is_err());
        assert!(OscillatorSet::new(vec![1.0, 0.0]).is_err());
        assert!(OscillatorSet::new(vec![1.0, f64::NAN]).is_err());
        assert!(GlobalState::new(vec![1.0, 2.0, 3.0]).is_err());
        assert!(GlobalState::new(vec![1.0, 2.0, 3.0, f64::NAN]).is_err());
    }

    #[test]
    fn coupled_static_examples() {
        let osc = OscillatorSet::new(vec![0.5, 3.0]).unwrap();
        let g = CouplingGraph::chain(2).unwrap();
        let x = GlobalState::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let f = uncoupled(&x, &osc);
        assert_eq!(coupled_rhs_static(&x, &osc, &g, 0.0).unwrap(), f);
        let got = coupled_rhs_static(&x, &osc, &g, 1.0).unwrap();
        let expect: Vec<f64> = f.iter().zip([-1.0, 0.0, 1.0, 0.0]).map(|(a, b)| a + b).collect();
        assert_eq!(got, expect);

        let g4 = CouplingGraph::chain(4).unwrap();
        assert!(coupled_rhs_static(&x, &osc, &g4, 1.0).is_err());
        assert!(coupled_rhs_static(&x, &osc, &g, -1.0).is_err());
    }

    #[test]
    fn scheduled_gain_for_wrong_graph_is_rejected() {
        let osc = OscillatorSet::new(vec![1.0, 2.0, 3.0]).unwrap();
        let chain = CouplingGraph::chain(3).unwrap();
        let full = CouplingGraph::complete(3).unwrap();
        let x = GlobalState::new(vec![1.0; 6]).unwrap();
        assert!(coupled_rhs_scheduled(&x, &osc, &chain, &EdgeGainSet::zeros(&full)).is_err());
    }

    fn finite_diff_jacobian(s: LocalState, mu: f64) -> Matrix2<f64> {
        let h = 1e-5;
        let mut j = Matrix2::zeros();
        for c in 0..2 {
            let mut e = Vector2::zeros();
            e[c] = h;
            let d = (vdp_rhs(&(s + e), mu).unwrap() - vdp_rhs(&(s - e), mu).unwrap()) / (2.0 * h);
            j.set_column(c, &d);
        }
        j
    }

    proptest! {
        #[test]
        fn jacobian_matches_central_differences(
            x1 in -3.0..3.0f64, x2 in -8.0..8.0f64, mu in 0.01..10.0f64
        ) {
            let s = v(x1, x2);
            let diff = vdp_jacobian(&s, mu).unwrap() - finite_diff_jacobian(s, mu);
            prop_assert!(diff.abs().max() < 1e-6);
        }

        #[test]
        fn linearization_is_exact_at_expansion_point(
            x1 in -3.0..3.0f64, x2 in -8.0..8.0f64, mu in 0.01..10.0f64
        ) {
            let s = v(x1, x2);
            let l = linearize(&s, mu).unwrap();
            prop_assert_eq!(l.a[(0, 0)], 0.0);
            prop_assert_eq!(l.a[(0, 1)], 1.0);
            let f = vdp_rhs(&s, mu).unwrap();
            prop_assert!((l.a * s + l.b - f).norm() <= 1e-12 * (1.0 + f.norm()));
        }

        #[test]
        fn blended_equals_mean_parameter(
            x1 in -3.0..3.0f64, x2 in -8.0..8.0f64,
            mu in proptest::collection::vec(0.01..10.0f64, 2..6)
        ) {
            let osc = OscillatorSet::new(mu).unwrap();
            let s = v(x1, x2);
            let b = blended_rhs(&s, &osc).unwrap();
            let d = vdp_rhs(&s, osc.mean_mu()).unwrap();
            prop_assert!((b - d).norm() <= 1e-12 * (1.0 + d.norm()));
        }

        #[test]
        fn uniform_schedule_matches_static(
            xs in proptest::collection::vec(-3.0..3.0f64, 8), k in 0.0..300.0f64, full in any::<bool>()
        ) {
            let osc = OscillatorSet::new(vec![0.5, 3.0, 6.0, 10.0]).unwrap();
            let g = if full { CouplingGraph::complete(4) } else { CouplingGraph::chain(4) }.unwrap();
            let x = GlobalState::new(xs).unwrap();
            let a = coupled_rhs_static(&x, &osc, &g, k).unwrap();
            let b = coupled_rhs_scheduled(&x, &osc, &g, &EdgeGainSet::uniform(&g, k)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn consensus_states_see_no_coupling(
            x1 in -3.0..3.0f64, x2 in -8.0..8.0f64, k in 0.0..300.0f64,
            gains in proptest::collection::vec((0.0..300.0f64, 0.0..300.0f64), 6)
        ) {
            let osc = OscillatorSet::new(vec![0.5, 3.0, 6.0, 10.0]).unwrap();
            let g = CouplingGraph::chain(4).unwrap();
            let x = GlobalState::from_locals(&[v(x1, x2); 4]).unwrap();
            let f = uncoupled(&x, &osc);
            prop_assert_eq!(coupled_rhs_static(&x, &osc, &g, k).unwrap(), f.clone());
            let gains = EdgeGainSet::from_entries(&g, gains.into_iter().map(|(a, b)| [a, b]).collect()).unwrap();
            prop_assert_eq!(coupled_rhs_scheduled(&x, &osc, &g, &gains).unwrap(), f);
        }
    }
}
