//! Directed coupling topology.
//!
//! An edge `(i, j)` is the directed edge e_ij: oscillator `i` receives the
//! state of oscillator `j` (so `j` is an in-neighbor of `i`). Nodes are
//! indexed from zero.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{domain, Result};

/// One diagonal 2×2 gain matrix, stored as its two diagonal entries.
pub type DiagGain = [f64; 2];

/// A directed, strongly connected graph without self-loops.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "RawGraph"))]
pub struct CouplingGraph {
    n: usize,
    // sorted, deduplicated (receiver, sender) pairs
    edges: Vec<(usize, usize)>,
}

#[cfg(feature = "serde")]
#[derive(serde::Deserialize)]
struct RawGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

#[cfg(feature = "serde")]
impl TryFrom<RawGraph> for CouplingGraph {
    type Error = crate::Error;

    fn try_from(raw: RawGraph) -> Result<Self> {
        Self::new(raw.n, raw.edges)
    }
}

impl CouplingGraph {
    /// Builds a graph from `(receiver, sender)` pairs. Duplicates are merged.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n < 2 {
            return Err(domain(format!("graph needs at least 2 nodes, got {n}")));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(domain(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            if i == j {
                return Err(domain(format!("self-loop on node {i}")));
            }
            set.insert((i, j));
        }
        let edges: Vec<_> = set.into_iter().collect();
        if !is_strongly_connected(n, &edges) {
            return Err(domain("graph is not strongly connected"));
        }
        Ok(Self { n, edges })
    }

    /// Path graph 0 - 1 - ... - (n-1) with both directions on every link.
    pub fn chain(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(domain(format!("chain needs at least 2 nodes, got {n}")));
        }
        let edges = (0..n - 1).flat_map(|i| [(i, i + 1), (i + 1, i)]);
        Self::new(n, edges)
    }

    /// All n(n-1) directed edges.
    pub fn complete(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(domain(format!("complete graph needs at least 2 nodes, got {n}")));
        }
        let edges = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)));
        Self::new(n, edges)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in canonical (sorted) order; gain sets are aligned to this order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_index(&self, edge: (usize, usize)) -> Option<usize> {
        self.edges.binary_search(&edge).ok()
    }

    /// In-neighbors of `i`, i.e. the senders of edges into `i`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.0 == i).map(|e| e.1)
    }

    /// Always true for a constructed graph.
    pub fn is_strongly_connected(&self) -> bool {
        is_strongly_connected(self.n, &self.edges)
    }

    /// L[i][i] = |N_i|, L[i][j] = -1 for every edge e_ij.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            l[(i, i)] += 1.0;
            l[(i, j)] -= 1.0;
        }
        l
    }
}

/// Reachability check in both directions from node 0.
pub fn is_strongly_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    if n == 0 {
        return false;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(i, j) in edges {
                let (from, to) = if forward { (j, i) } else { (i, j) };
                if from == v && to < n && !seen[to] {
                    seen[to] = true;
                    stack.push(to);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// One diagonal gain matrix per edge, aligned with [`CouplingGraph::edges`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EdgeGainSet {
    gains: Vec<DiagGain>,
}

impl EdgeGainSet {
    pub fn zeros(g: &CouplingGraph) -> Self {
        Self::uniform(g, 0.0)
    }

    /// k·I_2 on every edge.
    pub fn uniform(g: &CouplingGraph, k: f64) -> Self {
        Self { gains: vec![[k, k]; g.edge_count()] }
    }

    /// Gains listed in the graph's canonical edge order.
    pub fn from_entries(g: &CouplingGraph, gains: Vec<DiagGain>) -> Result<Self> {
        if gains.len() != g.edge_count() {
            return Err(domain(format!("expected {} edge gains, got {}", g.edge_count(), gains.len())));
        }
        for (e, k) in g.edges().iter().zip(&gains) {
            if !k.iter().all(|v| v.is_finite() && *v >= 0.0) {
                return Err(domain(format!("gain {k:?} on edge {e:?} must be finite and >= 0")));
            }
        }
        Ok(Self { gains })
    }

    /// Gains keyed by edge; every edge of `g` must appear exactly once.
    pub fn from_pairs(g: &CouplingGraph, pairs: impl IntoIterator<Item = ((usize, usize), DiagGain)>) -> Result<Self> {
        let mut slots: Vec<Option<DiagGain>> = vec![None; g.edge_count()];
        for (edge, k) in pairs {
            let idx = g.edge_index(edge).ok_or_else(|| domain(format!("gain given for non-existent edge {edge:?}")))?;
            if slots[idx].replace(k).is_some() {
                return Err(domain(format!("duplicate gain for edge {edge:?}")));
            }
        }
        let gains = slots
            .into_iter()
            .zip(g.edges())
            .map(|(k, e)| k.ok_or_else(|| domain(format!("missing gain for edge {e:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_entries(g, gains)
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn as_slice(&self) -> &[DiagGain] {
        &self.gains
    }

    pub fn get(&self, edge_idx: usize) -> DiagGain {
        self.gains[edge_idx]
    }

    /// All 2·|E| diagonal entries, edge-major.
    pub fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.gains.iter().flat_map(|k| k.iter().copied())
    }

    pub fn max_entry(&self) -> f64 {
        self.entries().fold(0.0, f64::max)
    }

    pub fn mean_entry(&self) -> f64 {
        if self.gains.is_empty() {
            return 0.0;
        }
        self.entries().sum::<f64>() / (2 * self.gains.len()) as f64
    }

    pub(crate) fn check_for(&self, g: &CouplingGraph) -> Result<()> {
        if self.gains.len() != g.edge_count() {
            return Err(domain(format!("gain set has {} edges, graph has {}", self.gains.len(), g.edge_count())));
        }
        Ok(())
    }
}

/// Block Laplacian with M_ii = Σ_j K_ij and M_ij = -K_ij for each edge.
pub fn build_lk(g: &CouplingGraph, gains: &EdgeGainSet) -> Result<DMatrix<f64>> {
    gains.check_for(g)?;
    let mut m = DMatrix::zeros(2 * g.node_count(), 2 * g.node_count());
    for (&(i, j), k) in g.edges().iter().zip(gains.as_slice()) {
        for d in 0..2 {
            m[(2 * i + d, 2 * i + d)] += k[d];
            m[(2 * i + d, 2 * j + d)] -= k[d];
        }
    }
    Ok(m)
}

/// The Kronecker product L ⊗ I_2.
pub fn kron_i2(l: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = l.shape();
    DMatrix::from_fn(2 * r, 2 * c, |a, b| if a % 2 == b % 2 { l[(a / 2, b / 2)] } else { 0.0 })
}
