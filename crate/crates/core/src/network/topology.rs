use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::psd_sqrt;
use crate::rng::seeded;

/// Generator recipe for a [`Topology`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologyKind {
    Ring { m: usize },
    Star { m: usize },
    Complete { m: usize },
    Path { m: usize },
    Grid { rows: usize, cols: usize },
    ErdosRenyi { m: usize, p: f64, seed: u64 },
    Edges { m: usize, edges: Vec<(usize, usize)> },
}

/// Undirected connected graph without self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub m: usize,
    /// Each edge once, as `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
    pub kind: TopologyKind,
    neighbors: Vec<Vec<usize>>,
}

/// Attempts before an Erdős–Rényi generator gives up on connectivity.
pub const ER_MAX_ATTEMPTS: usize = 100;

impl Topology {
    pub fn build(kind: &TopologyKind) -> Result<Self> {
        let (m, edges) = match *kind {
            TopologyKind::Ring { m } => (m, (0..m).map(|i| (i, (i + 1) % m)).collect()),
            TopologyKind::Star { m } => (m, (1..m).map(|i| (0, i)).collect()),
            TopologyKind::Complete { m } => (m, (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect()),
            TopologyKind::Path { m } => (m, (1..m).map(|i| (i - 1, i)).collect()),
            TopologyKind::Grid { rows, cols } => {
                let mut e = Vec::new();
                for r in 0..rows {
                    for c in 0..cols {
                        let v = r * cols + c;
                        if c + 1 < cols {
                            e.push((v, v + 1));
                        }
                        if r + 1 < rows {
                            e.push((v, v + cols));
                        }
                    }
                }
                (rows * cols, e)
            }
            TopologyKind::ErdosRenyi { m, p, seed } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(invalid("p", "edge probability must lie in [0, 1]"));
                }
                let mut rng = seeded(seed);
                for _ in 0..ER_MAX_ATTEMPTS {
                    let e: Vec<(usize, usize)> =
                        (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).filter(|_| rng.random_bool(p)).collect();
                    if let Ok(t) = Self::from_edges(m, e, kind.clone()) {
                        return Ok(t);
                    }
                }
                return Err(Error::Disconnected);
            }
            TopologyKind::Edges { m, ref edges } => (m, edges.clone()),
        };
        Self::from_edges(m, edges, kind.clone())
    }

    pub fn ring(m: usize) -> Result<Self> {
        Self::build(&TopologyKind::Ring { m })
    }

    pub fn star(m: usize) -> Result<Self> {
        Self::build(&TopologyKind::Star { m })
    }

    pub fn complete(m: usize) -> Result<Self> {
        Self::build(&TopologyKind::Complete { m })
    }

    /// Normalises, deduplicates and checks connectivity.
    pub fn from_edges(m: usize, edges: Vec<(usize, usize)>, kind: TopologyKind) -> Result<Self> {
        if m == 0 {
            return Err(invalid("m", "need at least one node"));
        }
        let mut norm: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for (i, j) in edges {
            if i >= m || j >= m {
                return Err(invalid("edges", format!("edge ({i}, {j}) refers to a node outside 0..{m}")));
            }
            if i != j {
                norm.push((i.min(j), i.max(j)));
            }
        }
        norm.sort_unstable();
        norm.dedup();
        let mut neighbors = vec![Vec::new(); m];
        for &(i, j) in &norm {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        neighbors.iter_mut().for_each(|v| v.sort_unstable());
        let t = Self { m, edges: norm, kind, neighbors };
        if t.distances(0).iter().any(Option::is_none) {
            return Err(Error::Disconnected);
        }
        Ok(t)
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.m).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    fn distances(&self, src: usize) -> Vec<Option<usize>> {
        let mut d = vec![None; self.m];
        d[src] = Some(0);
        let mut q = VecDeque::from([src]);
        while let Some(v) = q.pop_front() {
            let dv = d[v].unwrap();
            for &u in &self.neighbors[v] {
                if d[u].is_none() {
                    d[u] = Some(dv + 1);
                    q.push_back(u);
                }
            }
        }
        d
    }

    /// Longest shortest path.
    pub fn diameter(&self) -> usize {
        (0..self.m).map(|s| self.distances(s).into_iter().flatten().max().unwrap_or(0)).max().unwrap_or(0)
    }
}

/// `W = D − adjacency` and the spectral quantities derived from it.
#[derive(Debug, Clone)]
pub struct LaplacianSpectrum {
    pub w: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `λ₂(W)`; zero for a single node.
    pub lambda2: f64,
    /// `‖W‖₂`
    pub norm: f64,
    /// `‖W‖₂ / λ₂(W)`; NaN for a single node.
    pub chi: f64,
    pub sqrt_w: DMatrix<f64>,
}

pub fn laplacian(topology: &Topology) -> Result<LaplacianSpectrum> {
    let m = topology.m;
    let mut w = DMatrix::zeros(m, m);
    for &(i, j) in &topology.edges {
        w[(i, j)] = -1.0;
        w[(j, i)] = -1.0;
        w[(i, i)] += 1.0;
        w[(j, j)] += 1.0;
    }
    let eigenvalues = crate::linalg::sym_eigenvalues(&w);
    let norm = eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
    let lambda2 = if m > 1 { eigenvalues[1] } else { 0.0 };
    if m > 1 && !(lambda2 > 1e-10 * norm.max(1.0)) {
        return Err(Error::Disconnected);
    }
    let chi = if m > 1 { norm / lambda2 } else { f64::NAN };
    let sqrt_w = psd_sqrt(&w);
    Ok(LaplacianSpectrum { w, eigenvalues, lambda2, norm, chi, sqrt_w })
}
