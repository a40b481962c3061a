//! Sensor communication graphs, doubly stochastic consensus weights and
//! their convergence diagnostics.

use std::collections::{BTreeSet, VecDeque};
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg;

/// Entries of a weight power at or below this are treated as structural zeros.
pub const STRUCTURAL_ZERO: f64 = 1e-12;

/// Undirected communication graph over nodes `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    positions: Option<Vec<[f64; 2]>>,
}

impl SensorGraph {
    /// Builds a graph from undirected 0-based edges; self-loops are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!("edge ({i}, {j}) out of range for {n} nodes")));
            }
            if i == j {
                return Err(Error::InvalidInput(format!("self-edge at node {i}")));
            }
            set.insert((i.min(j), i.max(j)));
        }
        Ok(Self {
            n,
            edges: set,
            positions: None,
        })
    }

    pub fn with_positions(mut self, positions: Vec<[f64; 2]>) -> Result<Self> {
        if positions.len() != self.n {
            return Err(Error::Dimension(format!("{} positions for {} nodes", positions.len(), self.n)));
        }
        self.positions = Some(positions);
        Ok(self)
    }

    pub fn complete(n: usize) -> Self {
        Self::new(n, (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))).unwrap()
    }

    pub fn path(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i - 1, i))).unwrap()
    }

    pub fn cycle(n: usize) -> Self {
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap()
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn positions(&self) -> Option<&[[f64; 2]]> {
        self.positions.as_deref()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency().iter().map(Vec::len).collect()
    }

    fn bfs(&self, adj: &[Vec<usize>], source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Connectivity of the undirected graph, which for symmetric links is
    /// the same as strong connectivity.
    pub fn is_strongly_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let adj = self.adjacency();
        self.bfs(&adj, 0).iter().all(Option::is_some)
    }

    /// Longest shortest path between two nodes.
    pub fn diameter(&self) -> Result<usize> {
        let adj = self.adjacency();
        let mut d = 0;
        for s in 0..self.n {
            for dist in self.bfs(&adj, s) {
                d = d.max(dist.ok_or(Error::Disconnected)?);
            }
        }
        if self.n == 0 {
            return Err(Error::Disconnected);
        }
        Ok(d)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GraphConfig::from(self)).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: GraphConfig = serde_json::from_str(text).map_err(|source| Error::Json {
            context: "graph".into(),
            source,
        })?;
        config.build()
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(&GraphConfig::from(self)).unwrap());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// JSON form of a graph. Node ids are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 2]>>,
}

impl From<&SensorGraph> for GraphConfig {
    fn from(g: &SensorGraph) -> Self {
        Self {
            n: g.n,
            edges: g.edges().map(|(i, j)| [i + 1, j + 1]).collect(),
            positions: g.positions.clone(),
        }
    }
}

impl GraphConfig {
    pub fn build(&self) -> Result<SensorGraph> {
        if self.edges.iter().flatten().any(|&v| v == 0 || v > self.n) {
            return Err(Error::InvalidInput(format!("edge endpoints must lie in 1..={}", self.n)));
        }
        let g = SensorGraph::new(self.n, self.edges.iter().map(|&[i, j]| (i - 1, j - 1)))?;
        match &self.positions {
            Some(p) => g.with_positions(p.clone()),
            None => Ok(g),
        }
    }
}

/// Nodes uniform in `[0, side]^2`, linked when their distance is at most `radius`.
pub fn random_geometric_graph(n: usize, side: f64, radius: f64, seed: u64) -> Result<SensorGraph> {
    if n == 0 {
        return Err(Error::InvalidInput("graph needs at least one node".into()));
    }
    if !(radius > 0.0) || !(side >= 0.0) {
        return Err(Error::InvalidInput("radius must be positive and side nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side])
        .collect();
    geometric_graph(positions, radius)
}

/// Graph linking every pair of positions within `radius`.
pub fn geometric_graph(positions: Vec<[f64; 2]>, radius: f64) -> Result<SensorGraph> {
    let n = positions.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (dx, dy) = (positions[i][0] - positions[j][0], positions[i][1] - positions[j][1]);
            if dx.hypot(dy) <= radius {
                edges.push((i, j));
            }
        }
    }
    SensorGraph::new(n, edges)?.with_positions(positions)
}

/// First connected random geometric graph for seeds `seed, seed + 1, ...`.
pub fn connected_random_geometric_graph(
    n: usize,
    side: f64,
    radius: f64,
    seed: u64,
    max_attempts: u64,
) -> Result<(SensorGraph, u64)> {
    for s in seed..seed.saturating_add(max_attempts) {
        let g = random_geometric_graph(n, side, radius, s)?;
        if g.is_strongly_connected() {
            return Ok((g, s));
        }
    }
    Err(Error::Disconnected)
}

/// Doubly stochastic fusion matrix `L = [l_ij]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusWeights {
    matrix: DMatrix<f64>,
}

impl ConsensusWeights {
    /// Validates nonnegativity and unit row and column sums (within 1e-12).
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.is_empty() {
            return Err(Error::Dimension("weight matrix must be square and nonempty".into()));
        }
        if matrix.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        let n = matrix.nrows();
        for i in 0..n {
            let row: f64 = matrix.row(i).sum();
            let col: f64 = matrix.column(i).sum();
            if (row - 1.0).abs() > 1e-12 || (col - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "weights are not doubly stochastic at index {i} (row {row}, column {col})"
                )));
            }
        }
        Ok(Self { matrix })
    }

    /// Uniform averaging `(1/N) 1 1^T`.
    pub fn averaging(n: usize) -> Self {
        Self {
            matrix: DMatrix::from_element(n, n, 1.0 / n as f64),
        }
    }

    /// Also checks that positive off-diagonal weights sit on graph edges.
    pub fn for_graph(matrix: DMatrix<f64>, graph: &SensorGraph) -> Result<Self> {
        let w = Self::new(matrix)?;
        if w.node_count() != graph.node_count() {
            return Err(Error::Dimension("weights and graph disagree on node count".into()));
        }
        for i in 0..w.node_count() {
            for j in 0..w.node_count() {
                if i != j && w.matrix[(i, j)] > 0.0 && !graph.has_edge(i, j) {
                    return Err(Error::InvalidInput(format!(
                        "weight l_{{{},{}}} > 0 without an edge",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(w)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn node_count(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// Nodes `j` with `l_ij > 0`, i.e. the ones node `i` reads from.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.node_count()).filter(|&j| self.matrix[(i, j)] > 0.0).collect()
    }

    /// Graph implied by the positive off-diagonal weights.
    pub fn support_graph(&self) -> SensorGraph {
        let n = self.node_count();
        SensorGraph::new(
            n,
            (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| i != j && self.matrix[(i, j)] > 0.0),
        )
        .unwrap()
    }

    /// `L^steps` with its support mask.
    pub fn power(&self, steps: usize) -> WeightPower {
        weight_power(self, steps)
    }

    /// Row-major CSV with a header row of 1-based node ids.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        let n = self.node_count();
        let header: Vec<String> = (1..=n).map(|j| j.to_string()).collect();
        writeln!(out, "{}", header.join(",")).unwrap();
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{:?}", self.matrix[(i, j)])).collect();
            writeln!(out, "{}", row.join(",")).unwrap();
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Metropolis-Hastings weights: `1 / (1 + max(deg_i, deg_j))` on edges, the
/// diagonal takes the remainder of each row.
pub fn metropolis_weights(graph: &SensorGraph) -> Result<ConsensusWeights> {
    if !graph.is_strongly_connected() {
        return Err(Error::Disconnected);
    }
    let n = graph.node_count();
    let deg = graph.degrees();
    let mut m = DMatrix::zeros(n, n);
    for (i, j) in graph.edges() {
        let w = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
        m[(i, j)] = w;
        m[(j, i)] = w;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
        m[(i, i)] = 1.0 - off;
    }
    ConsensusWeights::for_graph(m, graph)
}

/// `L^steps` plus the entries counted as structurally nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPower {
    pub steps: usize,
    pub matrix: DMatrix<f64>,
    pub support: Vec<Vec<bool>>,
}

impl WeightPower {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn is_full(&self) -> bool {
        self.support.iter().flatten().all(|&s| s)
    }
}

pub fn weight_power(weights: &ConsensusWeights, steps: usize) -> WeightPower {
    let n = weights.node_count();
    let mut matrix = DMatrix::identity(n, n);
    for _ in 0..steps {
        matrix = weights.matrix() * &matrix;
    }
    let support = (0..n)
        .map(|i| (0..n).map(|j| matrix[(i, j)] > STRUCTURAL_ZERO).collect())
        .collect();
    WeightPower {
        steps,
        matrix,
        support,
    }
}

/// Second eigenvalue modulus and a geometric envelope of `||L^k - (1/N) 1 1^T||_2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDiagnostics {
    pub sigma2: f64,
    /// Envelope constant `M`.
    pub m: f64,
    /// Envelope rate `q`.
    pub q: f64,
    /// `||L^k - J||_2` for `k = 0..=k_max`.
    pub deviations: Vec<f64>,
}

/// Deviations below this are indistinguishable from rounding and bound by any envelope.
const DEVIATION_FLOOR: f64 = 1e-13;
const RATE_GRID_STEP: f64 = 1e-3;

/// Computes `sigma_2` from the full spectrum and fits `(M, q)` with
/// `||L^k - J||_2 <= M q^k` for all `k <= k_max`.
///
/// `q` is the least-squares decay rate of the log-deviations over the second
/// half of the horizon, rounded up to a `1e-3` grid; `M` is then the smallest
/// constant making the envelope hold at every `k`.
pub fn spectral_diagnostics(weights: &ConsensusWeights, k_max: usize) -> Result<SpectralDiagnostics> {
    if !weights.support_graph().is_strongly_connected() {
        return Err(Error::Disconnected);
    }
    let n = weights.node_count();
    let moduli = linalg::eigenvalue_moduli(weights.matrix());
    let sigma2 = moduli.get(1).copied().unwrap_or(0.0);

    let avg = DMatrix::from_element(n, n, 1.0 / n as f64);
    let mut power = DMatrix::identity(n, n);
    let mut deviations = Vec::with_capacity(k_max + 1);
    for _ in 0..=k_max {
        deviations.push(linalg::spectral_norm(&(&power - &avg)));
        power = weights.matrix() * power;
    }

    let tail: Vec<(f64, f64)> = deviations
        .iter()
        .enumerate()
        .skip((k_max / 2).max(1))
        .filter(|(_, &d)| d > DEVIATION_FLOOR)
        .map(|(k, &d)| (k as f64, d.ln()))
        .collect();
    let q_raw = if tail.len() >= 2 {
        log_linear_slope(&tail).exp()
    } else {
        // Too few points above the floor; fall back to the largest one-step ratio.
        deviations
            .windows(2)
            .filter(|w| w[1] > DEVIATION_FLOOR)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max)
    };
    let q = ((q_raw / RATE_GRID_STEP).ceil() * RATE_GRID_STEP).min(1.0);
    let m = deviations
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > DEVIATION_FLOOR)
        .map(|(k, &d)| if q > 0.0 { d / q.powi(k as i32) } else { d })
        .fold(0.0, f64::max);
    Ok(SpectralDiagnostics {
        sigma2,
        m,
        q,
        deviations,
    })
}

/// Least-squares slope of `y` against `x`.
pub fn log_linear_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn star(leaves: usize) -> SensorGraph {
        SensorGraph::new(leaves + 1, (1..=leaves).map(|j| (0, j))).unwrap()
    }

    #[test]
    fn geometric_singleton_and_pair() {
        let g = random_geometric_graph(1, 300.0, 130.0, 7).unwrap();
        assert_eq!(g.edge_count(), 0);
        let pair = geometric_graph(vec![[0.0, 0.0], [100.0, 0.0]], 130.0).unwrap();
        assert_eq!(pair.edges().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn geometric_is_deterministic() {
        let a = random_geometric_graph(20, 300.0, 130.0, 11).unwrap();
        let b = random_geometric_graph(20, 300.0, 130.0, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.positions().unwrap().iter().flatten().all(|&v| (0.0..=300.0).contains(&v)));
    }

    #[test]
    fn self_edges_rejected() {
        assert!(SensorGraph::new(3, [(1, 1)]).is_err());
        assert!(SensorGraph::new(3, [(0, 3)]).is_err());
    }

    #[test]
    fn connectivity() {
        assert!(SensorGraph::path(3).is_strongly_connected());
        assert!(!SensorGraph::new(2, []).unwrap().is_strongly_connected());
    }

    #[test]
    fn zero_radius_graphs_are_disconnected() {
        for seed in 0..100 {
            // radius must be positive; the smallest positive value links nothing
            let g = random_geometric_graph(5, 300.0, f64::MIN_POSITIVE, seed).unwrap();
            assert_eq!(g.edge_count(), 0);
            assert!(!g.is_strongly_connected());
        }
    }

    #[test]
    fn diameters() {
        assert_eq!(SensorGraph::path(3).diameter().unwrap(), 2);
        assert_eq!(SensorGraph::complete(4).diameter().unwrap(), 1);
        assert_eq!(SensorGraph::cycle(6).diameter().unwrap(), 3);
        assert!(matches!(SensorGraph::new(2, []).unwrap().diameter(), Err(Error::Disconnected)));
    }

    #[test]
    fn metropolis_small_graphs() {
        let two = metropolis_weights(&SensorGraph::path(2)).unwrap();
        assert_eq!(two.matrix(), &dmatrix![0.5, 0.5; 0.5, 0.5]);

        let tri = metropolis_weights(&SensorGraph::complete(3)).unwrap();
        assert!(tri.matrix().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));

        let s = metropolis_weights(&star(3)).unwrap();
        for leaf in 1..=3 {
            assert_eq!(s.get(0, leaf), 0.25);
            assert_eq!(s.get(leaf, 0), 0.25);
            assert_eq!(s.get(leaf, leaf), 0.75);
        }
        assert_eq!(s.get(0, 0), 0.25);
    }

    #[test]
    fn metropolis_needs_connectivity() {
        assert!(matches!(
            metropolis_weights(&SensorGraph::new(3, [(0, 1)]).unwrap()),
            Err(Error::Disconnected)
        ));
    }

    #[test]
    fn weights_validation() {
        assert!(ConsensusWeights::new(dmatrix![0.6, 0.5; 0.4, 0.5]).is_err());
        assert!(ConsensusWeights::new(dmatrix![1.5, -0.5; -0.5, 1.5]).is_err());
        let g = SensorGraph::new(3, [(0, 1), (1, 2)]).unwrap();
        assert!(ConsensusWeights::for_graph(DMatrix::from_element(3, 3, 1.0 / 3.0), &g).is_err());
    }

    #[test]
    fn powers() {
        let w = metropolis_weights(&SensorGraph::complete(3)).unwrap();
        let p0 = weight_power(&w, 0);
        assert_eq!(p0.matrix, DMatrix::identity(3, 3));
        assert!(!p0.is_full());
        let p2 = weight_power(&w, 2);
        assert!(p2.matrix.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));

        let avg = ConsensusWeights::averaging(5);
        let p1 = weight_power(&avg, 1);
        assert_eq!(p1.matrix, DMatrix::from_element(5, 5, 0.2));
    }

    #[test]
    fn power_support_reaches_full_at_diameter() {
        let g = SensorGraph::path(5);
        let w = metropolis_weights(&g).unwrap();
        assert!(!weight_power(&w, 3).is_full());
        assert!(weight_power(&w, 4).is_full());
    }

    #[test]
    fn spectral_two_node_and_complete() {
        let two = metropolis_weights(&SensorGraph::path(2)).unwrap();
        let d = spectral_diagnostics(&two, 50).unwrap();
        assert!(d.sigma2.abs() < 1e-14);

        let avg = ConsensusWeights::averaging(6);
        let d = spectral_diagnostics(&avg, 50).unwrap();
        assert!(d.sigma2.abs() < 1e-12);
        assert!(d.q <= d.sigma2 + 0.02);
    }

    #[test]
    fn spectral_envelope_holds() {
        let w = metropolis_weights(&SensorGraph::cycle(8)).unwrap();
        let d = spectral_diagnostics(&w, 120).unwrap();
        assert!(d.q <= d.sigma2 + 0.02, "q {} sigma2 {}", d.q, d.sigma2);
        for (k, dev) in d.deviations.iter().enumerate() {
            assert!(*dev <= d.m * d.q.powi(k as i32) * (1.0 + 1e-12) + DEVIATION_FLOOR);
        }
    }

    #[test]
    fn spectral_rejects_disconnected() {
        let w = ConsensusWeights::new(DMatrix::identity(3, 3)).unwrap();
        assert!(matches!(spectral_diagnostics(&w, 10), Err(Error::Disconnected)));
    }

    #[test]
    fn graph_json_round_trip() {
        let g = random_geometric_graph(12, 300.0, 130.0, 4).unwrap();
        let back = SensorGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.fingerprint(), g.fingerprint());
        assert!(SensorGraph::from_json(r#"{"N": 2, "edges": [[0, 1]]}"#).is_err());
    }
}
