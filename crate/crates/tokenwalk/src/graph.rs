//! Static graphs and Markov-evolving graph processes.
//!
//! A [`StaticGraph`] is a simple undirected graph over nodes `0..n`. A
//! [`DynamicGraphProcess`] is a finite list of such graphs (all on the
//! same node set) together with a row-stochastic transition matrix: at
//! every round the topology jumps between states as a homogeneous Markov
//! chain, independently of the token's moves. The process has a
//! stationary distribution over states, from which the *averaged* walk
//! transition matrix is built; first-passage analysis of the walk on the
//! dynamic graph reduces to that single averaged chain.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};
use thiserror::Error;

/// Probability tolerance used when validating stochastic rows and
/// distributions.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// States above this size switch the stationary solve from a dense LU
/// to power iteration.
const DIRECT_SOLVE_LIMIT: usize = 64;

const POWER_ITERATION_CAP: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("node id {id} out of range for graph on {n} nodes")]
    NodeOutOfRange { id: usize, n: usize },
    #[error("self-loop on node {0} is not allowed")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("transition matrix must be {n}x{n}, got row {row} of length {len}")]
    BadTransitionShape { n: usize, row: usize, len: usize },
    #[error("transition row {row} sums to {sum}, expected 1")]
    RowNotStochastic { row: usize, sum: f64 },
    #[error("negative transition probability {p} at ({row}, {col})")]
    NegativeProbability { row: usize, col: usize, p: f64 },
    #[error("graph process needs at least one state")]
    EmptyProcess,
    #[error("all graph states must share one node set; state {state} has {got} nodes, expected {expected}")]
    MismatchedNodeCount {
        state: usize,
        got: usize,
        expected: usize,
    },
    #[error("no unique stationary distribution: {0}")]
    NoStationaryDistribution(String),
    #[error("distribution has {got} weights, process has {expected} states")]
    DistributionMismatch { got: usize, expected: usize },
}

/// Simple undirected graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphSpec", into = "GraphSpec")]
pub struct StaticGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

/// Wire schema for a graph file: `{"n": 3, "edges": [[0,1],[1,2]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSpec {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl TryFrom<GraphSpec> for StaticGraph {
    type Error = GraphError;
    fn try_from(spec: GraphSpec) -> Result<Self, GraphError> {
        StaticGraph::new(spec.n, &spec.edges)
    }
}

impl From<StaticGraph> for GraphSpec {
    fn from(g: StaticGraph) -> GraphSpec {
        GraphSpec {
            n: g.n,
            edges: g.edges,
        }
    }
}

impl StaticGraph {
    /// Build a graph from unordered node pairs. Rejects self-loops,
    /// parallel edges, and out-of-range ids.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut seen = BTreeSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            for id in [a, b] {
                if id >= n {
                    return Err(GraphError::NodeOutOfRange { id, n });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            let (lo, hi) = (a.min(b), a.max(b));
            if !seen.insert((lo, hi)) {
                return Err(GraphError::DuplicateEdge(lo, hi));
            }
            normalized.push((lo, hi));
            adjacency[lo].push(hi);
            adjacency[hi].push(lo);
        }
        normalized.sort_unstable();
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Ok(StaticGraph {
            n,
            edges: normalized,
            adjacency,
        })
    }

    /// Path graph 0-1-...-(n-1).
    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        StaticGraph::new(n, &edges).expect("path edges are valid")
    }

    /// Cycle graph on n >= 3 nodes.
    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "cycle needs at least 3 nodes");
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        edges.push((n - 1, 0));
        StaticGraph::new(n, &edges).expect("cycle edges are valid")
    }

    /// Complete graph K_n.
    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j));
            }
        }
        StaticGraph::new(n, &edges).expect("complete edges are valid")
    }

    /// Random connected graph: a uniform random attachment tree plus
    /// `extra_edges` additional distinct edges (as many as fit).
    pub fn random_connected<R: Rng + ?Sized>(n: usize, extra_edges: usize, rng: &mut R) -> Self {
        assert!(n >= 1);
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut present = BTreeSet::new();
        for i in 1..n {
            let parent = rng.random_range(0..i);
            edges.push((parent, i));
            present.insert((parent, i));
        }
        let max_edges = n * (n - 1) / 2;
        let mut budget = extra_edges.min(max_edges - edges.len());
        while budget > 0 {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b {
                continue;
            }
            let key = (a.min(b), a.max(b));
            if present.insert(key) {
                edges.push(key);
                budget -= 1;
            }
        }
        StaticGraph::new(n, &edges).expect("generated edges are valid")
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Normalized (lo, hi) edge list, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted neighbor list of `node`.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a != b && a < self.n && b < self.n && self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Insert an edge; returns false if it was already present or invalid.
    pub fn add_edge(&mut self, a: usize, b: usize) -> bool {
        if a == b || a >= self.n || b >= self.n || self.has_edge(a, b) {
            return false;
        }
        let key = (a.min(b), a.max(b));
        let pos = self.edges.binary_search(&key).unwrap_err();
        self.edges.insert(pos, key);
        for (x, y) in [(a, b), (b, a)] {
            let pos = self.adjacency[x].binary_search(&y).unwrap_err();
            self.adjacency[x].insert(pos, y);
        }
        true
    }

    /// Remove an edge; returns false if it was absent.
    pub fn remove_edge(&mut self, a: usize, b: usize) -> bool {
        if !self.has_edge(a, b) {
            return false;
        }
        let key = (a.min(b), a.max(b));
        if let Ok(pos) = self.edges.binary_search(&key) {
            self.edges.remove(pos);
        }
        for (x, y) in [(a, b), (b, a)] {
            if let Ok(pos) = self.adjacency[x].binary_search(&y) {
                self.adjacency[x].remove(pos);
            }
        }
        true
    }

    /// Uniform random-walk transition matrix. An isolated node gets a
    /// self-loop so every row stays stochastic: a token stranded there
    /// simply holds its position for the step.
    pub fn walk_matrix(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let deg = self.degree(i);
            if deg == 0 {
                p[(i, i)] = 1.0;
            } else {
                let w = 1.0 / deg as f64;
                for &j in self.neighbors(i) {
                    p[(i, j)] = w;
                }
            }
        }
        p
    }
}

/// Connectivity and bipartiteness report from [`validate_graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphDiagnostics {
    pub connected: bool,
    /// True when every component is 2-colorable. On bipartite graphs two
    /// independent walks can keep opposite parity forever, so token
    /// meeting (and thus duplicate-token merging) is not guaranteed.
    pub bipartite: bool,
}

/// BFS connectivity plus 2-coloring bipartiteness check.
pub fn validate_graph(g: &StaticGraph) -> GraphDiagnostics {
    let n = g.node_count();
    if n == 0 {
        return GraphDiagnostics {
            connected: true,
            bipartite: true,
        };
    }
    let mut color: Vec<Option<bool>> = vec![None; n];
    let mut bipartite = true;
    let mut reached = 0usize;
    let mut first_component_size = 0usize;
    for start in 0..n {
        if color[start].is_some() {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        color[start] = Some(false);
        let mut component = 0usize;
        while let Some(u) = queue.pop_front() {
            component += 1;
            for &v in g.neighbors(u) {
                match color[v] {
                    None => {
                        color[v] = Some(!color[u].unwrap());
                        queue.push_back(v);
                    }
                    Some(c) => {
                        if c == color[u].unwrap() {
                            bipartite = false;
                        }
                    }
                }
            }
        }
        if start == 0 {
            first_component_size = component;
        }
        reached += component;
    }
    GraphDiagnostics {
        connected: first_component_size == n && reached == n,
        bipartite,
    }
}

/// Finite set of graph states evolving as a homogeneous Markov chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProcessSpec", into = "ProcessSpec")]
pub struct DynamicGraphProcess {
    states: Vec<StaticGraph>,
    transitions: Vec<Vec<f64>>,
}

/// Wire schema for a dynamic process file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub states: Vec<GraphSpec>,
    pub transitions: Vec<Vec<f64>>,
}

impl TryFrom<ProcessSpec> for DynamicGraphProcess {
    type Error = GraphError;
    fn try_from(spec: ProcessSpec) -> Result<Self, GraphError> {
        let states = spec
            .states
            .into_iter()
            .map(StaticGraph::try_from)
            .collect::<Result<Vec<_>, _>>()?;
        DynamicGraphProcess::new(states, spec.transitions)
    }
}

impl From<DynamicGraphProcess> for ProcessSpec {
    fn from(p: DynamicGraphProcess) -> ProcessSpec {
        ProcessSpec {
            states: p.states.into_iter().map(GraphSpec::from).collect(),
            transitions: p.transitions,
        }
    }
}

impl DynamicGraphProcess {
    pub fn new(states: Vec<StaticGraph>, transitions: Vec<Vec<f64>>) -> Result<Self, GraphError> {
        if states.is_empty() {
            return Err(GraphError::EmptyProcess);
        }
        let n = states[0].node_count();
        for (idx, g) in states.iter().enumerate() {
            if g.node_count() != n {
                return Err(GraphError::MismatchedNodeCount {
                    state: idx,
                    got: g.node_count(),
                    expected: n,
                });
            }
        }
        let s = states.len();
        if transitions.len() != s {
            return Err(GraphError::BadTransitionShape {
                n: s,
                row: transitions.len(),
                len: 0,
            });
        }
        for (row, probs) in transitions.iter().enumerate() {
            if probs.len() != s {
                return Err(GraphError::BadTransitionShape {
                    n: s,
                    row,
                    len: probs.len(),
                });
            }
            let mut sum = 0.0;
            for (col, &p) in probs.iter().enumerate() {
                if p < 0.0 {
                    return Err(GraphError::NegativeProbability { row, col, p });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(GraphError::RowNotStochastic { row, sum });
            }
        }
        Ok(DynamicGraphProcess {
            states,
            transitions,
        })
    }

    /// Wrap a single fixed topology as a one-state process.
    pub fn from_static(g: StaticGraph) -> Self {
        DynamicGraphProcess {
            states: vec![g],
            transitions: vec![vec![1.0]],
        }
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn node_count(&self) -> usize {
        self.states[0].node_count()
    }

    pub fn states(&self) -> &[StaticGraph] {
        &self.states
    }

    pub fn state(&self, idx: usize) -> &StaticGraph {
        &self.states[idx]
    }

    pub fn transitions(&self) -> &[Vec<f64>] {
        &self.transitions
    }
}

/// Probability weights over the states of a process.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDistribution {
    weights: Vec<f64>,
}

impl GraphDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self, GraphError> {
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < -STOCHASTIC_TOL) || (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(GraphError::NoStationaryDistribution(format!(
                "weights must be non-negative and sum to 1 (sum = {sum})"
            )));
        }
        Ok(GraphDistribution { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Stationary distribution of the state chain: the row vector fixed by
/// the transition matrix. Solved directly (dense LU on `P^T - I` with a
/// normalization row) up to 64 states, by power iteration above that.
pub fn stationary_distribution(
    process: &DynamicGraphProcess,
) -> Result<GraphDistribution, GraphError> {
    let s = process.state_count();
    let t = process.transitions();
    if s == 1 {
        return GraphDistribution::new(vec![1.0]);
    }
    let weights = if s <= DIRECT_SOLVE_LIMIT {
        // Rows 0..s-1: (P^T - I) pi = 0, with the last row replaced by
        // sum(pi) = 1.
        let mut a = DMatrix::zeros(s, s);
        for i in 0..s {
            for j in 0..s {
                a[(i, j)] = t[j][i] - if i == j { 1.0 } else { 0.0 };
            }
        }
        for j in 0..s {
            a[(s - 1, j)] = 1.0;
        }
        let mut b = DMatrix::zeros(s, 1);
        b[(s - 1, 0)] = 1.0;
        let solved = a
            .lu()
            .solve(&b)
            .ok_or_else(|| GraphError::NoStationaryDistribution("singular system".into()))?;
        solved.column(0).iter().copied().collect::<Vec<f64>>()
    } else {
        // Iterate one decade past the target so the returned vector's
        // own residual meets the 1e-12 postcondition.
        let mut v = vec![1.0 / s as f64; s];
        let mut next = vec![0.0; s];
        let mut converged = false;
        for _ in 0..POWER_ITERATION_CAP {
            for x in next.iter_mut() {
                *x = 0.0;
            }
            for (vi, row) in v.iter().zip(t) {
                for (slot, p) in next.iter_mut().zip(row) {
                    *slot += vi * p;
                }
            }
            let delta = v
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            std::mem::swap(&mut v, &mut next);
            if delta <= STOCHASTIC_TOL / 10.0 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(GraphError::NoStationaryDistribution(
                "power iteration did not converge".into(),
            ));
        }
        v
    };

    if weights.iter().any(|&w| w < -1e-9) {
        return Err(GraphError::NoStationaryDistribution(
            "negative stationary weight".into(),
        ));
    }
    let mut weights: Vec<f64> = weights.iter().map(|w| w.max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }

    // pi P = pi must hold to 1e-12 or the chain has no usable fixed point.
    let mut residual = 0.0f64;
    for j in 0..s {
        let mut pj = 0.0;
        for i in 0..s {
            pj += weights[i] * t[i][j];
        }
        residual = residual.max((pj - weights[j]).abs());
    }
    if residual > STOCHASTIC_TOL {
        return Err(GraphError::NoStationaryDistribution(format!(
            "residual {residual} exceeds tolerance"
        )));
    }
    GraphDistribution::new(weights)
}

/// Stationary-averaged walk transition matrix: entry (i, j) is the
/// probability that a token on `i` is forwarded to `j`, averaged over
/// graph states weighted by the stationary distribution.
pub fn averaged_transition_matrix(
    process: &DynamicGraphProcess,
    pi: &GraphDistribution,
) -> Result<DMatrix<f64>, GraphError> {
    if pi.weights().len() != process.state_count() {
        return Err(GraphError::DistributionMismatch {
            got: pi.weights().len(),
            expected: process.state_count(),
        });
    }
    let n = process.node_count();
    let mut avg = DMatrix::zeros(n, n);
    for (g, &w) in process.states().iter().zip(pi.weights()) {
        if w == 0.0 {
            continue;
        }
        avg += g.walk_matrix() * w;
    }
    for i in 0..n {
        let sum: f64 = avg.row(i).iter().sum();
        debug_assert!((sum - 1.0).abs() <= 1e-9, "averaged row {i} sums to {sum}");
    }
    Ok(avg)
}

/// Sample the next graph state from the transition row of `current`.
pub fn sample_next_graph<R: Rng + ?Sized>(
    process: &DynamicGraphProcess,
    current: usize,
    rng: &mut R,
) -> usize {
    let row = &process.transitions()[current];
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    for (idx, &p) in row.iter().enumerate() {
        acc += p;
        if draw < acc {
            return idx;
        }
    }
    row.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_self_loops_and_duplicates() {
        assert!(matches!(
            StaticGraph::new(3, &[(0, 0)]),
            Err(GraphError::SelfLoop(0))
        ));
        assert!(matches!(
            StaticGraph::new(3, &[(0, 1), (1, 0)]),
            Err(GraphError::DuplicateEdge(0, 1))
        ));
        assert!(matches!(
            StaticGraph::new(2, &[(0, 5)]),
            Err(GraphError::NodeOutOfRange { id: 5, n: 2 })
        ));
    }

    #[test]
    fn diagnostics_on_named_graphs() {
        let k2 = StaticGraph::new(2, &[(0, 1)]).unwrap();
        let d = validate_graph(&k2);
        assert!(d.connected && d.bipartite);

        let k3 = StaticGraph::complete(3);
        let d = validate_graph(&k3);
        assert!(d.connected && !d.bipartite);

        let isolated = StaticGraph::new(2, &[]).unwrap();
        assert!(!validate_graph(&isolated).connected);
    }

    #[test]
    fn stationary_single_state() {
        let p = DynamicGraphProcess::from_static(StaticGraph::complete(3));
        let pi = stationary_distribution(&p).unwrap();
        assert_eq!(pi.weights(), &[1.0]);
    }

    #[test]
    fn stationary_symmetric_switch() {
        let g = StaticGraph::complete(3);
        let p = DynamicGraphProcess::new(vec![g.clone(), g], vec![vec![0.5, 0.5], vec![0.5, 0.5]])
            .unwrap();
        let pi = stationary_distribution(&p).unwrap();
        assert_abs_diff_eq!(pi.weights()[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(pi.weights()[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn stationary_asymmetric_switch() {
        // pi_0 * 0.3 = pi_1 * 0.6 together with pi_0 + pi_1 = 1 gives
        // pi = (2/3, 1/3).
        let g = StaticGraph::complete(3);
        let p = DynamicGraphProcess::new(vec![g.clone(), g], vec![vec![0.7, 0.3], vec![0.6, 0.4]])
            .unwrap();
        let pi = stationary_distribution(&p).unwrap();
        assert_abs_diff_eq!(pi.weights()[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pi.weights()[1], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn stationary_power_iteration_large_chain() {
        // 80 states forces the power-iteration path. A lazy uniform
        // chain has the uniform stationary distribution.
        let s = 80;
        let g = StaticGraph::complete(3);
        let mut rows = Vec::with_capacity(s);
        for i in 0..s {
            let mut row = vec![0.9 / s as f64; s];
            row[i] += 0.1;
            let sum: f64 = row.iter().sum();
            row[i] += 1.0 - sum;
            rows.push(row);
        }
        let p = DynamicGraphProcess::new(vec![g; s], rows).unwrap();
        let pi = stationary_distribution(&p).unwrap();
        for &w in pi.weights() {
            assert_abs_diff_eq!(w, 1.0 / s as f64, epsilon = 1e-9);
        }
        // Residual postcondition: pi P = pi to 1e-12.
        let mut residual = 0.0f64;
        for j in 0..s {
            let mut pj = 0.0;
            for i in 0..s {
                pj += pi.weights()[i] * p.transitions()[i][j];
            }
            residual = residual.max((pj - pi.weights()[j]).abs());
        }
        assert!(residual <= 1e-12, "residual {residual}");
    }

    #[test]
    fn stationary_closure_under_transitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let s = rng.random_range(2..6);
            let g = StaticGraph::complete(3);
            let mut rows = Vec::new();
            for _ in 0..s {
                let raw: Vec<f64> = (0..s).map(|_| rng.random::<f64>() + 0.01).collect();
                let sum: f64 = raw.iter().sum();
                rows.push(raw.into_iter().map(|x| x / sum).collect::<Vec<_>>());
            }
            // Renormalize exactly so validation at 1e-12 passes.
            for row in &mut rows {
                let sum: f64 = row.iter().sum();
                for x in row.iter_mut() {
                    *x /= sum;
                }
                let sum: f64 = row.iter().sum();
                row[0] += 1.0 - sum;
            }
            let p = DynamicGraphProcess::new(vec![g.clone(); s], rows).unwrap();
            let pi = stationary_distribution(&p).unwrap();
            for j in 0..s {
                let mut agg = 0.0;
                for i in 0..s {
                    agg += pi.weights()[i] * p.transitions()[i][j];
                }
                assert!((agg - pi.weights()[j]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn averaged_matrix_single_state_is_walk_matrix() {
        let g = StaticGraph::path(3);
        let p = DynamicGraphProcess::from_static(g.clone());
        let pi = stationary_distribution(&p).unwrap();
        let avg = averaged_transition_matrix(&p, &pi).unwrap();
        assert_eq!(avg, g.walk_matrix());
    }

    #[test]
    fn averaged_matrix_triangle_and_path() {
        let triangle = StaticGraph::complete(3);
        let path = StaticGraph::path(3);
        let p =
            DynamicGraphProcess::new(vec![triangle, path], vec![vec![0.5, 0.5], vec![0.5, 0.5]])
                .unwrap();
        let pi = stationary_distribution(&p).unwrap();
        let avg = averaged_transition_matrix(&p, &pi).unwrap();
        // Node 0 sends to 1 with probability 1/2 in the triangle and 1 on
        // the path.
        assert_abs_diff_eq!(avg[(0, 1)], 0.75, epsilon = 1e-12);
        for i in 0..3 {
            assert_abs_diff_eq!(avg.row(i).iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn averaged_matrix_isolated_node_stalls() {
        let g = StaticGraph::new(3, &[(1, 2)]).unwrap();
        let p = DynamicGraphProcess::from_static(g);
        let pi = stationary_distribution(&p).unwrap();
        let avg = averaged_transition_matrix(&p, &pi).unwrap();
        assert_abs_diff_eq!(avg[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sample_next_graph_deterministic_rows() {
        let g = StaticGraph::complete(3);
        let p = DynamicGraphProcess::new(vec![g.clone(), g], vec![vec![0.0, 1.0], vec![0.0, 1.0]])
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(sample_next_graph(&p, 0, &mut rng), 1);
            assert_eq!(sample_next_graph(&p, 1, &mut rng), 1);
        }

        let single = DynamicGraphProcess::from_static(StaticGraph::complete(3));
        assert_eq!(sample_next_graph(&single, 0, &mut rng), 0);
    }

    #[test]
    fn sample_next_graph_frequency() {
        let g = StaticGraph::complete(3);
        let p = DynamicGraphProcess::new(vec![g.clone(), g], vec![vec![0.5, 0.5], vec![0.5, 0.5]])
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let trials = 100_000;
        let ones = (0..trials)
            .filter(|_| sample_next_graph(&p, 0, &mut rng) == 1)
            .count();
        let freq = ones as f64 / trials as f64;
        assert!((freq - 0.5).abs() < 0.01, "frequency {freq} outside band");
    }

    #[test]
    fn graph_json_round_trip() {
        let text = r#"{"n": 3, "edges": [[0,1],[1,2],[0,2]]}"#;
        let g: StaticGraph = serde_json::from_str(text).unwrap();
        assert_eq!(g, StaticGraph::complete(3));
        let back = serde_json::to_string(&g).unwrap();
        let again: StaticGraph = serde_json::from_str(&back).unwrap();
        assert_eq!(again, StaticGraph::complete(3));

        let bad = r#"{"n": 2, "edges": [[0,0]]}"#;
        assert!(serde_json::from_str::<StaticGraph>(bad).is_err());
    }

    #[test]
    fn process_json_round_trip() {
        let text = r#"{
            "states": [
                {"n": 3, "edges": [[0,1],[1,2],[0,2]]},
                {"n": 3, "edges": [[0,1],[1,2]]}
            ],
            "transitions": [[0.5, 0.5], [0.5, 0.5]]
        }"#;
        let p: DynamicGraphProcess = serde_json::from_str(text).unwrap();
        assert_eq!(p.state_count(), 2);

        let bad = r#"{
            "states": [{"n": 3, "edges": []}],
            "transitions": [[0.7]]
        }"#;
        assert!(serde_json::from_str::<DynamicGraphProcess>(bad).is_err());
    }

    proptest! {
        #[test]
        fn degree_sum_is_twice_edge_count(seed in 0u64..500, n in 1usize..12, extra in 0usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = StaticGraph::random_connected(n, extra, &mut rng);
            let degree_sum: usize = (0..n).map(|i| g.degree(i)).sum();
            prop_assert_eq!(degree_sum, 2 * g.edge_count());
            prop_assert!(validate_graph(&g).connected);
        }

        #[test]
        fn walk_matrix_rows_stochastic(seed in 0u64..200, n in 1usize..10, extra in 0usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = StaticGraph::random_connected(n, extra, &mut rng);
            let p = g.walk_matrix();
            for i in 0..n {
                let sum: f64 = p.row(i).iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12);
            }
        }
    }
}
