//! Undirected graphs and their matrix representations.
//!
//! Node indices are 0-based in the API. The framework file format uses
//! 1-based indices and converts on load (see [`crate::io`]).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rigidity::Point;

/// An oriented edge. The incidence row has `-1` at `source` and `+1` at `sink`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub source: usize,
    pub sink: usize,
}

impl Edge {
    /// Canonical orientation: lower index is the source.
    pub fn canonical(i: usize, j: usize) -> Self {
        Edge {
            source: i.min(j),
            sink: i.max(j),
        }
    }

    pub fn flipped(self) -> Self {
        Edge {
            source: self.sink,
            sink: self.source,
        }
    }

    /// The endpoint opposite `node`, if `node` is on this edge.
    pub fn other(&self, node: usize) -> Option<usize> {
        if node == self.source {
            Some(self.sink)
        } else if node == self.sink {
            Some(self.source)
        } else {
            None
        }
    }

    fn key(&self) -> (usize, usize) {
        (self.source.min(self.sink), self.source.max(self.sink))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from unordered pairs, oriented low index to high index.
    pub fn new(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let edges = pairs
            .into_iter()
            .map(|(i, j)| Edge::canonical(i, j))
            .collect();
        Self::with_orientation(n, edges)
    }

    /// Builds a graph keeping the given edge orientations.
    pub fn with_orientation(n: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            if e.source >= n || e.sink >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) references a node outside 0..{}",
                    e.source, e.sink, n
                )));
            }
            if e.source == e.sink {
                return Err(Error::InvalidGraph(format!("self-loop at node {}", e.source)));
            }
            if !seen.insert(e.key()) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge {{{}, {}}}",
                    e.source, e.sink
                )));
            }
            adjacency[e.source].push(e.sink);
            adjacency[e.sink].push(e.source);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Graph {
            n,
            edges,
            adjacency,
        })
    }

    /// The complete graph on `n` nodes.
    pub fn complete(n: usize) -> Self {
        let pairs = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j)));
        Self::new(n, pairs).expect("complete graph is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Sorted neighbor list of `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Index of the edge joining `i` and `j`, if any.
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = (i.min(j), i.max(j));
        self.edges.iter().position(|e| e.key() == key)
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// A graph with one positive weight per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    graph: Graph,
    weights: Vec<f64>,
}

impl WeightedGraph {
    pub fn new(graph: Graph, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != graph.m() {
            return Err(Error::InvalidGraph(format!(
                "{} weights for {} edges",
                weights.len(),
                graph.m()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidGraph(format!(
                "edge weights must be positive and finite, got {w}"
            )));
        }
        Ok(WeightedGraph { graph, weights })
    }

    pub fn unit(graph: Graph) -> Self {
        let weights = vec![1.0; graph.m()];
        WeightedGraph { graph, weights }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn m(&self) -> usize {
        self.graph.m()
    }

    /// Same weights with every edge orientation replaced by `flip[k] ? reversed : kept`.
    pub fn reoriented(&self, flip: &[bool]) -> Self {
        let edges = self
            .graph
            .edges()
            .iter()
            .zip(flip)
            .map(|(e, &f)| if f { e.flipped() } else { *e })
            .collect();
        WeightedGraph {
            graph: Graph::with_orientation(self.n(), edges).expect("reorientation keeps validity"),
            weights: self.weights.clone(),
        }
    }
}

/// Communication radius and weight threshold of the proximity model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityParams {
    pub kappa: f64,
    pub sigma_prime: f64,
}

impl ProximityParams {
    pub fn new(kappa: f64, sigma_prime: f64) -> Result<Self> {
        let p = ProximityParams { kappa, sigma_prime };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        if !(self.sigma_prime > 0.0 && self.sigma_prime < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma_prime must lie in (0, 1), got {}",
                self.sigma_prime
            )));
        }
        Ok(())
    }

    /// `σ²` chosen so that the weight at distance `κ` equals `σ'`.
    pub fn sigma_sq(&self) -> f64 {
        self.kappa * self.kappa / (2.0 * (1.0 / self.sigma_prime).ln())
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_sq().sqrt()
    }

    /// Edge weight for a squared distance, `None` outside the radius.
    pub fn weight(&self, dist_sq: f64) -> Option<f64> {
        (dist_sq <= self.kappa * self.kappa).then(|| (-dist_sq / (2.0 * self.sigma_sq())).exp())
    }
}

/// Result of [`proximity_graph`]: the weighted graph plus coincident pairs.
#[derive(Debug, Clone)]
pub struct ProximityGraph {
    pub graph: WeightedGraph,
    /// Neighbor pairs at distance zero (weight 1). Not an error, but rigidity
    /// is lost at such a configuration.
    pub collisions: Vec<(usize, usize)>,
}

/// Edge `{i, j}` iff `‖p_i − p_j‖ ≤ κ`, weighted `exp(−‖p_i − p_j‖² / 2σ²)`.
pub fn proximity_graph(positions: &[Point], params: &ProximityParams) -> ProximityGraph {
    let n = positions.len();
    let mut pairs = Vec::new();
    let mut weights = Vec::new();
    let mut collisions = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d2 = (positions[j] - positions[i]).norm_squared();
            if let Some(w) = params.weight(d2) {
                if d2 == 0.0 {
                    collisions.push((i, j));
                }
                pairs.push((i, j));
                weights.push(w);
            }
        }
    }
    let graph = Graph::new(n, pairs).expect("proximity pairs are distinct");
    ProximityGraph {
        graph: WeightedGraph::new(graph, weights).expect("proximity weights are positive"),
        collisions,
    }
}

/// `m × n` incidence matrix: `-1` at the source, `+1` at the sink.
pub fn incidence_matrix(g: &Graph) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(g.m(), g.n());
    for (k, e) in g.edges().iter().enumerate() {
        h[(k, e.source)] = -1.0;
        h[(k, e.sink)] = 1.0;
    }
    h
}

/// Weighted Laplacian `Hᵀ W H`, assembled edge by edge.
pub fn laplacian(wg: &WeightedGraph) -> DMatrix<f64> {
    let n = wg.n();
    let mut l = DMatrix::zeros(n, n);
    for (e, &w) in wg.graph().edges().iter().zip(wg.weights()) {
        let (i, j) = (e.source, e.sink);
        l[(i, i)] += w;
        l[(j, j)] += w;
        l[(i, j)] -= w;
        l[(j, i)] -= w;
    }
    l
}
