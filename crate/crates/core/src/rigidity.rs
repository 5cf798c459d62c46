//! Frameworks, rigidity matrix, rigidity Laplacian and the rigidity index.
//!
//! Positions are stored as 3-vectors in both dimensions; in the plane the
//! third coordinate is always zero and every stacked vector or matrix uses
//! only the first `d` coordinates per node.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, proximity_graph, Edge, ProximityParams, WeightedGraph};
use crate::linalg::{numerical_rank, symmetric_eig, SpectralResult};

pub type Point = Vector3<f64>;
/// A `d × d` block embedded in a 3×3 matrix (zero third row/column in 2-D).
pub type Block = Matrix3<f64>;

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-9;
/// Gap below which the rigidity eigenvalue is reported as repeated.
pub const MULTIPLICITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dim {
    Planar,
    Spatial,
}

impl Dim {
    pub fn from_usize(d: usize) -> Result<Self> {
        match d {
            2 => Ok(Dim::Planar),
            3 => Ok(Dim::Spatial),
            _ => Err(Error::InvalidFramework(format!(
                "dimension must be 2 or 3, got {d}"
            ))),
        }
    }

    pub fn d(self) -> usize {
        match self {
            Dim::Planar => 2,
            Dim::Spatial => 3,
        }
    }

    /// Dimension of the rigid-motion space, `d(d+1)/2`.
    pub fn trivial_motions(self) -> usize {
        let d = self.d();
        d * (d + 1) / 2
    }

    /// 0-based ascending position of the rigidity index in the spectrum of `E`
    /// (`λ₄` in 2-D, `λ₇` in 3-D).
    pub fn index_position(self) -> usize {
        self.trivial_motions()
    }

    /// Coordinate planes `(a, b)` whose rotations span the rotational motions.
    pub fn rotation_planes(self) -> &'static [(usize, usize)] {
        match self {
            Dim::Planar => &[(0, 1)],
            Dim::Spatial => &[(0, 1), (0, 2), (1, 2)],
        }
    }

    /// Identity on the active coordinates.
    pub fn identity(self) -> Block {
        match self {
            Dim::Planar => Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)),
            Dim::Spatial => Matrix3::identity(),
        }
    }

    /// Inverse of a block on the active coordinates, `None` when it is
    /// singular to working precision (condition number above 1e12).
    pub fn invert(self, block: &Block) -> Option<Block> {
        let mut b = *block;
        if self == Dim::Planar {
            b[(2, 2)] = block.amax().max(1.0);
        }
        let sv = b.singular_values();
        if !(sv.min() > 1e-12 * sv.max()) {
            return None;
        }
        let mut inv = b.try_inverse()?;
        if self == Dim::Planar {
            inv[(2, 2)] = 0.0;
        }
        Some(inv)
    }

    /// Restrict a point to the active coordinates (zero `z` in the plane).
    pub fn project(self, p: Point) -> Point {
        match self {
            Dim::Planar => Point::new(p.x, p.y, 0.0),
            Dim::Spatial => p,
        }
    }
}

/// How edge weights relate to positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    /// Weights are given and do not depend on positions.
    Fixed,
    /// Weights follow the Gaussian proximity law.
    Proximity(ProximityParams),
}

/// A graph embedded at positions, `(G, p)`.
#[derive(Debug, Clone)]
pub struct Framework {
    dim: Dim,
    positions: Vec<Point>,
    graph: WeightedGraph,
    weighting: Weighting,
}

impl Framework {
    pub fn new(
        dim: Dim,
        positions: Vec<Point>,
        graph: WeightedGraph,
        weighting: Weighting,
    ) -> Result<Self> {
        if positions.len() != graph.n() {
            return Err(Error::InvalidFramework(format!(
                "{} positions for {} nodes",
                positions.len(),
                graph.n()
            )));
        }
        for (i, p) in positions.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidFramework(format!(
                    "position of node {} is not finite",
                    i + 1
                )));
            }
            if dim == Dim::Planar && p.z != 0.0 {
                return Err(Error::InvalidFramework(format!(
                    "planar node {} has nonzero z",
                    i + 1
                )));
            }
        }
        Ok(Framework {
            dim,
            positions,
            graph,
            weighting,
        })
    }

    /// Framework with unit weights on the given pairs.
    pub fn unit(dim: Dim, positions: Vec<Point>, pairs: &[(usize, usize)]) -> Result<Self> {
        let g = graph::Graph::new(positions.len(), pairs.iter().copied())?;
        Self::new(dim, positions, WeightedGraph::unit(g), Weighting::Fixed)
    }

    /// Framework whose edges and weights come from the proximity rule.
    /// Returns the coincident neighbor pairs alongside.
    pub fn from_proximity(
        dim: Dim,
        positions: Vec<Point>,
        params: ProximityParams,
    ) -> Result<(Self, Vec<(usize, usize)>)> {
        params.validate()?;
        let prox = proximity_graph(&positions, &params);
        let f = Self::new(dim, positions, prox.graph, Weighting::Proximity(params))?;
        Ok((f, prox.collisions))
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn m(&self) -> usize {
        self.graph.m()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    pub fn edges(&self) -> &[Edge] {
        self.graph.graph().edges()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.graph.graph().neighbors(i)
    }

    /// Weight of the edge between `i` and `j` (0 if not adjacent).
    pub fn weight_between(&self, i: usize, j: usize) -> f64 {
        self.graph
            .graph()
            .edge_index(i, j)
            .map_or(0.0, |k| self.graph.weights()[k])
    }

    /// Relative position `z_k = p_sink − p_source` of edge `k`.
    pub fn edge_vector(&self, k: usize) -> Point {
        let e = self.edges()[k];
        self.positions[e.sink] - self.positions[e.source]
    }

    /// Stacked position vector `p ∈ ℝ^{dn}`.
    pub fn stacked_positions(&self) -> DVector<f64> {
        stack(&self.positions, self.dim)
    }

    /// Same edge set at new positions. Proximity weights are re-evaluated
    /// from the Gaussian law without re-testing the radius.
    pub fn with_positions(&self, positions: Vec<Point>) -> Result<Self> {
        let graph = match self.weighting {
            Weighting::Fixed => self.graph.clone(),
            Weighting::Proximity(params) => {
                let s2 = params.sigma_sq();
                let weights = self
                    .edges()
                    .iter()
                    .map(|e| (-(positions[e.sink] - positions[e.source]).norm_squared() / (2.0 * s2)).exp())
                    .collect();
                WeightedGraph::new(self.graph.graph().clone(), weights)?
            }
        };
        Self::new(self.dim, positions, graph, self.weighting)
    }

    /// Same positions and weights with a different edge orientation per edge.
    pub fn reoriented(&self, flip: &[bool]) -> Self {
        Framework {
            graph: self.graph.reoriented(flip),
            ..self.clone()
        }
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        min_pairwise_distance(&self.positions)
    }
}

/// Smallest distance between any two points (infinity for fewer than two).
pub fn min_pairwise_distance(positions: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            best = best.min((positions[j] - positions[i]).norm());
        }
    }
    best
}

/// Stack points into a `dn` vector using the active coordinates.
pub fn stack(points: &[Point], dim: Dim) -> DVector<f64> {
    let d = dim.d();
    DVector::from_fn(points.len() * d, |r, _| points[r / d][r % d])
}

/// Split a `dn` vector into per-node points.
pub fn unstack(v: &DVector<f64>, dim: Dim) -> Vec<Point> {
    let d = dim.d();
    (0..v.len() / d)
        .map(|i| {
            let mut p = Point::zeros();
            for a in 0..d {
                p[a] = v[i * d + a];
            }
            p
        })
        .collect()
}

/// `w z zᵀ` as a block.
pub fn edge_block(z: &Point, w: f64) -> Block {
    z * z.transpose() * w
}

/// Half squared edge lengths, one per edge.
pub fn rigidity_function(f: &Framework) -> DVector<f64> {
    DVector::from_fn(f.m(), |k, _| 0.5 * f.edge_vector(k).norm_squared())
}

/// `m × dn` rigidity matrix: row `k` holds `−z_kᵀ` at the source and `+z_kᵀ` at the sink.
pub fn rigidity_matrix(f: &Framework) -> DMatrix<f64> {
    let d = f.dim.d();
    let mut r = DMatrix::zeros(f.m(), d * f.n());
    for (k, e) in f.edges().iter().enumerate() {
        let z = f.edge_vector(k);
        for a in 0..d {
            r[(k, e.source * d + a)] = -z[a];
            r[(k, e.sink * d + a)] = z[a];
        }
    }
    r
}

/// `H̄ = H ⊗ I_d`.
pub fn lifted_incidence(g: &graph::Graph, dim: Dim) -> DMatrix<f64> {
    graph::incidence_matrix(g).kronecker(&DMatrix::identity(dim.d(), dim.d()))
}

/// `Z = diag(z_1, …, z_m)` as a `dm × m` matrix.
pub fn edge_matrix(f: &Framework) -> DMatrix<f64> {
    let d = f.dim.d();
    let mut z = DMatrix::zeros(d * f.m(), f.m());
    for k in 0..f.m() {
        let zk = f.edge_vector(k);
        for a in 0..d {
            z[(k * d + a, k)] = zk[a];
        }
    }
    z
}

/// Rigidity Laplacian assembled block by block:
/// `E_ii = Σ_l w_il z zᵀ`, `E_ij = −w_ij z zᵀ` on edges, zero otherwise.
pub fn rigidity_laplacian_matrix(f: &Framework) -> DMatrix<f64> {
    let d = f.dim.d();
    let mut e = DMatrix::zeros(d * f.n(), d * f.n());
    for (k, edge) in f.edges().iter().enumerate() {
        let b = edge_block(&f.edge_vector(k), f.graph.weights()[k]);
        let (i, j) = (edge.source, edge.sink);
        for a in 0..d {
            for c in 0..d {
                e[(i * d + a, i * d + c)] += b[(a, c)];
                e[(j * d + a, j * d + c)] += b[(a, c)];
                e[(i * d + a, j * d + c)] -= b[(a, c)];
                e[(j * d + a, i * d + c)] -= b[(a, c)];
            }
        }
    }
    e
}

/// All matrices associated with a framework.
#[derive(Debug, Clone)]
pub struct RigidityModel {
    pub dim: Dim,
    /// `R = Zᵀ H̄`, `m × dn`.
    pub rigidity_matrix: DMatrix<f64>,
    /// `E = Rᵀ W R`, `dn × dn`.
    pub rigidity_laplacian: DMatrix<f64>,
    /// `Z`, `dm × m`.
    pub edge_matrix: DMatrix<f64>,
    /// `H̄ = H ⊗ I_d`, `dm × dn`.
    pub lifted_incidence: DMatrix<f64>,
    /// Weighted graph Laplacian `Hᵀ W H`, `n × n`.
    pub laplacian: DMatrix<f64>,
}

pub fn rigidity_laplacian(f: &Framework) -> RigidityModel {
    RigidityModel {
        dim: f.dim,
        rigidity_matrix: rigidity_matrix(f),
        rigidity_laplacian: rigidity_laplacian_matrix(f),
        edge_matrix: edge_matrix(f),
        lifted_incidence: lifted_incidence(f.graph.graph(), f.dim),
        laplacian: graph::laplacian(&f.graph),
    }
}

/// Rigid-motion null vectors of `R`.
#[derive(Debug, Clone)]
pub struct NullBasis {
    /// Translations first, then one rotation per coordinate plane.
    pub vectors: Vec<DVector<f64>>,
    /// The vectors are not linearly independent (e.g. every node at the origin).
    pub degenerate: bool,
}

/// Translations `1 ⊗ e_a` and rotations: for the plane `(a, b)` node `i`
/// contributes `p_{i,b}` at coordinate `a` and `−p_{i,a}` at coordinate `b`.
pub fn null_basis(f: &Framework) -> NullBasis {
    let vectors = null_vectors(f.positions(), f.dim);
    let mut m = DMatrix::zeros(vectors[0].len(), vectors.len());
    for (c, v) in vectors.iter().enumerate() {
        m.set_column(c, v);
    }
    let degenerate = numerical_rank(&m, RANK_TOL) < vectors.len();
    NullBasis {
        vectors,
        degenerate,
    }
}

pub(crate) fn null_vectors(positions: &[Point], dim: Dim) -> Vec<DVector<f64>> {
    let d = dim.d();
    let n = positions.len();
    let mut out = Vec::with_capacity(dim.trivial_motions());
    for a in 0..d {
        out.push(DVector::from_fn(n * d, |r, _| if r % d == a { 1.0 } else { 0.0 }));
    }
    for &(a, b) in dim.rotation_planes() {
        let mut v = DVector::zeros(n * d);
        for (i, p) in positions.iter().enumerate() {
            v[i * d + a] = p[b];
            v[i * d + b] = -p[a];
        }
        out.push(v);
    }
    out
}

/// The critical eigenvalue of `E` and its eigenvector.
#[derive(Debug, Clone)]
pub struct RigidityIndex {
    /// `λ₄` (2-D) or `λ₇` (3-D).
    pub value: f64,
    /// Unit eigenvector for `value`.
    pub vector: DVector<f64>,
    /// 0-based position of `value` in the ascending spectrum.
    pub position: usize,
    /// The next eigenvalue is within [`MULTIPLICITY_TOL`]; the eigenvector
    /// (and hence the gradient) is then not unique.
    pub repeated: bool,
    pub spectrum: SpectralResult,
}

pub fn rigidity_index(f: &Framework) -> Result<RigidityIndex> {
    let required = f.dim.d() + 1;
    if f.n() < required {
        return Err(Error::TooFewNodes {
            n: f.n(),
            dim: f.dim.d(),
            required,
        });
    }
    let spectrum = symmetric_eig(&rigidity_laplacian_matrix(f))?;
    let position = f.dim.index_position();
    let value = spectrum.eigenvalue(position);
    let repeated = position + 1 < spectrum.len()
        && (spectrum.eigenvalue(position + 1) - value).abs() < MULTIPLICITY_TOL;
    Ok(RigidityIndex {
        value,
        vector: spectrum.eigenvector(position),
        position,
        repeated,
        spectrum,
    })
}

/// Rank of `R` at tolerance [`RANK_TOL`] relative to its largest singular value.
pub fn rigidity_rank(f: &Framework) -> usize {
    numerical_rank(&rigidity_matrix(f), RANK_TOL)
}

/// Rank of `R` for an infinitesimally rigid framework on `n` nodes.
pub fn expected_rank(n: usize, dim: Dim) -> usize {
    let d = dim.d();
    if n >= d {
        d * n - dim.trivial_motions()
    } else {
        n * n.saturating_sub(1) / 2
    }
}

pub fn is_infinitesimally_rigid(f: &Framework) -> bool {
    rigidity_rank(f) == expected_rank(f.n(), f.dim)
}

/// `λ₂` of the weighted graph Laplacian.
pub fn algebraic_connectivity(f: &Framework) -> Result<f64> {
    if f.n() < 2 {
        return Ok(0.0);
    }
    Ok(symmetric_eig(&graph::laplacian(&f.graph))?.eigenvalue(1))
}
