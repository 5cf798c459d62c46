//! Rigidity maintenance for multi-robot formations.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: undirected graphs, incidence and Laplacian matrices, and the
//!   distance-dependent proximity graph with Gaussian edge weights.
//! - [`rigidity`]: frameworks, the rigidity matrix `R = Zᵀ H̄`, the rigidity
//!   Laplacian `E = Rᵀ W R`, rigid-motion null vectors and the rigidity index.
//! - [`linalg`]: the dense symmetric eigensolver used as the centralized oracle.
//! - [`controller`]: the `coth` barrier energy, the closed-form gradient of
//!   the rigidity index and the per-robot control law.
//! - [`estimation`]: per-agent estimation of the rigidity eigenpair over a
//!   simulated synchronous network (PI consensus, Jacobi overrelaxation,
//!   shifted inverse power iteration).
//! - [`sim`]: the closed-loop scenario runner and its metrics trace.
//! - [`io`]: the framework file format.

pub mod controller;
pub mod error;
pub mod estimation;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod rigidity;
pub mod sim;

pub use error::{Error, Result};
pub use graph::{Edge, Graph, ProximityGraph, ProximityParams, WeightedGraph};
pub use linalg::SpectralResult;
pub use rigidity::{Dim, Framework, Point, RigidityIndex, RigidityModel, Weighting};
