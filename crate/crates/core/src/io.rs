//! Framework files.
//!
//! A framework file is a JSON document:
//!
//! ```json
//! {
//!   "dimension": 2,
//!   "positions": [[0, 0], [1, 0], [0, 1]],
//!   "edges": [[1, 2], [2, 3], [1, 3]],
//!   "weights": [1, 1, 1],
//!   "params": { "kappa": 10, "sigma_prime": 0.01 }
//! }
//! ```
//!
//! Edges are 1-based. Without `edges` the proximity rule generates them;
//! without `weights` the edges carry proximity weights. `params` defaults to
//! `κ = 10`, `σ' = 0.01` and is only consulted when proximity is in play.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, ProximityParams, WeightedGraph};
use crate::rigidity::{Dim, Framework, Point, Weighting};

pub const DEFAULT_PARAMS: ProximityParams = ProximityParams {
    kappa: 10.0,
    sigma_prime: 0.01,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameworkFile {
    pub dimension: usize,
    pub positions: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ProximityParams>,
}

impl FrameworkFile {
    /// Describe a framework with explicit edges. Proximity frameworks keep
    /// their params and omit weights; fixed ones list weights.
    pub fn from_framework(f: &Framework) -> Self {
        let d = f.dim().d();
        let (weights, params) = match f.weighting() {
            Weighting::Fixed => (Some(f.graph().weights().to_vec()), None),
            Weighting::Proximity(p) => (None, Some(p)),
        };
        FrameworkFile {
            dimension: d,
            positions: f.positions().iter().map(|p| p.as_slice()[..d].to_vec()).collect(),
            edges: Some(f.edges().iter().map(|e| [e.source + 1, e.sink + 1]).collect()),
            weights,
            params,
        }
    }

    pub fn to_framework(&self) -> Result<Framework> {
        let dim = Dim::from_usize(self.dimension)?;
        let d = dim.d();
        let positions = self
            .positions
            .iter()
            .enumerate()
            .map(|(i, row)| {
                if row.len() != d {
                    return Err(Error::Parse(format!(
                        "position {} has {} coordinates, expected {d}",
                        i + 1,
                        row.len()
                    )));
                }
                let mut p = Point::zeros();
                p.as_mut_slice()[..d].copy_from_slice(row);
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        let params = self.params.unwrap_or(DEFAULT_PARAMS);
        let Some(edges) = &self.edges else {
            if self.weights.is_some() {
                return Err(Error::Parse("weights given without edges".into()));
            }
            return Ok(Framework::from_proximity(dim, positions, params)?.0);
        };
        let n = positions.len();
        let mut pairs = Vec::with_capacity(edges.len());
        for &[a, b] in edges {
            if a == 0 || b == 0 || a > n || b > n {
                return Err(Error::Parse(format!("edge ({a}, {b}) is outside 1..={n}")));
            }
            pairs.push((a - 1, b - 1));
        }
        let graph = Graph::new(n, pairs)?;
        match &self.weights {
            Some(w) => {
                if w.len() != graph.m() {
                    return Err(Error::Parse(format!(
                        "{} weights for {} edges",
                        w.len(),
                        graph.m()
                    )));
                }
                Framework::new(dim, positions, WeightedGraph::new(graph, w.clone())?, Weighting::Fixed)
            }
            None => {
                params.validate()?;
                let weights = graph
                    .edges()
                    .iter()
                    .map(|e| {
                        let d2 = (positions[e.sink] - positions[e.source]).norm_squared();
                        params.weight(d2).ok_or_else(|| {
                            Error::Parse(format!(
                                "edge ({}, {}) is longer than kappa and has no weight",
                                e.source + 1,
                                e.sink + 1
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Framework::new(
                    dim,
                    positions,
                    WeightedGraph::new(graph, weights)?,
                    Weighting::Proximity(params),
                )
            }
        }
    }
}

pub fn parse_framework(text: &str) -> Result<Framework> {
    let file: FrameworkFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.to_framework()
}

pub fn load_framework(path: &Path) -> Result<Framework> {
    parse_framework(&std::fs::read_to_string(path)?)
}

pub fn framework_to_string(f: &Framework) -> String {
    serde_json::to_string_pretty(&FrameworkFile::from_framework(f)).expect("framework file serializes")
}

pub fn save_framework(f: &Framework, path: &Path) -> Result<()> {
    let mut text = framework_to_string(f);
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
