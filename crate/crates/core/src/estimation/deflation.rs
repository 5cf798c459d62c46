//! Deflation of the rigid-motion null space: `Ē = E + Q` with
//! `Q = ϑ Σ_k v_k v_kᵀ` over the translation and rotation null vectors.
//!
//! The null vectors are evaluated in a common reference frame `p̂`. Any
//! frame works since the span is unchanged; the estimator uses the centred
//! frame scaled so that every deflated eigenvalue is about `ϑ n`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rigidity::{null_vectors, rigidity_laplacian_matrix, Block, Dim, Framework, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeflationParams {
    /// Deflation strength `ϑ`.
    pub vartheta: f64,
    /// Shift `μ`; must stay below the rigidity eigenvalue.
    pub mu: f64,
}

impl DeflationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.vartheta > 0.0 && self.mu > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "vartheta and mu must be positive (got {}, {})",
                self.vartheta, self.mu
            )));
        }
        Ok(())
    }
}

/// Node-`i` component of the rotation null vector for plane `(a, b)`:
/// `p_b` at coordinate `a`, `−p_a` at coordinate `b`.
pub fn rotation_component(p: &Point, a: usize, b: usize) -> Point {
    let mut c = Point::zeros();
    c[a] = p[b];
    c[b] = -p[a];
    c
}

/// `Q_ij = ϑ (I + Σ_planes c_i c_jᵀ)`. In the plane this is
/// `ϑ [[p_iy p_jy + 1, −p_iy p_jx], [−p_ix p_jy, p_ix p_jx + 1]]`.
pub fn q_block(p_i: &Point, p_j: &Point, vartheta: f64, dim: Dim) -> Block {
    let mut q = dim.identity();
    for &(a, b) in dim.rotation_planes() {
        q += rotation_component(p_i, a, b) * rotation_component(p_j, a, b).transpose();
    }
    q * vartheta
}

/// `Q` assembled from [`q_block`]s.
pub fn deflation_matrix(frame: &[Point], vartheta: f64, dim: Dim) -> DMatrix<f64> {
    let d = dim.d();
    let n = frame.len();
    let mut q = DMatrix::zeros(d * n, d * n);
    for i in 0..n {
        for j in 0..n {
            let b = q_block(&frame[i], &frame[j], vartheta, dim);
            for a in 0..d {
                for c in 0..d {
                    q[(i * d + a, j * d + c)] = b[(a, c)];
                }
            }
        }
    }
    q
}

/// `ϑ Σ_k v_k v_kᵀ` from the stacked null vectors directly.
pub fn deflation_outer(frame: &[Point], vartheta: f64, dim: Dim) -> DMatrix<f64> {
    let vs = null_vectors(frame, dim);
    let len = vs[0].len();
    let mut q = DMatrix::zeros(len, len);
    for v in &vs {
        q += v * v.transpose();
    }
    q * vartheta
}

/// Centred positions scaled to mean squared norm `d/2`.
pub fn normalized_frame(positions: &[Point], dim: Dim) -> Vec<Point> {
    let n = positions.len() as f64;
    let centroid = positions.iter().fold(Point::zeros(), |acc, p| acc + p) / n;
    let spread = positions
        .iter()
        .map(|p| (p - centroid).norm_squared())
        .sum::<f64>()
        / n;
    let scale = frame_scale(spread, dim);
    positions.iter().map(|p| (p - centroid) * scale).collect()
}

pub(crate) fn frame_scale(mean_sq_spread: f64, dim: Dim) -> f64 {
    if mean_sq_spread > 0.0 {
        (0.5 * dim.d() as f64 / mean_sq_spread).sqrt()
    } else {
        1.0
    }
}

/// `Ē = E + Q` with `Q` taken in the normalized frame.
pub fn deflated_laplacian(f: &Framework, vartheta: f64) -> DMatrix<f64> {
    let frame = normalized_frame(f.positions(), f.dim());
    rigidity_laplacian_matrix(f) + deflation_matrix(&frame, vartheta, f.dim())
}
