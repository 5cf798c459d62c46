//! Rigidity-maintenance control: the `coth` barrier energy, the closed-form
//! gradient of the rigidity eigenvalue with respect to each robot position,
//! and the resulting single-integrator velocity command.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rigidity::{Framework, Point, Weighting};

/// Tolerance on `‖v‖ = 1` accepted by [`lambda4_gradient`].
pub const UNIT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// Floor `ε` for the rigidity eigenvalue.
    pub epsilon: f64,
    /// Below `λ − ε < guard` the barrier slope is evaluated at `guard`.
    pub guard: f64,
    /// Per-robot speed limit.
    pub u_max: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            epsilon: 2.0,
            guard: 1e-3,
            u_max: 2.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.guard > 0.0 && self.u_max > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon, guard and u_max must be positive (got {}, {}, {})",
                self.epsilon, self.guard, self.u_max
            )));
        }
        Ok(())
    }
}

/// `V(λ) = coth(λ − ε)`.
pub fn energy(lambda: f64, params: &EnergyParams) -> Result<f64> {
    let x = barrier_gap(lambda, params)?;
    Ok(1.0 / x.tanh())
}

/// `−∂V/∂λ = csch²(max(λ − ε, guard))`, the gain applied to `∂λ/∂p_i`.
pub fn barrier_gain(lambda: f64, params: &EnergyParams) -> Result<f64> {
    let x = barrier_gap(lambda, params)?.max(params.guard);
    let s = x.sinh();
    Ok(1.0 / (s * s))
}

fn barrier_gap(lambda: f64, params: &EnergyParams) -> Result<f64> {
    let x = lambda - params.epsilon;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(Error::BarrierViolated {
            lambda,
            epsilon: params.epsilon,
        })
    }
}

/// `∂w_ij/∂p_i = −(w_ij/σ²)(p_i − p_j)` for proximity weights, zero for fixed ones.
pub fn weight_gradient(f: &Framework, i: usize, j: usize) -> Point {
    match f.weighting() {
        Weighting::Fixed => Point::zeros(),
        Weighting::Proximity(params) => {
            let w = f.weight_between(i, j);
            let diff = f.positions()[i] - f.positions()[j];
            -diff * (w / params.sigma_sq())
        }
    }
}

fn node_component(v: &DVector<f64>, i: usize, d: usize) -> Point {
    let mut p = Point::zeros();
    for a in 0..d {
        p[a] = v[i * d + a];
    }
    p
}

/// `∂λ/∂p_i` for one node, given the stacked eigenvector estimate.
///
/// `2 Σ_j w_ij (v_i − v_j)(v_i − v_j)ᵀ(p_i − p_j) + Σ_j ∂w_ij/∂p_i [z_ijᵀ(v_i − v_j)]²`
pub fn node_gradient(f: &Framework, v: &DVector<f64>, i: usize) -> Point {
    let d = f.dim().d();
    let pi = f.positions()[i];
    let vi = node_component(v, i, d);
    let mut g = Point::zeros();
    for &j in f.neighbors(i) {
        let diff_v = vi - node_component(v, j, d);
        let z = pi - f.positions()[j];
        let proj = diff_v.dot(&z);
        let w = f.weight_between(i, j);
        g += diff_v * (2.0 * w * proj);
        g += weight_gradient(f, i, j) * (proj * proj);
    }
    g
}

/// Gradient of the rigidity eigenvalue with respect to every position.
///
/// `v` must be a unit eigenvector for the eigenvalue being differentiated.
pub fn lambda4_gradient(f: &Framework, v: &DVector<f64>) -> Result<Vec<Point>> {
    let norm = v.norm();
    if (norm - 1.0).abs() > UNIT_TOL || v.len() != f.dim().d() * f.n() {
        return Err(Error::NotUnit { norm });
    }
    Ok((0..f.n()).map(|i| node_gradient(f, v, i)).collect())
}

#[derive(Debug, Clone)]
pub struct ControlOutput {
    pub velocities: Vec<Point>,
    /// `V(λ)` at the common eigenvalue (mean of per-agent values in the distributed case).
    pub energy: f64,
    /// Euclidean norm of the stacked unsaturated gradient `∂λ/∂p`.
    pub gradient_norm: f64,
}

/// `u_i = csch²(λ − ε) ∂λ/∂p_i`, clipped at `u_max` per robot.
pub fn control_step(
    f: &Framework,
    lambda: f64,
    v: &DVector<f64>,
    params: &EnergyParams,
) -> Result<ControlOutput> {
    control_step_per_agent(f, &vec![lambda; f.n()], v, params)
}

/// Control law where each agent uses its own eigenvalue estimate `λ̃_i`.
pub fn control_step_per_agent(
    f: &Framework,
    lambdas: &[f64],
    v: &DVector<f64>,
    params: &EnergyParams,
) -> Result<ControlOutput> {
    let mut velocities = Vec::with_capacity(f.n());
    let mut grad_sq = 0.0;
    let mut energy_sum = 0.0;
    for (i, &lambda) in lambdas.iter().enumerate().take(f.n()) {
        let gain = barrier_gain(lambda, params)?;
        energy_sum += energy(lambda, params)?;
        let g = node_gradient(f, v, i);
        grad_sq += g.norm_squared();
        velocities.push(saturate(g * gain, params.u_max));
    }
    Ok(ControlOutput {
        velocities,
        energy: energy_sum / f.n().max(1) as f64,
        gradient_norm: grad_sq.sqrt(),
    })
}

fn saturate(u: Point, u_max: f64) -> Point {
    let s = u.norm();
    if s > u_max {
        u * (u_max / s)
    } else {
        u
    }
}

/// Leader reference input `[0.5, 0.3 + 0.4 cos(p_x)]`, time-invariant.
pub fn leader_input(p1: &Point, _t: f64) -> Point {
    Point::new(0.5, 0.3 + 0.4 * p1.x.cos(), 0.0)
}
