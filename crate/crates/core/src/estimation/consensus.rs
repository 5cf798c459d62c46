//! Proportional-integral average consensus.
//!
//! Each agent `i` tracks the network average of its inputs `α_i` with the
//! explicit-Euler discretization of
//!
//! ```text
//! ż_i = ρ(α_i − z_i) − K_P Σ_j (z_i − z_j) + K_I Σ_j (w_i − w_j)
//! ẇ_i = −K_I Σ_j (z_i − z_j)
//! ```
//!
//! over its current neighbors. A bank holds one `(z, w)` pair per tracked
//! scalar for every agent; agent `i` only ever reads and writes `states[i]`
//! plus what its neighbors broadcast.

use serde::{Deserialize, Serialize};

use super::bus::{Header, NetBus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusConfig {
    pub rho: f64,
    pub kp: f64,
    pub ki: f64,
    /// `h_c = step_scale / (ρ + 2 K_P deg_max)`; values below 1 keep the
    /// explicit scheme stable.
    pub step_scale: f64,
    /// Round budget per averaging call.
    pub max_rounds: usize,
    /// Stop early once no estimate moves by more than
    /// `quiet_tol · max(1, max|α|)` in a round.
    pub quiet_tol: f64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            rho: 10.0,
            kp: 20.0,
            ki: 10.0,
            step_scale: 0.9,
            max_rounds: 400,
            quiet_tol: 1e-10,
        }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.kp > 0.0 && self.ki > 0.0) {
            return Err(Error::InvalidParameter(
                "consensus gains must be positive".into(),
            ));
        }
        if !(self.step_scale > 0.0) || self.max_rounds == 0 {
            return Err(Error::InvalidParameter(
                "consensus step scale and round budget must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Euler step for a graph whose degree never exceeds `max_degree`.
    pub fn step(&self, max_degree: usize) -> f64 {
        self.step_scale / (self.rho + 2.0 * self.kp * max_degree as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
}

impl ConsensusState {
    pub fn new(width: usize) -> Self {
        ConsensusState {
            z: vec![0.0; width],
            w: vec![0.0; width],
        }
    }
}

/// Outcome of one averaging call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageReport {
    pub rounds: usize,
    /// Stopped on the quiescence test rather than the round budget.
    pub settled: bool,
}

/// One consensus bank shared by all agents, `states[i]` owned by agent `i`.
#[derive(Debug, Clone)]
pub struct ConsensusBank {
    width: usize,
    states: Vec<ConsensusState>,
}

impl ConsensusBank {
    pub fn new(n: usize, width: usize) -> Self {
        ConsensusBank {
            width,
            states: vec![ConsensusState::new(width); n],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn states(&self) -> &[ConsensusState] {
        &self.states
    }

    /// Agent `i`'s current estimate of the averages.
    pub fn estimate(&self, i: usize) -> &[f64] {
        &self.states[i].z
    }

    pub fn reset(&mut self) {
        for s in &mut self.states {
            s.z.iter_mut().for_each(|x| *x = 0.0);
            s.w.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// One synchronous round. `inputs` is row-major `n × width`.
    /// Returns the largest change of any `z` entry.
    pub fn round(
        &mut self,
        inputs: &[f64],
        gains: &ConsensusConfig,
        step: f64,
        bus: &mut NetBus,
        header: Header,
    ) -> Result<f64> {
        let k = self.width;
        let states = &self.states;
        bus.exchange(header, 2 * k, |i, buf| {
            buf[..k].copy_from_slice(&states[i].z);
            buf[k..].copy_from_slice(&states[i].w);
        })?;
        let mut max_change = 0.0_f64;
        let mut lz = vec![0.0; k];
        let mut lw = vec![0.0; k];
        for (i, s) in self.states.iter_mut().enumerate() {
            lz.iter_mut().for_each(|x| *x = 0.0);
            lw.iter_mut().for_each(|x| *x = 0.0);
            for (_, payload) in bus.inbox(i) {
                for c in 0..k {
                    lz[c] += s.z[c] - payload[c];
                    lw[c] += s.w[c] - payload[k + c];
                }
            }
            for c in 0..k {
                let alpha = inputs[i * k + c];
                let dz = gains.rho * (alpha - s.z[c]) - gains.kp * lz[c] + gains.ki * lw[c];
                let dw = -gains.ki * lz[c];
                s.z[c] += step * dz;
                s.w[c] += step * dw;
                max_change = max_change.max((step * dz).abs());
            }
        }
        Ok(max_change)
    }

    /// Run rounds with fixed inputs until quiet or out of budget.
    ///
    /// Warm-starts from the current states. Fails if the estimates keep
    /// growing beyond any plausible average (unstable gains or step).
    pub fn average(
        &mut self,
        inputs: &[f64],
        gains: &ConsensusConfig,
        bus: &mut NetBus,
        header: Header,
    ) -> Result<AverageReport> {
        let input_scale = inputs.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        self.average_scaled(inputs, gains, bus, header, input_scale.max(1.0))
    }

    /// As [`average`](Self::average), with the quiescence test taken
    /// relative to `scale` (use the input magnitude itself when small
    /// averages must be resolved to relative precision).
    pub fn average_scaled(
        &mut self,
        inputs: &[f64],
        gains: &ConsensusConfig,
        bus: &mut NetBus,
        header: Header,
        scale: f64,
    ) -> Result<AverageReport> {
        debug_assert_eq!(inputs.len(), self.states.len() * self.width);
        let step = gains.step(bus.max_degree());
        let input_scale = inputs.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let quiet = gains.quiet_tol * scale;
        let bound = 4.0 * (input_scale + self.max_abs_z()) + 1e-300;
        let mut last_norm = self.max_abs_z();
        let mut growing = 0;
        for r in 1..=gains.max_rounds {
            let change = self.round(inputs, gains, step, bus, header)?;
            let norm = self.max_abs_z();
            if !norm.is_finite() {
                return Err(Error::ConsensusDiverged {
                    phase: header.phase.tag(),
                    rounds: r,
                });
            }
            growing = if norm > last_norm { growing + 1 } else { 0 };
            if growing >= 3 && norm > bound {
                return Err(Error::ConsensusDiverged {
                    phase: header.phase.tag(),
                    rounds: r,
                });
            }
            last_norm = norm;
            if change <= quiet {
                return Ok(AverageReport {
                    rounds: r,
                    settled: true,
                });
            }
        }
        Ok(AverageReport {
            rounds: gains.max_rounds,
            settled: false,
        })
    }

    fn max_abs_z(&self) -> f64 {
        self.states
            .iter()
            .flat_map(|s| s.z.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::bus::Phase;
    use crate::graph::Graph;

    fn header() -> Header {
        Header::new(Phase::Average)
    }

    #[test]
    fn path_graph_converges_to_mean() {
        let g = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
        let mut bus = NetBus::from_graph(&g);
        let mut bank = ConsensusBank::new(3, 1);
        let cfg = ConsensusConfig {
            max_rounds: 5000,
            quiet_tol: 1e-14,
            ..Default::default()
        };
        let rep = bank.average(&[1.0, 2.0, 3.0], &cfg, &mut bus, header()).unwrap();
        assert!(rep.settled);
        for i in 0..3 {
            assert!((bank.estimate(i)[0] - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn equal_inputs_are_a_fixed_point() {
        let g = Graph::complete(4);
        let mut bus = NetBus::from_graph(&g);
        let mut bank = ConsensusBank::new(4, 2);
        for s in &mut bank.states {
            s.z = vec![1.5, -0.5];
        }
        let cfg = ConsensusConfig::default();
        let step = cfg.step(bus.max_degree());
        let inputs = [1.5, -0.5, 1.5, -0.5, 1.5, -0.5, 1.5, -0.5];
        for _ in 0..10 {
            let change = bank.round(&inputs, &cfg, step, &mut bus, header()).unwrap();
            assert_eq!(change, 0.0);
        }
        assert_eq!(bank.estimate(2), &[1.5, -0.5]);
    }

    #[test]
    fn unstable_step_is_detected() {
        let g = Graph::complete(5);
        let mut bus = NetBus::from_graph(&g);
        let mut bank = ConsensusBank::new(5, 1);
        let cfg = ConsensusConfig {
            step_scale: 5.0,
            max_rounds: 1000,
            ..Default::default()
        };
        let r = bank.average(&[1.0, -2.0, 3.0, 0.5, 4.0], &cfg, &mut bus, header());
        assert!(matches!(r, Err(Error::ConsensusDiverged { .. })));
    }

    #[test]
    fn exhausted_budget_is_reported() {
        let g = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
        let mut bus = NetBus::from_graph(&g);
        let mut bank = ConsensusBank::new(3, 1);
        let cfg = ConsensusConfig {
            max_rounds: 3,
            ..Default::default()
        };
        let rep = bank.average(&[1.0, 2.0, 3.0], &cfg, &mut bus, header()).unwrap();
        assert_eq!(rep, AverageReport { rounds: 3, settled: false });
    }
}
