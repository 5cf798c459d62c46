//! Per-agent estimation of the rigidity eigenpair by shifted inverse power
//! iteration on the deflated rigidity Laplacian.
//!
//! One outer cycle solves `(Ē − μI) r = ṽ` with block Jacobi
//! overrelaxation, then normalizes `r` into the next `ṽ`. Each agent only
//! uses its own position, its neighbors' relative positions and messages
//! from neighbors; the global terms (the deflation product and the norm)
//! go through PI average consensus.
//!
//! Termination of the inner loops (solver change, consensus quiescence,
//! outer angle change) is evaluated as a global AND of local tests, i.e.
//! ideal termination detection.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::bus::{Header, NetBus, Phase};
use super::consensus::{AverageReport, ConsensusBank, ConsensusConfig};
use super::deflation::{frame_scale, q_block, rotation_component, DeflationParams};
use crate::error::{Error, Result};
use crate::rigidity::{edge_block, stack, Block, Dim, Framework, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    /// Jacobi overrelaxation parameter `γ`.
    pub gamma: f64,
    /// Shift `μ`.
    pub mu: f64,
    /// Deflation strength `ϑ`.
    pub vartheta: f64,
    /// Operator bound on the rigidity eigenvalue; `ϑ n` must exceed it.
    pub lambda4_max: f64,
    pub consensus: ConsensusConfig,
    /// Inner solver budget `p̄`.
    pub solver_rounds: usize,
    /// Inner stop: largest iterate change below `solver_tol · max‖r_i‖`.
    pub solver_tol: f64,
    /// Outer budget `k̄`.
    pub outer_cycles: usize,
    /// Outer stop: angle between successive estimates below this.
    pub outer_tol: f64,
    /// Steps of deflated power iteration used to choose `μ` before the
    /// first inverse cycle (0 disables).
    pub power_warm_start: usize,
    /// Shift `c` for power iteration on `cI − Ē`; must bound `λ_max(Ē)`.
    pub power_shift: f64,
    /// After an edge-set change the warm start is mixed with this much of a
    /// fresh random vector, since the old eigenvector may now sit close to a
    /// different eigenvector where the angle-change test stops too early.
    pub restart_mix: f64,
    /// Outer budget for a cold start and for the first run after an
    /// edge-set change.
    pub restart_cycles: usize,
    pub seed: u64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            gamma: 0.25,
            mu: 1.0,
            vartheta: 6.0,
            lambda4_max: 20.0,
            consensus: ConsensusConfig::default(),
            solver_rounds: 400,
            solver_tol: 1e-6,
            outer_cycles: 15,
            outer_tol: 1e-4,
            power_warm_start: 0,
            power_shift: 100.0,
            restart_mix: 0.3,
            restart_cycles: 60,
            seed: 1,
        }
    }
}

impl EstimationConfig {
    pub fn deflation(&self) -> DeflationParams {
        DeflationParams {
            vartheta: self.vartheta,
            mu: self.mu,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        self.deflation().validate()?;
        self.consensus.validate()?;
        if !(self.gamma > 0.0 && self.gamma < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in (0, 2), got {}",
                self.gamma
            )));
        }
        if self.vartheta * n as f64 <= self.lambda4_max {
            return Err(Error::InvalidParameter(format!(
                "vartheta * n = {} does not exceed lambda4_max = {}",
                self.vartheta * n as f64,
                self.lambda4_max
            )));
        }
        if self.solver_rounds == 0 || self.outer_cycles == 0 {
            return Err(Error::InvalidParameter(
                "iteration budgets must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One robot's estimation state.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub id: usize,
    pub position: Point,
    /// Position in the shared deflation frame.
    pub frame_position: Point,
    pub neighbors: Vec<usize>,
    /// `w_ij z zᵀ` per neighbor, in `neighbors` order.
    edge_blocks: Vec<Block>,
    /// `E_ii`.
    diag_block: Block,
    /// `Q_ii`.
    q_diag: Block,
    /// `(E_ii + Q_ii − μI)⁻¹`.
    solve_inverse: Block,
    /// Shift used by this agent.
    pub mu: f64,
    /// Local component of the eigenvector estimate.
    pub v_tilde: Point,
    /// Local solver iterate.
    pub r: Point,
    /// Latest `Σ_{j≠i} Q_ij r_j`.
    pub q_off: Point,
    /// Latest normalization factor `sqrt(n Ave‖r‖²)`.
    pub r_scale: f64,
    pub lambda_tilde: f64,
    /// Outer counter `k`.
    pub outer_iter: usize,
    /// Inner counter `p`.
    pub inner_iter: usize,
}

impl AgentState {
    fn new(id: usize, f: &Framework, mu: f64) -> Self {
        let mut a = AgentState {
            id,
            position: f.positions()[id],
            frame_position: Point::zeros(),
            neighbors: Vec::new(),
            edge_blocks: Vec::new(),
            diag_block: Block::zeros(),
            q_diag: Block::zeros(),
            solve_inverse: Block::zeros(),
            mu,
            v_tilde: Point::zeros(),
            r: Point::zeros(),
            q_off: Point::zeros(),
            r_scale: 1.0,
            lambda_tilde: 0.0,
            outer_iter: 0,
            inner_iter: 0,
        };
        a.sense(f);
        a
    }

    /// Rebuild local blocks from own and neighbor positions.
    fn sense(&mut self, f: &Framework) {
        let i = self.id;
        self.position = f.positions()[i];
        self.neighbors = f.neighbors(i).to_vec();
        self.edge_blocks = self
            .neighbors
            .iter()
            .map(|&j| edge_block(&(f.positions()[j] - self.position), f.weight_between(i, j)))
            .collect();
        self.diag_block = self.edge_blocks.iter().sum();
    }

    /// `Σ_j w_ij z zᵀ (x_i − x_j)`, the agent's row of `E x`.
    fn laplacian_row<'a>(&self, own: &Point, received: impl Iterator<Item = (usize, &'a [f64])>, d: usize) -> Point {
        let mut acc = Point::zeros();
        for ((_, payload), block) in received.zip(&self.edge_blocks) {
            let mut xj = Point::zeros();
            xj.as_mut_slice()[..d].copy_from_slice(&payload[..d]);
            acc += block * (own - xj);
        }
        acc
    }
}

/// Outcome of one inner solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub rounds: usize,
    pub converged: bool,
    /// Some deflation average hit its round budget before settling.
    pub stale_consensus: bool,
}

/// Outcome of one outer cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleReport {
    pub solve: SolveReport,
    /// Largest per-agent estimate of the angle between successive iterates.
    pub angle_change: f64,
    /// The iterate vanished and was re-seeded.
    pub restarted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub cycle: usize,
    pub lambda_tilde: Vec<f64>,
    pub angle_change: f64,
}

#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub lambda_tilde: Vec<f64>,
    pub v_tilde: DVector<f64>,
    pub cycles: usize,
    pub inner_rounds: usize,
    pub converged: bool,
    pub stale_consensus: bool,
    /// Per-cycle eigenvalue readouts (cycle 0 is the starting vector) when requested.
    pub history: Vec<CycleRecord>,
}

/// Which iteration an estimation run uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Shifted inverse power iteration on `(Ē − μI)⁻¹`.
    Inverse,
    /// Power iteration on `cI − Ē` with the given `c`.
    Power { shift: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub method: Method,
    pub max_cycles: usize,
    pub stop_on_tol: bool,
    pub track_history: bool,
}

pub struct DistributedEstimator {
    cfg: EstimationConfig,
    dim: Dim,
    agents: Vec<AgentState>,
    bus: NetBus,
    centroid_bank: ConsensusBank,
    spread_bank: ConsensusBank,
    deflation_bank: ConsensusBank,
    power_bank: ConsensusBank,
    norm_bank: ConsensusBank,
    change_bank: ConsensusBank,
    rayleigh_bank: ConsensusBank,
    align_bank: ConsensusBank,
    rng: ChaCha8Rng,
    previous: Option<Vec<Point>>,
    warmed: bool,
    topology_changed: bool,
    /// Last observed per-cycle contraction of the angle change.
    contraction: f64,
}

impl std::fmt::Debug for DistributedEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DistributedEstimator")
            .field("n", &self.agents.len())
            .field("dim", &self.dim)
            .field("bus", &self.bus)
            .finish()
    }
}

impl DistributedEstimator {
    /// Agents start from a seeded random estimate.
    pub fn new(f: &Framework, cfg: EstimationConfig) -> Result<Self> {
        cfg.validate(f.n())?;
        let n = f.n();
        let dim = f.dim();
        let d = dim.d();
        let mut est = DistributedEstimator {
            cfg,
            dim,
            agents: (0..n).map(|i| AgentState::new(i, f, cfg.mu)).collect(),
            bus: NetBus::from_graph(f.graph().graph()),
            centroid_bank: ConsensusBank::new(n, d),
            spread_bank: ConsensusBank::new(n, 1),
            deflation_bank: ConsensusBank::new(n, deflation_width(dim)),
            power_bank: ConsensusBank::new(n, deflation_width(dim)),
            norm_bank: ConsensusBank::new(n, 1),
            change_bank: ConsensusBank::new(n, 1),
            rayleigh_bank: ConsensusBank::new(n, 1),
            align_bank: ConsensusBank::new(n, 1),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            previous: None,
            warmed: false,
            topology_changed: false,
            contraction: 0.5,
        };
        est.randomize();
        est.normalize_distributed(Header::new(Phase::Normalize))?;
        Ok(est)
    }

    /// Attach a per-message trace sink to the bus.
    pub fn with_trace(mut self, sink: Box<dyn std::io::Write + Send>) -> Result<Self> {
        let bus = std::mem::replace(&mut self.bus, NetBus::new(Vec::new()));
        self.bus = bus.with_trace(sink)?;
        Ok(self)
    }

    pub fn config(&self) -> &EstimationConfig {
        &self.cfg
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn bus(&self) -> &NetBus {
        &self.bus
    }

    pub fn flush_trace(&mut self) -> Result<()> {
        self.bus.flush()
    }

    /// Stacked `ṽ`.
    pub fn estimate(&self) -> DVector<f64> {
        let pts: Vec<Point> = self.agents.iter().map(|a| a.v_tilde).collect();
        stack(&pts, self.dim)
    }

    pub fn lambda_estimates(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.lambda_tilde).collect()
    }

    /// Overwrite every agent's component (e.g. a shared initial guess), then
    /// normalize over the network.
    pub fn set_estimate(&mut self, v: &DVector<f64>) -> Result<()> {
        let d = self.dim.d();
        for (i, a) in self.agents.iter_mut().enumerate() {
            let mut p = Point::zeros();
            for c in 0..d {
                p[c] = v[i * d + c];
            }
            a.v_tilde = p;
        }
        self.normalize_distributed(Header::new(Phase::Normalize))
    }

    /// Agents re-sense positions and neighbors after motion. Estimates and
    /// consensus banks are kept as warm starts.
    pub fn update_framework(&mut self, f: &Framework) -> Result<()> {
        if f.n() != self.agents.len() || f.dim() != self.dim {
            return Err(Error::InvalidParameter(
                "framework size or dimension changed under the estimator".into(),
            ));
        }
        for a in &mut self.agents {
            let before = std::mem::take(&mut a.neighbors);
            a.sense(f);
            self.topology_changed |= before != a.neighbors;
        }
        self.bus.set_topology(f.graph().graph());
        Ok(())
    }

    fn randomize(&mut self) {
        self.mix_random(0.0, 1.0);
    }

    /// `ṽ_i ← keep ṽ_i + scale ξ_i` with `ξ_i` drawn from the agent's stream.
    /// Agents hold unit-norm estimates overall, so `scale / √n` per entry
    /// gives a perturbation of global norm about `scale`.
    fn mix_random(&mut self, keep: f64, scale: f64) {
        let d = self.dim.d();
        let per_entry = scale / ((self.agents.len() * d) as f64).sqrt();
        for a in &mut self.agents {
            let mut p = Point::zeros();
            for c in 0..d {
                let x: f64 = StandardNormal.sample(&mut self.rng);
                p[c] = x * per_entry;
            }
            a.v_tilde = a.v_tilde * keep + p;
        }
    }

    fn n(&self) -> f64 {
        self.agents.len() as f64
    }

    /// Agree on the deflation frame: centroid and spread by consensus, then
    /// each agent's `p̂_i`, `Q_ii` and inverted solver block.
    pub fn refresh_frame(&mut self) -> Result<()> {
        let d = self.dim.d();
        let header = Header::new(Phase::Frame);
        let inputs: Vec<f64> = self
            .agents
            .iter()
            .flat_map(|a| a.position.as_slice()[..d].to_vec())
            .collect();
        self.centroid_bank
            .average(&inputs, &self.cfg.consensus, &mut self.bus, header)?;
        let centroids: Vec<Point> = (0..self.agents.len())
            .map(|i| {
                let mut c = Point::zeros();
                c.as_mut_slice()[..d].copy_from_slice(self.centroid_bank.estimate(i));
                c
            })
            .collect();
        let spread_inputs: Vec<f64> = self
            .agents
            .iter()
            .zip(&centroids)
            .map(|(a, c)| (a.position - c).norm_squared())
            .collect();
        self.spread_bank
            .average(&spread_inputs, &self.cfg.consensus, &mut self.bus, header)?;
        for (i, a) in self.agents.iter_mut().enumerate() {
            let scale = frame_scale(self.spread_bank.estimate(i)[0], self.dim);
            a.frame_position = (a.position - centroids[i]) * scale;
        }
        self.refresh_solver_blocks()
    }

    fn refresh_solver_blocks(&mut self) -> Result<()> {
        for a in &mut self.agents {
            a.q_diag = q_block(&a.frame_position, &a.frame_position, self.cfg.vartheta, self.dim);
            let block = a.diag_block + a.q_diag - self.dim.identity() * a.mu;
            a.solve_inverse = self
                .dim
                .invert(&block)
                .filter(|m| m.iter().all(|x| x.is_finite()))
                .ok_or(Error::ShiftTooLarge { agent: a.id + 1 })?;
        }
        Ok(())
    }

    /// `Σ_{j≠i} Q_ij x_j` at every agent, via averages of `p̂_b x_a`, `p̂_a x_b`
    /// and `x`.
    fn deflation_product(
        &mut self,
        values: &[Point],
        power: bool,
        header: Header,
    ) -> Result<(Vec<Point>, AverageReport)> {
        let d = self.dim.d();
        let planes = self.dim.rotation_planes();
        let width = deflation_width(self.dim);
        let mut inputs = Vec::with_capacity(self.agents.len() * width);
        for (a, x) in self.agents.iter().zip(values) {
            let p = a.frame_position;
            for &(pa, pb) in planes {
                inputs.push(p[pb] * x[pa]);
                inputs.push(p[pa] * x[pb]);
            }
            inputs.extend_from_slice(&x.as_slice()[..d]);
        }
        let scale = self.n() * self.cfg.vartheta;
        let bank = if power {
            &mut self.power_bank
        } else {
            &mut self.deflation_bank
        };
        let report = bank.average(&inputs, &self.cfg.consensus, &mut self.bus, header)?;
        let out = self
            .agents
            .iter()
            .zip(values)
            .enumerate()
            .map(|(i, (a, x))| {
                let avg = bank.estimate(i);
                let mut full = Point::zeros();
                full.as_mut_slice()[..d].copy_from_slice(&avg[2 * planes.len()..]);
                for (k, &(pa, pb)) in planes.iter().enumerate() {
                    let omega = avg[2 * k] - avg[2 * k + 1];
                    full += rotation_component(&a.frame_position, pa, pb) * omega;
                }
                full * scale - a.q_diag * x
            })
            .collect();
        Ok((out, report))
    }

    /// Deflation product for the current solver iterates, stored in `q_off`.
    pub fn q_matvec_round(&mut self, k: usize, p: usize) -> Result<AverageReport> {
        let r: Vec<Point> = self.agents.iter().map(|a| a.r).collect();
        let (q, report) = self.deflation_product(&r, false, Header::at(Phase::Deflation, k, p))?;
        for (a, q) in self.agents.iter_mut().zip(q) {
            a.q_off = q;
        }
        Ok(report)
    }

    /// One Jacobi overrelaxation round for `(Ē − μI) r = ṽ`:
    /// `r_i ← (1−γ) r_i − γ (Ē_ii − μI)⁻¹ (−ṽ_i + Σ_{j∈N_i} E_ij r_j + Σ_{j≠i} Q_ij r_j)`.
    ///
    /// Returns the largest iterate change, the largest iterate norm and the
    /// deflation average report.
    pub fn jacobi_solve_round(&mut self, k: usize, p: usize) -> Result<(f64, f64, AverageReport)> {
        let d = self.dim.d();
        let agents = &self.agents;
        self.bus.exchange(Header::at(Phase::Solve, k, p), d, |i, buf| {
            buf.copy_from_slice(&agents[i].r.as_slice()[..d]);
        })?;
        // E_ij r_j summed over neighbors, with E_ij = −w_ij z zᵀ.
        let off_e: Vec<Point> = self
            .agents
            .iter()
            .map(|a| {
                let mut acc = Point::zeros();
                for ((_, payload), block) in self.bus.inbox(a.id).zip(&a.edge_blocks) {
                    let mut rj = Point::zeros();
                    rj.as_mut_slice()[..d].copy_from_slice(payload);
                    acc -= block * rj;
                }
                acc
            })
            .collect();
        let report = self.q_matvec_round(k, p)?;
        let gamma = self.cfg.gamma;
        let mut max_change = 0.0_f64;
        let mut max_norm = 0.0_f64;
        for (a, off_e) in self.agents.iter_mut().zip(off_e) {
            let residual = -a.v_tilde + off_e + a.q_off;
            let next = a.r * (1.0 - gamma) - a.solve_inverse * residual * gamma;
            max_change = max_change.max((next - a.r).norm());
            max_norm = max_norm.max(next.norm());
            a.r = next;
            a.inner_iter = p + 1;
        }
        Ok((max_change, max_norm, report))
    }

    /// Inner loop: warm-started at `r_i = ṽ_i · (previous norm)`.
    pub fn solve(&mut self, k: usize) -> Result<SolveReport> {
        for a in &mut self.agents {
            a.r = a.v_tilde * a.r_scale;
        }
        let mut stale = false;
        for p in 0..self.cfg.solver_rounds {
            let (change, norm, report) = self.jacobi_solve_round(k, p)?;
            stale |= !report.settled;
            if !(norm.is_finite()) {
                return Err(Error::InvalidParameter(
                    "solver iterate diverged; reduce gamma or the shift".into(),
                ));
            }
            if change <= self.cfg.solver_tol * norm {
                return Ok(SolveReport {
                    rounds: p + 1,
                    converged: true,
                    stale_consensus: stale,
                });
            }
        }
        Ok(SolveReport {
            rounds: self.cfg.solver_rounds,
            converged: false,
            stale_consensus: stale,
        })
    }

    /// `ṽ_i = r_i / sqrt(n Ave(‖r_i‖²))`, taking `ṽ` itself as `r`.
    pub fn normalize_distributed(&mut self, header: Header) -> Result<()> {
        for a in &mut self.agents {
            a.r = a.v_tilde;
        }
        self.normalize_iterate(header).map(|_| ())
    }

    /// Normalize the solver iterate into the next estimate. Returns the
    /// largest per-agent estimate of the angle to the previous estimate and
    /// whether the iterate was re-seeded.
    fn normalize_iterate(&mut self, header: Header) -> Result<(f64, bool)> {
        let n = self.n();
        let inputs: Vec<f64> = self.agents.iter().map(|a| a.r.norm_squared()).collect();
        self.norm_bank
            .average(&inputs, &self.cfg.consensus, &mut self.bus, header)?;
        let vanished = (0..self.agents.len()).any(|i| !(n * self.norm_bank.estimate(i)[0] > 1e-24));
        if vanished {
            self.randomize();
            for a in &mut self.agents {
                a.r = a.v_tilde;
                a.r_scale = 1.0;
            }
            self.norm_bank.reset();
            let inputs: Vec<f64> = self.agents.iter().map(|a| a.r.norm_squared()).collect();
            self.norm_bank
                .average(&inputs, &self.cfg.consensus, &mut self.bus, header)?;
        }
        let mut moved = Vec::with_capacity(self.agents.len());
        for (i, a) in self.agents.iter_mut().enumerate() {
            let scale = (n * self.norm_bank.estimate(i)[0]).max(f64::MIN_POSITIVE).sqrt();
            let next = a.r / scale;
            moved.push((next - a.v_tilde).norm_squared());
            a.v_tilde = next;
            a.r_scale = scale;
        }
        if vanished {
            return Ok((std::f64::consts::FRAC_PI_2, true));
        }
        // Chord length between successive unit estimates, averaged to
        // relative precision so that small angles are resolved.
        let scale = moved.iter().fold(f64::MIN_POSITIVE, |m, x| m.max(*x));
        self.change_bank
            .average_scaled(&moved, &self.cfg.consensus, &mut self.bus, header, scale)?;
        let max_angle = (0..self.agents.len())
            .map(|i| {
                let chord = (n * self.change_bank.estimate(i)[0]).max(0.0).sqrt();
                2.0 * (0.5 * chord).min(1.0).asin()
            })
            .fold(0.0, f64::max);
        Ok((max_angle, false))
    }

    /// One outer step `k`: solve, then normalize.
    pub fn inverse_iteration_cycle(&mut self, k: usize) -> Result<CycleReport> {
        let solve = self.solve(k)?;
        let (angle_change, restarted) = self.normalize_iterate(Header::at(Phase::Normalize, k, 0))?;
        for a in &mut self.agents {
            a.outer_iter = k;
        }
        Ok(CycleReport {
            solve,
            angle_change,
            restarted,
        })
    }

    /// One step of power iteration on `cI − Ē`, then normalize.
    pub fn power_cycle(&mut self, k: usize, shift: f64) -> Result<CycleReport> {
        let d = self.dim.d();
        let values: Vec<Point> = self.agents.iter().map(|a| a.v_tilde).collect();
        let agents = &self.agents;
        self.bus.exchange(Header::at(Phase::Power, k, 0), d, |i, buf| {
            buf.copy_from_slice(&agents[i].v_tilde.as_slice()[..d]);
        })?;
        let e_rows: Vec<Point> = self
            .agents
            .iter()
            .map(|a| a.laplacian_row(&a.v_tilde, self.bus.inbox(a.id), d))
            .collect();
        let (q_off, report) = self.deflation_product(&values, true, Header::at(Phase::Deflation, k, 0))?;
        for ((a, e_row), q_off) in self.agents.iter_mut().zip(e_rows).zip(q_off) {
            let ebar_x = e_row + a.q_diag * a.v_tilde + q_off;
            a.r = a.v_tilde * shift - ebar_x;
        }
        let (angle_change, restarted) = self.normalize_iterate(Header::at(Phase::Normalize, k, 0))?;
        Ok(CycleReport {
            solve: SolveReport {
                rounds: 1,
                converged: true,
                stale_consensus: !report.settled,
            },
            angle_change,
            restarted,
        })
    }

    /// Eigenvalue readout: `z_i = ṽ_iᵀ Σ_j w_ij z zᵀ (ṽ_i − ṽ_j)`, then
    /// `λ̃_i = n Ave(z_i)`. The `z_i` sum to `ṽᵀ E ṽ`.
    pub fn rayleigh_local(&mut self, k: usize) -> Result<AverageReport> {
        let d = self.dim.d();
        let agents = &self.agents;
        self.bus.exchange(Header::at(Phase::Rayleigh, k, 0), d, |i, buf| {
            buf.copy_from_slice(&agents[i].v_tilde.as_slice()[..d]);
        })?;
        let inputs: Vec<f64> = self
            .agents
            .iter()
            .map(|a| a.v_tilde.dot(&a.laplacian_row(&a.v_tilde, self.bus.inbox(a.id), d)))
            .collect();
        let report = self.rayleigh_bank.average(
            &inputs,
            &self.cfg.consensus,
            &mut self.bus,
            Header::at(Phase::Rayleigh, k, 0),
        )?;
        let n = self.n();
        for (i, a) in self.agents.iter_mut().enumerate() {
            a.lambda_tilde = n * self.rayleigh_bank.estimate(i)[0];
        }
        Ok(report)
    }

    /// Flip every component if the estimate points away from `reference`.
    fn align_sign(&mut self, reference: &[Point]) -> Result<()> {
        let inputs: Vec<f64> = self
            .agents
            .iter()
            .zip(reference)
            .map(|(a, r)| a.v_tilde.dot(r))
            .collect();
        self.align_bank.average(
            &inputs,
            &self.cfg.consensus,
            &mut self.bus,
            Header::new(Phase::Align),
        )?;
        for (i, a) in self.agents.iter_mut().enumerate() {
            if self.align_bank.estimate(i)[0] < 0.0 {
                a.v_tilde = -a.v_tilde;
            }
        }
        Ok(())
    }

    /// Choose `μ` from a few deflated power steps: `μ_i = λ̃_i / 2`.
    fn power_warm_start(&mut self) -> Result<()> {
        for k in 0..self.cfg.power_warm_start {
            self.power_cycle(k, self.cfg.power_shift)?;
        }
        self.rayleigh_local(0)?;
        for a in &mut self.agents {
            if a.lambda_tilde > 0.0 {
                a.mu = 0.5 * a.lambda_tilde;
            }
        }
        self.refresh_solver_blocks()
    }

    /// One full estimation with the configured budgets and stopping rules.
    /// A cold start (no previous estimate) gets the restart budget.
    pub fn run(&mut self) -> Result<EstimateReport> {
        let max_cycles = if self.previous.is_none() {
            self.cfg.outer_cycles.max(self.cfg.restart_cycles)
        } else {
            self.cfg.outer_cycles
        };
        self.run_with(RunOptions {
            method: Method::Inverse,
            max_cycles,
            stop_on_tol: true,
            track_history: false,
        })
    }

    pub fn run_with(&mut self, opts: RunOptions) -> Result<EstimateReport> {
        self.refresh_frame()?;
        if opts.method == Method::Inverse && !self.warmed && self.cfg.power_warm_start > 0 {
            self.power_warm_start()?;
        }
        self.warmed = true;
        let mut max_cycles = opts.max_cycles;
        if self.topology_changed {
            self.topology_changed = false;
            if self.cfg.restart_mix > 0.0 {
                self.mix_random(1.0, self.cfg.restart_mix);
                self.normalize_distributed(Header::new(Phase::Normalize))?;
                max_cycles = max_cycles.max(self.cfg.restart_cycles);
            }
        }
        let mut history = Vec::new();
        if opts.track_history {
            self.rayleigh_local(0)?;
            history.push(CycleRecord {
                cycle: 0,
                lambda_tilde: self.lambda_estimates(),
                angle_change: f64::NAN,
            });
        }
        let mut cycles = 0;
        let mut inner_rounds = 0;
        let mut converged = false;
        let mut stale = false;
        let mut last_change: Option<f64> = None;
        for k in 1..=max_cycles {
            let rep = match opts.method {
                Method::Inverse => self.inverse_iteration_cycle(k)?,
                Method::Power { shift } => self.power_cycle(k, shift)?,
            };
            cycles = k;
            inner_rounds += rep.solve.rounds;
            stale |= rep.solve.stale_consensus;
            if opts.track_history {
                self.rayleigh_local(k)?;
                history.push(CycleRecord {
                    cycle: k,
                    lambda_tilde: self.lambda_estimates(),
                    angle_change: rep.angle_change,
                });
            }
            // The distance to the fixed point is about Δθ / (1 − q) for a
            // contraction q per cycle, which matters when λ₅ is close to λ₄.
            if let Some(prev) = last_change.filter(|&p| p > 0.0) {
                self.contraction = (rep.angle_change / prev).clamp(0.0, 0.999);
            }
            last_change = (!rep.restarted).then_some(rep.angle_change);
            let remaining = rep.angle_change / (1.0 - self.contraction);
            let floor = 1e-2 * self.cfg.outer_tol;
            if !rep.restarted && (remaining < self.cfg.outer_tol || rep.angle_change < floor) {
                converged = true;
                if opts.stop_on_tol {
                    break;
                }
            }
        }
        if let Some(prev) = self.previous.take() {
            self.align_sign(&prev)?;
        }
        if !opts.track_history {
            self.rayleigh_local(cycles)?;
        }
        self.previous = Some(self.agents.iter().map(|a| a.v_tilde).collect());
        Ok(EstimateReport {
            lambda_tilde: self.lambda_estimates(),
            v_tilde: self.estimate(),
            cycles,
            inner_rounds,
            converged,
            stale_consensus: stale,
            history,
        })
    }
}

fn deflation_width(dim: Dim) -> usize {
    2 * dim.rotation_planes().len() + dim.d()
}
