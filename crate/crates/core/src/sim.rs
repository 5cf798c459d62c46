//! Closed-loop scenarios: single-integrator robots under the rigidity
//! controller (plus an optional leader input), with the proximity graph
//! rebuilt after every Euler step.

use std::io::Write;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{self, EnergyParams};
use crate::error::{Error, Result};
use crate::estimation::{DistributedEstimator, EstimationConfig, Method, RunOptions};
use crate::graph::ProximityParams;
use crate::rigidity::{
    algebraic_connectivity, rigidity_index, Dim, Framework, Point, RigidityIndex, MULTIPLICITY_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    /// Centralized eigensolver.
    Oracle,
    /// Per-agent estimates from [`DistributedEstimator`].
    Distributed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeaderLaw {
    /// `[0.5, 0.3 + 0.4 cos(p_x)]`.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    pub dim: usize,
    pub seed: u64,
    /// Explicit initial positions; randomly generated when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<Vec<f64>>>,
    /// Side of the square (cube) the initial positions are drawn from.
    pub box_size: f64,
    /// Generated formations must satisfy `λ > ε + margin`.
    pub margin: f64,
    pub max_retries: usize,
    pub kappa: f64,
    pub sigma_prime: f64,
    pub epsilon: f64,
    pub guard: f64,
    pub u_max: f64,
    /// Euler step.
    pub h: f64,
    /// Simulated duration.
    pub duration: f64,
    pub leader: bool,
    pub leader_law: LeaderLaw,
    pub estimator: EstimatorMode,
    /// Outer-cycle budget for the first distributed estimate from a random start.
    pub initial_cycles: usize,
    /// Write a framework snapshot every this many steps (0 disables).
    pub snapshot_every: usize,
    pub estimation: EstimationConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 5,
            dim: 2,
            seed: 1,
            positions: None,
            box_size: 10.0,
            margin: 0.5,
            max_retries: 1000,
            kappa: 10.0,
            sigma_prime: 0.01,
            epsilon: 2.0,
            guard: 1e-3,
            u_max: 2.0,
            h: 0.01,
            duration: 20.0,
            leader: true,
            leader_law: LeaderLaw::Cosine,
            estimator: EstimatorMode::Oracle,
            initial_cycles: 60,
            snapshot_every: 0,
            estimation: EstimationConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn proximity(&self) -> ProximityParams {
        ProximityParams {
            kappa: self.kappa,
            sigma_prime: self.sigma_prime,
        }
    }

    pub fn energy(&self) -> EnergyParams {
        EnergyParams {
            epsilon: self.epsilon,
            guard: self.guard,
            u_max: self.u_max,
        }
    }

    pub fn dimension(&self) -> Result<Dim> {
        Dim::from_usize(self.dim)
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.h).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dimension()?;
        self.proximity().validate()?;
        self.energy().validate()?;
        if !(self.h > 0.0 && self.duration > 0.0 && self.box_size > 0.0) {
            return Err(Error::InvalidParameter(
                "h, duration and box_size must be positive".into(),
            ));
        }
        if self.n < dim.d() + 1 {
            return Err(Error::TooFewNodes {
                n: self.n,
                dim: dim.d(),
                required: dim.d() + 1,
            });
        }
        if self.leader && dim == Dim::Spatial {
            return Err(Error::InvalidParameter(
                "the leader law is planar; disable the leader for 3-D scenarios".into(),
            ));
        }
        if let Some(p) = &self.positions {
            if p.len() != self.n {
                return Err(Error::InvalidParameter(format!(
                    "{} initial positions for n = {}",
                    p.len(),
                    self.n
                )));
            }
        }
        if self.estimator == EstimatorMode::Distributed {
            self.estimation.validate(self.n)?;
        }
        Ok(())
    }

    /// Apply `key=value` overrides (see [`apply_overrides`]) and re-validate.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        let next = apply_overrides(&*self, overrides, &["positions"])?;
        next.validate()?;
        *self = next;
        Ok(())
    }
}

/// Apply `key=value` overrides to any serializable config. Keys are dotted
/// paths (`estimation.mu`, `estimation.consensus.kp`) that must already
/// exist in the serialized config, apart from the top-level `optional` keys.
/// Values use TOML syntax; bare words are taken as strings.
pub fn apply_overrides<T, S>(config: &T, overrides: &[S], optional: &[&str]) -> Result<T>
where
    T: Serialize + serde::de::DeserializeOwned,
    S: AsRef<str>,
{
    let mut value = toml::Value::try_from(config).map_err(|e| Error::Parse(e.to_string()))?;
    for item in overrides {
        let item = item.as_ref();
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("override `{item}` is not key=value")))?;
        set_path(&mut value, key.trim(), parse_value(raw.trim()), optional)?;
    }
    value.try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(root: &mut toml::Value, key: &str, value: toml::Value, optional: &[&str]) -> Result<()> {
    let unknown = || Error::Parse(format!("unknown config key `{key}`"));
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = root;
    for (depth, part) in parts.iter().enumerate() {
        let table = node.as_table_mut().ok_or_else(unknown)?;
        if depth + 1 == parts.len() {
            if !table.contains_key(*part) && !(depth == 0 && optional.contains(part)) {
                return Err(unknown());
            }
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table.get_mut(*part).ok_or_else(unknown)?;
    }
    Err(unknown())
}

/// Rejection-sample positions in the configured box until the proximity
/// framework has no coincident pairs and `λ > ε + margin`.
pub fn generate_rigid_initial(cfg: &ScenarioConfig) -> Result<Framework> {
    let dim = cfg.dimension()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let floor = cfg.epsilon + cfg.margin;
    for _ in 0..cfg.max_retries {
        let positions: Vec<Point> = (0..cfg.n)
            .map(|_| {
                let mut p = Point::zeros();
                for a in 0..dim.d() {
                    p[a] = rng.random::<f64>() * cfg.box_size;
                }
                p
            })
            .collect();
        let (f, collisions) = Framework::from_proximity(dim, positions, cfg.proximity())?;
        if collisions.is_empty() && rigidity_index(&f)?.value > floor {
            return Ok(f);
        }
    }
    Err(Error::GenerationFailed {
        retries: cfg.max_retries,
    })
}

/// Initial framework from explicit positions or the generator.
pub fn initial_framework(cfg: &ScenarioConfig) -> Result<Framework> {
    let dim = cfg.dimension()?;
    match &cfg.positions {
        None => generate_rigid_initial(cfg),
        Some(rows) => {
            let positions = rows
                .iter()
                .map(|row| {
                    if row.len() != dim.d() {
                        return Err(Error::InvalidParameter(format!(
                            "initial position has {} coordinates, expected {}",
                            row.len(),
                            dim.d()
                        )));
                    }
                    let mut p = Point::zeros();
                    p.as_mut_slice()[..dim.d()].copy_from_slice(row);
                    Ok(p)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Framework::from_proximity(dim, positions, cfg.proximity())?.0)
        }
    }
}

/// One row of the metrics trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub lambda4: f64,
    pub lambda2: f64,
    pub min_dist: f64,
    pub energy: f64,
    pub edge_count: usize,
    pub positions: Vec<Point>,
    /// Per-agent eigenvalue estimates (the oracle value in oracle mode).
    pub lambda_tilde: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTrace {
    pub dim: Dim,
    pub records: Vec<StepRecord>,
}

impl MetricsTrace {
    pub fn new(dim: Dim) -> Self {
        MetricsTrace {
            dim,
            records: Vec::new(),
        }
    }

    pub fn header(&self, n: usize) -> String {
        let mut cols: Vec<String> = ["t", "lambda4", "lambda2", "min_dist", "energy", "edge_count"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let axes = ["x", "y", "z"];
        for i in 1..=n {
            for axis in &axes[..self.dim.d()] {
                cols.push(format!("{axis}{i}"));
            }
        }
        for i in 1..=n {
            cols.push(format!("lambda_tilde{i}"));
        }
        cols.join(",")
    }

    /// CSV with round-trip exact numbers.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.records.first().map_or(0, |r| r.positions.len());
        writeln!(out, "{}", self.header(n))?;
        for r in &self.records {
            let mut row = vec![
                num(r.t),
                num(r.lambda4),
                num(r.lambda2),
                num(r.min_dist),
                num(r.energy),
                r.edge_count.to_string(),
            ];
            for p in &r.positions {
                row.extend(p.as_slice()[..self.dim.d()].iter().map(|x| num(*x)));
            }
            row.extend(r.lambda_tilde.iter().map(|x| num(*x)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn min_lambda4(&self) -> f64 {
        self.records.iter().map(|r| r.lambda4).fold(f64::INFINITY, f64::min)
    }

    pub fn min_lambda2(&self) -> f64 {
        self.records.iter().map(|r| r.lambda2).fold(f64::INFINITY, f64::min)
    }

    pub fn min_distance(&self) -> f64 {
        self.records.iter().map(|r| r.min_dist).fold(f64::INFINITY, f64::min)
    }

    /// Largest `|λ̃_i − λ| / λ` over all records and agents.
    pub fn max_estimate_error(&self) -> f64 {
        self.records
            .iter()
            .flat_map(|r| r.lambda_tilde.iter().map(move |l| ((l - r.lambda4) / r.lambda4).abs()))
            .fold(0.0, f64::max)
    }
}

/// Shortest text that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Where and why a run stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct Breach {
    pub step: usize,
    pub t: f64,
    pub lambda4: f64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: MetricsTrace,
    pub snapshots: Vec<(usize, Framework)>,
    pub breach: Option<Breach>,
    pub multiplicity_events: usize,
}

impl RunResult {
    pub fn summary(&self) -> Summary {
        Summary {
            steps: self.trace.records.len().saturating_sub(1),
            min_lambda4: self.trace.min_lambda4(),
            min_lambda2: self.trace.min_lambda2(),
            min_distance: self.trace.min_distance(),
            max_estimate_error: self.trace.max_estimate_error(),
            multiplicity_events: self.multiplicity_events,
            breach_step: self.breach.as_ref().map(|b| b.step),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub steps: usize,
    pub min_lambda4: f64,
    pub min_lambda2: f64,
    pub min_distance: f64,
    pub max_estimate_error: f64,
    pub multiplicity_events: usize,
    pub breach_step: Option<usize>,
}

/// A running scenario.
pub struct Simulation {
    cfg: ScenarioConfig,
    framework: Framework,
    estimator: Option<DistributedEstimator>,
    previous_vector: Option<DVector<f64>>,
    step: usize,
    multiplicity_events: usize,
}

impl Simulation {
    /// Build the initial formation and, in distributed mode, converge the
    /// first estimate. Fails if the formation starts at or below the floor.
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let framework = initial_framework(&cfg)?;
        let idx = rigidity_index(&framework)?;
        if idx.value <= cfg.epsilon {
            return Err(Error::BarrierViolated {
                lambda: idx.value,
                epsilon: cfg.epsilon,
            });
        }
        let estimator = match cfg.estimator {
            EstimatorMode::Oracle => None,
            EstimatorMode::Distributed => {
                let mut est = DistributedEstimator::new(&framework, cfg.estimation)?;
                est.run_with(RunOptions {
                    method: Method::Inverse,
                    max_cycles: cfg.initial_cycles.max(1),
                    stop_on_tol: true,
                    track_history: false,
                })?;
                Some(est)
            }
        };
        Ok(Simulation {
            cfg,
            framework,
            estimator,
            previous_vector: None,
            step: 0,
            multiplicity_events: 0,
        })
    }

    pub fn framework(&self) -> &Framework {
        &self.framework
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.h
    }

    /// Oracle eigenvector, kept continuous across steps: within a repeated
    /// eigenvalue the previous direction is projected onto the eigenspace.
    fn oracle_vector(&mut self, idx: &RigidityIndex) -> DVector<f64> {
        let mut v = idx.vector.clone();
        if let Some(prev) = &self.previous_vector {
            if idx.repeated {
                self.multiplicity_events += 1;
                let spectrum = &idx.spectrum;
                let mut proj = DVector::zeros(v.len());
                for k in 0..spectrum.len() {
                    if (spectrum.eigenvalue(k) - idx.value).abs() < MULTIPLICITY_TOL {
                        let u = spectrum.eigenvector(k);
                        proj += &u * u.dot(prev);
                    }
                }
                if proj.norm() > 1e-6 {
                    v = proj.normalize();
                }
            }
            if v.dot(prev) < 0.0 {
                v = -v;
            }
        }
        v
    }

    /// Metrics for the current state and the estimate the controller acts on.
    fn observe(&mut self) -> Result<(StepRecord, Vec<f64>, DVector<f64>)> {
        let idx = rigidity_index(&self.framework)?;
        let lambda2 = algebraic_connectivity(&self.framework)?;
        let (lambdas, v) = match self.estimator.as_mut() {
            None => {
                let v = self.oracle_vector(&idx);
                (vec![idx.value; self.framework.n()], v)
            }
            Some(est) => (est.lambda_estimates(), est.estimate()),
        };
        let energy = if idx.value > self.cfg.epsilon {
            controller::energy(idx.value, &self.cfg.energy())?
        } else {
            f64::INFINITY
        };
        let record = StepRecord {
            t: self.time(),
            lambda4: idx.value,
            lambda2,
            min_dist: self.framework.min_pairwise_distance(),
            energy,
            edge_count: self.framework.m(),
            positions: self.framework.positions().to_vec(),
            lambda_tilde: lambdas.clone(),
        };
        Ok((record, lambdas, v))
    }

    /// Advance one Euler step from an observed state.
    fn advance(&mut self, lambdas: &[f64], v: &DVector<f64>) -> Result<()> {
        let out = controller::control_step_per_agent(&self.framework, lambdas, v, &self.cfg.energy())?;
        let mut velocities = out.velocities;
        if self.cfg.leader {
            let lead = match self.cfg.leader_law {
                LeaderLaw::Cosine => controller::leader_input(&self.framework.positions()[0], self.time()),
            };
            velocities[0] += lead;
        }
        let h = self.cfg.h;
        let dim = self.framework.dim();
        let positions: Vec<Point> = self
            .framework
            .positions()
            .iter()
            .zip(&velocities)
            .map(|(p, u)| dim.project(p + u * h))
            .collect();
        self.framework = Framework::from_proximity(dim, positions, self.cfg.proximity())?.0;
        self.previous_vector = Some(v.clone());
        self.step += 1;
        if let Some(est) = self.estimator.as_mut() {
            est.update_framework(&self.framework)?;
            est.run()?;
        }
        Ok(())
    }

    /// Run to the configured duration. A barrier breach ends the run early
    /// with a diagnostic rather than an error, so the trace is kept.
    pub fn run(mut self) -> Result<RunResult> {
        let steps = self.cfg.steps();
        let mut trace = MetricsTrace::new(self.framework.dim());
        let mut snapshots = Vec::new();
        let mut breach = None;
        loop {
            let (record, lambdas, v) = self.observe()?;
            let lambda4 = record.lambda4;
            trace.records.push(record);
            if self.cfg.snapshot_every > 0 && self.step.is_multiple_of(self.cfg.snapshot_every) {
                snapshots.push((self.step, self.framework.clone()));
            }
            if lambda4 <= self.cfg.epsilon {
                breach = Some(Breach {
                    step: self.step,
                    t: self.time(),
                    lambda4,
                    message: format!("rigidity eigenvalue {lambda4} reached the floor {}", self.cfg.epsilon),
                });
                break;
            }
            if self.step >= steps {
                break;
            }
            match self.advance(&lambdas, &v) {
                Ok(()) => {}
                Err(Error::BarrierViolated { lambda, epsilon }) => {
                    breach = Some(Breach {
                        step: self.step,
                        t: self.time(),
                        lambda4,
                        message: format!("eigenvalue estimate {lambda} reached the floor {epsilon}"),
                    });
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(RunResult {
            trace,
            snapshots,
            breach,
            multiplicity_events: self.multiplicity_events,
        })
    }
}

pub fn run(cfg: ScenarioConfig) -> Result<RunResult> {
    Simulation::new(cfg)?.run()
}
