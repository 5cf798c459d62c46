//! `rigidity`: static rigidity analysis, eigenvalue-estimation convergence
//! runs and closed-loop simulation.
//!
//! Exit codes: `analyze` returns 0 for an infinitesimally rigid framework
//! and 1 otherwise; `simulate` returns 0 when the barrier holds and 1 on a
//! breach; every command returns 2 on invalid input.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rigidity_core::estimation::baseline::iterations_to_tolerance;
use rigidity_core::estimation::{
    deflated_laplacian, DistributedEstimator, EstimationConfig, Method, RunOptions,
};
use rigidity_core::io::{load_framework, save_framework};
use rigidity_core::linalg::symmetric_eig;
use rigidity_core::rigidity::{
    algebraic_connectivity, expected_rank, rigidity_index, rigidity_rank, Dim, RANK_TOL,
};
use rigidity_core::sim::{self, num, ScenarioConfig, Simulation};

#[derive(Parser, Debug)]
#[command(name = "rigidity", version, about = "Rigidity analysis, estimation and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spectrum of the rigidity Laplacian, rank of R and the rigidity verdict.
    Analyze {
        /// Framework file (JSON).
        file: PathBuf,
        /// Also write `analysis.json` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convergence of distributed eigenvalue estimation: power iteration
    /// against shifted inverse iteration over a list of shifts.
    Estimate {
        /// Framework file (JSON); must be infinitesimally rigid.
        file: PathBuf,
        /// Run only this method (default: both).
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Shifts for inverse iteration, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.2, 0.5, 0.8])]
        mu: Vec<f64>,
        /// Read `--mu` as absolute shifts instead of fractions of the oracle eigenvalue.
        #[arg(long)]
        mu_absolute: bool,
        /// Outer iterations per run.
        #[arg(long, default_value_t = 60)]
        cycles: usize,
        /// Relative eigenvalue error that counts as converged.
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        /// Shift for the power baseline (default: largest eigenvalue of the deflated matrix).
        #[arg(long)]
        power_shift: Option<f64>,
        /// Start every run from the oracle eigenvector instead of a random vector.
        #[arg(long)]
        warm: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Estimation config override, e.g. `--set gamma=0.3` (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Write a per-message trace of the first run to `messages.csv`.
        #[arg(long)]
        trace: bool,
        #[arg(long, default_value = "out/estimate")]
        out: PathBuf,
    },
    /// Closed-loop run from a scenario file (or the defaults).
    Simulate {
        /// Scenario file (TOML).
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Scenario override, e.g. `--set estimator=distributed` (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = "out/simulate")]
        out: PathBuf,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Power,
    Inverse,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze { file, out } => analyze(&file, out.as_deref()),
        Command::Estimate {
            file,
            method,
            mu,
            mu_absolute,
            cycles,
            tol,
            power_shift,
            warm,
            seed,
            overrides,
            trace,
            out,
        } => estimate(EstimateArgs {
            file,
            method,
            mu,
            mu_absolute,
            cycles,
            tol,
            power_shift,
            warm,
            seed,
            overrides,
            trace,
            out,
        }),
        Command::Simulate {
            config,
            seed,
            overrides,
            out,
        } => simulate(config.as_deref(), seed, &overrides, &out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|x| num(*x)).collect::<Vec<_>>().join(", ")
}

fn analyze(file: &Path, out: Option<&Path>) -> Result<u8> {
    let f = load_framework(file).with_context(|| format!("reading {}", file.display()))?;
    let idx = rigidity_index(&f)?;
    let rank = rigidity_rank(&f);
    let expected = expected_rank(f.n(), f.dim());
    let rigid = rank == expected;
    let lambda2 = algebraic_connectivity(&f)?;
    let tol = RANK_TOL * idx.spectrum.max().max(1.0);
    let null_dim = idx.spectrum.count_below(tol);
    let label = match f.dim() {
        Dim::Planar => "lambda4",
        Dim::Spatial => "lambda7",
    };
    println!("dimension: {}", f.dim().d());
    println!("nodes: {}", f.n());
    println!("edges: {}", f.m());
    println!("rigid: {rigid}");
    println!("rank: {rank}/{expected}");
    println!("{label}: {}", num(idx.value));
    println!("repeated: {}", idx.repeated);
    println!("lambda2: {}", num(lambda2));
    println!("null_space_dim: {null_dim}");
    println!("spectrum: [{}]", join(&idx.spectrum.eigenvalues));
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let report = serde_json::json!({
            "dimension": f.dim().d(),
            "nodes": f.n(),
            "edges": f.m(),
            "rigid": rigid,
            "rank": rank,
            "expected_rank": expected,
            "index_name": label,
            "index": idx.value,
            "repeated": idx.repeated,
            "lambda2": lambda2,
            "null_space_dim": null_dim,
            "spectrum": idx.spectrum.eigenvalues,
        });
        fs::write(dir.join("analysis.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(if rigid { 0 } else { 1 })
}

struct EstimateArgs {
    file: PathBuf,
    method: Option<MethodArg>,
    mu: Vec<f64>,
    mu_absolute: bool,
    cycles: usize,
    tol: f64,
    power_shift: Option<f64>,
    warm: bool,
    seed: u64,
    overrides: Vec<String>,
    trace: bool,
    out: PathBuf,
}

struct RunSpec {
    name: String,
    method: Method,
    mu: f64,
}

fn estimate(args: EstimateArgs) -> Result<u8> {
    let f = load_framework(&args.file).with_context(|| format!("reading {}", args.file.display()))?;
    let idx = rigidity_index(&f)?;
    if rigidity_rank(&f) != expected_rank(f.n(), f.dim()) {
        bail!("framework is not infinitesimally rigid; there is no eigenvalue to estimate");
    }
    let base = EstimationConfig {
        seed: args.seed,
        ..EstimationConfig::default()
    };
    let base: EstimationConfig = sim::apply_overrides(&base, &args.overrides, &[])?;
    let lambda = idx.value;
    let shift = match args.power_shift {
        Some(c) => c,
        None => symmetric_eig(&deflated_laplacian(&f, base.vartheta))?.max(),
    };
    let mut runs = Vec::new();
    if args.method != Some(MethodArg::Inverse) {
        runs.push(RunSpec {
            name: "power".into(),
            method: Method::Power { shift },
            mu: base.mu,
        });
    }
    if args.method != Some(MethodArg::Power) {
        for &m in &args.mu {
            let mu = if args.mu_absolute { m } else { m * lambda };
            let name = if args.mu_absolute {
                format!("inverse_mu={m}")
            } else {
                format!("inverse_mu={m}*lambda")
            };
            runs.push(RunSpec {
                name,
                method: Method::Inverse,
                mu,
            });
        }
    }
    fs::create_dir_all(&args.out)?;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut summary = String::from("run,method,mu,iterations_to_tol,final_estimate,final_rel_error\n");
    println!("oracle: {}", num(lambda));
    for (k, run) in runs.iter().enumerate() {
        let cfg = EstimationConfig { mu: run.mu, ..base };
        let mut est = DistributedEstimator::new(&f, cfg)?;
        if args.trace && k == 0 {
            let file = fs::File::create(args.out.join("messages.csv"))?;
            est = est.with_trace(Box::new(std::io::BufWriter::new(file)))?;
        }
        if args.warm {
            est.set_estimate(&idx.vector)?;
        }
        let report = est.run_with(RunOptions {
            method: run.method,
            max_cycles: args.cycles,
            stop_on_tol: false,
            track_history: true,
        })?;
        est.flush_trace()?;
        // The largest per-agent deviation decides convergence.
        let worst: Vec<f64> = report
            .history
            .iter()
            .map(|r| {
                r.lambda_tilde
                    .iter()
                    .copied()
                    .max_by(|a, b| (a - lambda).abs().total_cmp(&(b - lambda).abs()))
                    .unwrap_or(f64::NAN)
            })
            .collect();
        let hit = iterations_to_tolerance(&worst, lambda, args.tol);
        let last = *worst.last().expect("history has the starting estimate");
        let method = match run.method {
            Method::Power { .. } => "power",
            Method::Inverse => "inverse",
        };
        let mu = match run.method {
            Method::Power { .. } => String::new(),
            Method::Inverse => num(run.mu),
        };
        let hit_text = hit.map_or_else(|| "none".to_string(), |h| h.to_string());
        summary.push_str(&format!(
            "{},{method},{mu},{hit_text},{},{}\n",
            run.name,
            num(last),
            num(((last - lambda) / lambda).abs())
        ));
        println!("{}: iterations_to_tol={hit_text} final={}", run.name, num(last));
        columns.push(worst);
    }
    let mut csv = String::from("iteration");
    for run in &runs {
        csv.push(',');
        csv.push_str(&run.name);
    }
    csv.push('\n');
    let rows = columns.iter().map(Vec::len).max().unwrap_or(0);
    for i in 0..rows {
        csv.push_str(&i.to_string());
        for col in &columns {
            csv.push(',');
            if let Some(v) = col.get(i) {
                csv.push_str(&num(*v));
            }
        }
        csv.push('\n');
    }
    fs::write(args.out.join("convergence.csv"), csv)?;
    fs::write(args.out.join("summary.csv"), summary)?;
    Ok(0)
}

fn simulate(config: Option<&Path>, seed: Option<u64>, overrides: &[String], out: &Path) -> Result<u8> {
    let mut cfg = match config {
        Some(path) => ScenarioConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.apply_overrides(overrides)?;
    let started = Instant::now();
    let result = Simulation::new(cfg.clone())?.run()?;
    let wall = started.elapsed().as_secs_f64();
    fs::create_dir_all(out)?;
    let mut trace = std::io::BufWriter::new(fs::File::create(out.join("trace.csv"))?);
    result.trace.write_csv(&mut trace)?;
    trace.flush()?;
    if !result.snapshots.is_empty() {
        let dir = out.join("snapshots");
        fs::create_dir_all(&dir)?;
        for (step, f) in &result.snapshots {
            save_framework(f, &dir.join(format!("step_{step:06}.json")))?;
        }
    }
    fs::write(out.join("config.toml"), cfg.to_toml())?;
    let s = result.summary();
    let report = serde_json::json!({
        "summary": s,
        "lambda2_positive": s.min_lambda2 > 0.0,
        "breach": result.breach.as_ref().map(|b| serde_json::json!({
            "step": b.step, "t": b.t, "lambda4": b.lambda4, "message": b.message,
        })),
        "wall_time_s": wall,
    });
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    println!("steps: {}", s.steps);
    println!("min_lambda4: {}", num(s.min_lambda4));
    println!("min_lambda2: {}", num(s.min_lambda2));
    println!("lambda2_positive: {}", s.min_lambda2 > 0.0);
    println!("min_distance: {}", num(s.min_distance));
    println!("max_estimate_error: {}", num(s.max_estimate_error));
    println!("wall_time_s: {wall:.3}");
    match &result.breach {
        None => Ok(0),
        Some(b) => {
            eprintln!("barrier breached at step {} (t = {}): {}", b.step, b.t, b.message);
            Ok(1)
        }
    }
}
