//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach the console;
//! the process exits nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rigidity_core::controller::lambda4_gradient;
use rigidity_core::estimation::baseline::{direct_solve, iterations_to_tolerance};
use rigidity_core::estimation::{
    deflated_laplacian, CycleRecord, DistributedEstimator, EstimationConfig, Method, RunOptions,
};
use rigidity_core::linalg::symmetric_eig;
use rigidity_core::rigidity::{
    algebraic_connectivity, is_infinitesimally_rigid, rigidity_function, rigidity_index, rigidity_laplacian_matrix,
    rigidity_matrix,
};
use rigidity_core::sim::{self, generate_rigid_initial, EstimatorMode, ScenarioConfig};
use rigidity_core::{Dim, Framework, Point, ProximityParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_point(rng: &mut ChaCha8Rng, dim: Dim, size: f64) -> Point {
    let mut p = Point::zeros();
    for a in 0..dim.d() {
        p[a] = rng.random::<f64>() * size;
    }
    p
}

fn random_edges(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < density {
                edges.push((i, j));
            }
        }
    }
    edges
}

fn random_rigid(rng: &mut ChaCha8Rng, dim: Dim, n: usize) -> Framework {
    loop {
        let pos: Vec<Point> = (0..n).map(|_| random_point(rng, dim, 10.0)).collect();
        let density = rng.random_range(0.5..1.0);
        let edges = random_edges(rng, n, density);
        if let Ok(f) = Framework::unit(dim, pos, &edges) {
            if is_infinitesimally_rigid(&f) {
                return f;
            }
        }
    }
}

fn scenario(n: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n,
        seed,
        ..Default::default()
    }
}

fn null_space_dimensions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut bad = Vec::new();
    let mut check = |f: &Framework, zeros: usize| {
        let spectrum = symmetric_eig(&rigidity_laplacian_matrix(f)).unwrap();
        let small = spectrum.count_below(1e-9);
        let next = spectrum.eigenvalue(zeros);
        if small != zeros || next <= 0.0 {
            bad.push(format!("n={} zeros={small} next={next:e}", f.n()));
        }
    };
    for k in 0..50 {
        let f = random_rigid(&mut rng, Dim::Planar, 4 + k % 7);
        check(&f, 3);
    }
    for k in 0..20 {
        let f = random_rigid(&mut rng, Dim::Spatial, 4 + k % 5);
        check(&f, 6);
    }
    outcome(
        bad.is_empty(),
        format!("50 planar + 20 spatial rigid frameworks, {} mismatches {:?}", bad.len(), bad),
    )
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

fn perturbed(f: &Framework, node: usize, axis: usize, h: f64) -> Framework {
    let mut pos = f.positions().to_vec();
    pos[node][axis] += h;
    f.with_positions(pos).unwrap()
}

fn jacobian_and_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut worst_jac = 0.0_f64;
    for k in 0..20 {
        let dim = if k % 4 == 3 { Dim::Spatial } else { Dim::Planar };
        let f = random_rigid(&mut rng, dim, 4 + k % 5);
        let r = rigidity_matrix(&f);
        let h = 1e-6 * 10.0;
        let d = dim.d();
        let mut fd = Vec::new();
        let mut an = Vec::new();
        for i in 0..f.n() {
            for a in 0..d {
                let up = rigidity_function(&perturbed(&f, i, a, h));
                let dn = rigidity_function(&perturbed(&f, i, a, -h));
                for e in 0..f.m() {
                    fd.push((up[e] - dn[e]) / (2.0 * h));
                    an.push(r[(e, i * d + a)]);
                }
            }
        }
        worst_jac = worst_jac.max(rel_err(&an, &fd));
    }

    let mut worst_grad = 0.0_f64;
    let mut used = 0;
    let mut seed = 300;
    while used < 20 {
        seed += 1;
        let f = generate_rigid_initial(&scenario(5 + used % 4, seed)).unwrap();
        let idx = rigidity_index(&f).unwrap();
        let gap = idx.spectrum.eigenvalue(idx.position + 1) - idx.value;
        if gap < 1e-3 {
            continue;
        }
        used += 1;
        let grad = lambda4_gradient(&f, &idx.vector).unwrap();
        let h = 1e-5;
        let mut fd = Vec::new();
        let mut an = Vec::new();
        for (i, g) in grad.iter().enumerate() {
            for a in 0..2 {
                let up = rigidity_index(&perturbed(&f, i, a, h)).unwrap().value;
                let dn = rigidity_index(&perturbed(&f, i, a, -h)).unwrap().value;
                fd.push((up - dn) / (2.0 * h));
                an.push(g[a]);
            }
        }
        worst_grad = worst_grad.max(rel_err(&an, &fd));
    }
    outcome(
        worst_jac < 1e-6 && worst_grad < 1e-5,
        format!("R vs finite differences max rel err {worst_jac:.2e}; gradient (20 proximity instances, simple index) max rel err {worst_grad:.2e}"),
    )
}

fn proximity() -> ProximityParams {
    ProximityParams::new(10.0, 0.01).unwrap()
}

/// Mixed families: proximity, sparse, disconnected and with a coincident
/// neighbor pair.
fn mixed_framework(rng: &mut ChaCha8Rng, k: usize) -> Framework {
    let n = 4 + k % 6;
    let dim = Dim::Planar;
    let mut pos: Vec<Point> = (0..n).map(|_| random_point(rng, dim, 10.0)).collect();
    match k % 4 {
        0 => Framework::from_proximity(dim, pos, proximity()).unwrap().0,
        1 => {
            let density = rng.random_range(0.2..0.6);
            let edges = random_edges(rng, n, density);
            Framework::unit(dim, pos, &edges).unwrap()
        }
        2 => {
            let split = n / 2;
            for p in &mut pos[split..] {
                p.x += 100.0;
            }
            Framework::from_proximity(dim, pos, proximity()).unwrap().0
        }
        _ => {
            let j = rng.random_range(1..n);
            pos[j] = pos[0];
            if k % 8 == 3 {
                Framework::from_proximity(dim, pos, proximity()).unwrap().0
            } else {
                let density = rng.random_range(0.3..1.0);
                let mut edges = random_edges(rng, n, density);
                if !edges.contains(&(0, j)) {
                    edges.push((0, j));
                }
                Framework::unit(dim, pos, &edges).unwrap()
            }
        }
    }
}

fn connectivity_and_collisions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut prop1 = Vec::new();
    let mut prop2 = Vec::new();
    let mut coincident = 0;
    for k in 0..200 {
        let f = mixed_framework(&mut rng, k);
        let l4 = rigidity_index(&f).unwrap().value;
        let l2 = algebraic_connectivity(&f).unwrap();
        if l4 > 1e-6 && !(l2 > 1e-9) {
            prop1.push(k);
        }
        let has_coincident = (0..f.m()).any(|e| f.edge_vector(e).norm() == 0.0);
        if has_coincident {
            coincident += 1;
            if !(l4 < 1e-9) {
                prop2.push(format!("#{k} n={} m={} lambda4={l4:.4}", f.n(), f.m()));
            }
        }
    }
    outcome(
        prop1.is_empty() && prop2.is_empty(),
        format!(
            "200 frameworks; index>0 without connectivity: {}; {coincident} with a coincident neighbor pair, of which {} keep a positive index (first: {})",
            prop1.len(),
            prop2.len(),
            prop2.first().map_or("none", String::as_str)
        ),
    )
}

fn distributed_estimation() -> Outcome {
    let mut worst = 0.0_f64;
    let mut failures = Vec::new();
    let mut count = 0;
    for n in 4..=8 {
        for seed in [1, 2] {
            let f = generate_rigid_initial(&scenario(n, seed)).unwrap();
            let l4 = rigidity_index(&f).unwrap().value;
            let cfg = EstimationConfig::default();
            let mut est = DistributedEstimator::new(&f, cfg).unwrap();
            let run = est.run();
            count += 1;
            match run {
                Ok(rep) => {
                    let err = rep
                        .lambda_tilde
                        .iter()
                        .map(|x| ((x - l4) / l4).abs())
                        .fold(0.0, f64::max);
                    worst = worst.max(err);
                    if err >= 1e-3 {
                        failures.push(format!("n={n} seed={seed} err={err:.2e}"));
                    }
                }
                Err(e) => failures.push(format!("n={n} seed={seed}: {e}")),
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("{count} frameworks n=4..8, gamma=0.25, mu=1 < epsilon=2; worst per-agent rel err {worst:.2e} {failures:?}"),
    )
}

/// Per cycle, the agent estimate furthest from `target`.
fn worst_agent_series(history: &[CycleRecord], target: f64) -> Vec<f64> {
    history
        .iter()
        .map(|r| {
            r.lambda_tilde
                .iter()
                .copied()
                .fold(target, |w, x| if (x - target).abs() > (w - target).abs() { x } else { w })
        })
        .collect()
}

fn inverse_vs_power() -> Outcome {
    let cycles = 80;
    let mut wins = 0;
    let mut monotone = 0;
    let mut rows = Vec::new();
    for k in 0..10u64 {
        let f = generate_rigid_initial(&scenario(5 + (k as usize) % 4, 100 + k)).unwrap();
        let l4 = rigidity_index(&f).unwrap().value;
        let base = EstimationConfig {
            seed: 7,
            ..Default::default()
        };
        let shift = symmetric_eig(&deflated_laplacian(&f, base.vartheta)).unwrap().max();
        let mut start: Option<DVector<f64>> = None;
        let mut count = |method: Method, mu: f64| -> Option<usize> {
            let mut est = DistributedEstimator::new(&f, EstimationConfig { mu, ..base }).unwrap();
            match &start {
                Some(v) => est.set_estimate(v).unwrap(),
                None => start = Some(est.estimate()),
            }
            let rep = est
                .run_with(RunOptions {
                    method,
                    max_cycles: cycles,
                    stop_on_tol: false,
                    track_history: true,
                })
                .unwrap();
            iterations_to_tolerance(&worst_agent_series(&rep.history, l4), l4, 1e-3)
        };
        let power = count(Method::Power { shift }, 1.0);
        let inverse = count(Method::Inverse, 1.0);
        let sweep: Vec<Option<usize>> = [0.2, 0.5, 0.8]
            .iter()
            .map(|s| count(Method::Inverse, s * l4))
            .collect();
        let finite = |x: Option<usize>| x.unwrap_or(usize::MAX);
        if finite(inverse) < finite(power) {
            wins += 1;
        }
        if sweep.iter().all(Option::is_some) && sweep.windows(2).all(|w| w[1] < w[0]) {
            monotone += 1;
        }
        rows.push(format!(
            "power {} inverse {} sweep {:?}",
            power.map_or("-".into(), |x| x.to_string()),
            inverse.map_or("-".into(), |x| x.to_string()),
            sweep.iter().map(|x| x.map_or(-1, |v| v as i64)).collect::<Vec<_>>()
        ));
    }
    outcome(
        wins >= 8 && monotone == 10,
        format!("inverse (mu=1) beats power on {wins}/10; sweep 0.2/0.5/0.8 of the index strictly decreasing on {monotone}/10 [{}]", rows.join("; ")),
    )
}

fn leader_follower() -> Outcome {
    let text = std::fs::read_to_string(repo_root().join("scenarios/leader_follower.toml")).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    let mut mins = Vec::new();
    for mode in [EstimatorMode::Oracle, EstimatorMode::Distributed] {
        let mut cfg = ScenarioConfig::parse(&text).unwrap();
        cfg.estimator = mode;
        cfg.snapshot_every = 0;
        match sim::run(cfg) {
            Ok(res) => {
                let s = res.summary();
                let pass = res.breach.is_none()
                    && s.min_lambda4 > 2.0
                    && s.min_lambda2 > 0.0
                    && s.min_distance > 0.05;
                ok &= pass;
                mins.push(s.min_lambda4);
                parts.push(format!(
                    "{mode:?}: steps {} min lambda4 {:.4} min lambda2 {:.4} min dist {:.4}",
                    s.steps, s.min_lambda4, s.min_lambda2, s.min_distance
                ));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{mode:?}: {e}"));
            }
        }
    }
    if mins.len() == 2 {
        parts.push(format!("min lambda4 rel diff {:.1e}", ((mins[0] - mins[1]) / mins[0]).abs()));
    }
    outcome(ok, parts.join("; "))
}

fn solver_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0_f64;
    let mut failures = Vec::new();
    for k in 0..20u64 {
        let f = generate_rigid_initial(&scenario(4 + (k as usize) % 5, 200 + k)).unwrap();
        let mut cfg = EstimationConfig {
            solver_rounds: 100_000,
            solver_tol: 1e-13,
            ..Default::default()
        };
        cfg.consensus.quiet_tol = 1e-15;
        cfg.consensus.max_rounds = 20_000;
        let mut est = DistributedEstimator::new(&f, cfg).unwrap();
        let v = DVector::from_fn(2 * f.n(), |_, _| rng.random::<f64>() - 0.5).normalize();
        est.set_estimate(&v).unwrap();
        est.refresh_frame().unwrap();
        let rep = est.solve(0).unwrap();
        let r = DVector::from_iterator(
            2 * f.n(),
            est.agents().iter().flat_map(|a| [a.r.x, a.r.y]),
        );
        let exact = direct_solve(&deflated_laplacian(&f, cfg.vartheta), cfg.mu, &est.estimate()).unwrap();
        let err = (&r - &exact).norm() / exact.norm();
        worst = worst.max(err);
        if err >= 1e-6 || !rep.converged {
            failures.push(format!("#{k} err={err:.2e} rounds={}", rep.rounds));
        }
    }
    outcome(
        failures.is_empty(),
        format!("20 instances, worst rel err to the dense solve {worst:.2e} {failures:?}"),
    )
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn cli(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_rigidity"))
        .args(args)
        .output()
        .expect("run rigidity")
        .status
        .code()
        .unwrap_or(-1)
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    out.sort();
    out
}

fn determinism() -> Outcome {
    let root = repo_root();
    let pentagon = root.join("data/pentagon.json");
    let square = root.join("data/square_k4.json");
    let scenario = root.join("scenarios/leader_follower.toml");
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("analyze", vec!["analyze".into(), square.display().to_string()]),
        (
            "estimate",
            vec!["estimate".into(), pentagon.display().to_string(), "--trace".into(), "--cycles".into(), "30".into()],
        ),
        (
            "simulate",
            vec![
                "simulate".into(),
                scenario.display().to_string(),
                "--set".into(),
                "duration=1".into(),
                "--set".into(),
                "estimator=distributed".into(),
            ],
        ),
    ];
    let tmp = tempfile::tempdir().unwrap();
    let mut compared = 0;
    let mut diffs = Vec::new();
    for (name, args) in &commands {
        let mut codes = Vec::new();
        let mut dirs = Vec::new();
        for run in 0..2 {
            let out = tmp.path().join(format!("{name}{run}"));
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            let out_s = out.display().to_string();
            full.extend(["--out", &out_s]);
            codes.push(cli(&full));
            dirs.push(out);
        }
        if codes[0] != codes[1] {
            diffs.push(format!("{name}: exit codes {codes:?}"));
        }
        let a = csv_files(&dirs[0]);
        let b = csv_files(&dirs[1]);
        if a.len() != b.len() {
            diffs.push(format!("{name}: file sets differ"));
            continue;
        }
        for (x, y) in a.iter().zip(&b) {
            compared += 1;
            if std::fs::read(x).unwrap() != std::fs::read(y).unwrap() {
                diffs.push(format!("{name}: {} differs", x.file_name().unwrap().to_string_lossy()));
            }
        }
    }
    outcome(
        diffs.is_empty() && compared >= 4,
        format!("analyze, estimate and simulate run twice; {compared} CSV files compared {diffs:?}"),
    )
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Duration, Check); 8] = [
        ("null-space dimensions", Duration::from_secs(10), null_space_dimensions),
        ("jacobian and gradient", Duration::from_secs(30), jacobian_and_gradient),
        ("connectivity and coincident pairs", Duration::from_secs(60), connectivity_and_collisions),
        ("distributed estimation", Duration::from_secs(120), distributed_estimation),
        ("inverse vs power convergence", Duration::from_secs(300), inverse_vs_power),
        ("leader-follower run", Duration::from_secs(300), leader_follower),
        ("solver equivalence", Duration::from_secs(300), solver_equivalence),
        ("determinism", Duration::from_secs(300), determinism),
    ];
    let mut failed = 0;
    for (k, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed < *limit;
        if !pass {
            failed += 1;
        }
        println!(
            "{} [{}] {name} ({:.1}s, limit {}s): {}",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            elapsed.as_secs_f64(),
            limit.as_secs(),
            result.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
