//! End-to-end acceptance checks. Runs as a plain binary so the per-criterion
//! report is always printed; exits non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use clap::Parser;
use common::*;
use flimp::allocators::Strategy;
use flimp::cli::{cmd_run, Cli, Command};
use flimp::harness::{budget_sweep, compare_strategies, ExperimentConfig};
use flimp::portfolio::*;
use flimp::sim::{SimConfig, World};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const INSTANCES: usize = 100;

fn instances() -> Vec<CovarianceModel> {
    let mut rng = rng(2718);
    (0..INSTANCES).map(|k| random_instance(&mut rng, 2 + k % 7)).collect()
}

/// θ₁..θ₄ from an explicit inverse, independent of the library's factorization.
fn oracle_theta(m: &CovarianceModel) -> [f64; 4] {
    let inv = m.cov().clone().try_inverse().unwrap();
    let e = DVector::from_element(m.n(), 1.0);
    let r = m.mean();
    let t1 = e.dot(&(&inv * r));
    let t2 = r.dot(&(&inv * r));
    let t3 = e.dot(&(&inv * &e));
    [t1, t2, t3, t2 * t3 - t1 * t1]
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn closed_form_correctness() -> Outcome {
    let models = instances();
    let mut rng = rng(31);
    let targets: Vec<f64> = models
        .iter()
        .map(|m| {
            let r = m.mean().as_slice();
            let (lo, hi) = r.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            rng.random_range(lo..=hi)
        })
        .collect();

    let start = Instant::now();
    let solved: Vec<AllocationWeights> = models
        .iter()
        .zip(&targets)
        .map(|(m, &t)| solve_min_variance(m, t))
        .collect();
    let elapsed = start.elapsed();

    let mut worst_rel = 0.0f64;
    for (k, ((m, &t), w)) in models.iter().zip(&targets).zip(&solved).enumerate() {
        let sum: f64 = w.weights.iter().sum();
        let ret: f64 = w.weights.iter().zip(m.mean().iter()).map(|(a, b)| a * b).sum();
        check((sum - 1.0).abs() <= 1e-9, || format!("instance {k}: sum w = {sum}"))?;
        check((ret - t).abs() <= 1e-9, || format!("instance {k}: w'r = {ret}, target {t}"))?;
        let v = DVector::from_column_slice(&w.weights);
        let var = v.dot(&(m.cov() * &v));
        let o = DVector::from_column_slice(&equality_oracle(m, t));
        let oracle_var = o.dot(&(m.cov() * &o));
        let rel = (var - oracle_var).abs() / oracle_var;
        worst_rel = worst_rel.max(rel);
        check(rel <= 1e-6, || format!("instance {k}: variance {var} vs oracle {oracle_var}"))?;
    }
    check(elapsed < Duration::from_secs(5), || format!("closed-form solves took {elapsed:?}"))?;
    Ok(format!("{INSTANCES} instances, worst relative variance gap {worst_rel:.2e}, solves {elapsed:.2?}"))
}

fn hyperbola_identity() -> Outcome {
    let mut worst = 0.0f64;
    let mut points = 0;
    for (k, m) in instances().iter().enumerate() {
        let [t1, t2, t3, t4] = oracle_theta(m);
        let targets = auto_targets(m, 21, 3.0);
        for p in efficient_frontier(m, &targets) {
            let e = p.expected_return;
            let lhs = p.std_dev.powi(2) * t3 - (e - t1 / t3).powi(2) * t3 * t3 / t4;
            worst = worst.max((lhs - 1.0).abs());
            points += 1;
            check((lhs - 1.0).abs() <= 1e-9, || format!("instance {k}: residual {lhs} at E = {e}"))?;
        }
        let gmv = global_min_variance(m);
        let w = DVector::from_column_slice(&gmv.weights.weights);
        let var = w.dot(&(m.cov() * &w));
        check((var - 1.0 / t3).abs() <= 1e-12, || format!("instance {k}: GMV variance {var} vs {}", 1.0 / t3))?;
        check((gmv.expected_return - t1 / t3).abs() <= 1e-12, || {
            format!("instance {k}: GMV return {} vs {}", gmv.expected_return, t1 / t3)
        })?;
        let _ = t2;
    }
    Ok(format!("{points} frontier points, worst residual {worst:.2e}"))
}

fn gradient_identity() -> Outcome {
    let mut rng = rng(77);
    let mut worst = 0.0f64;
    for (k, m) in instances().iter().enumerate() {
        let n = m.n();
        for w in [random_feasible(&mut rng, n), solve_min_variance(m, m.mean().mean()).weights] {
            let g = marginal_risk(&w, m).unwrap();
            let fd = fd_gradient(m, &w, 1e-5);
            let scale = g.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let rel = max_abs_diff(&g, &fd) / scale;
            worst = worst.max(rel);
            check(rel <= 1e-6, || format!("instance {k}: relative gap {rel:.2e}"))?;
        }
    }
    Ok(format!("{} weight vectors, worst relative gap {worst:.2e}", 2 * INSTANCES))
}

fn two_client_oracle() -> Outcome {
    let m = CovarianceModel::from_parts(vec![0.1, 0.3], DMatrix::identity(2, 2), 0.0).unwrap();
    let w = solve_min_variance(&m, 0.2).weights;
    // w1 + w2 = 1 and 0.1 w1 + 0.3 w2 = 0.2 determine the answer.
    let err = max_abs_diff(&w, &[0.5, 0.5]);
    check(err <= 1e-12, || format!("weights {w:?}"))?;
    Ok(format!("weights {w:?}"))
}

fn dominance_config() -> ExperimentConfig {
    ExperimentConfig {
        sim: SimConfig {
            shock_corr: 0.6,
            ..Default::default()
        },
        seeds: (1..=30).collect(),
        ..Default::default()
    }
}

fn strategy_dominance() -> Outcome {
    let cfg = dominance_config();
    let res = compare_strategies(&cfg, &Strategy::ALL).map_err(|e| e.to_string())?;
    let mean = |s| res.row(cfg.budget, s).unwrap().mean_utility;
    let p = mean(Strategy::Portfolio);
    let vs_random = res.comparison(cfg.budget, Strategy::Random).unwrap().utility.unwrap();
    check(p > mean(Strategy::Random) && vs_random.p_value < 0.05, || {
        format!("portfolio {p:.4} vs random {:.4}, p = {:.3e}", mean(Strategy::Random), vs_random.p_value)
    })?;
    for s in [Strategy::Greedy, Strategy::Auction] {
        check(p >= mean(s), || format!("portfolio {p:.4} < {s} {:.4}", mean(s)))?;
    }
    Ok(format!(
        "mean U portfolio {p:.4}, random {:.4} (p = {:.1e}), greedy {:.4}, auction {:.4}",
        mean(Strategy::Random),
        vs_random.p_value,
        mean(Strategy::Greedy),
        mean(Strategy::Auction)
    ))
}

fn budget_monotonicity() -> Outcome {
    let cfg = ExperimentConfig {
        strategies: vec![Strategy::Portfolio],
        ..dominance_config()
    };
    let budgets = [400.0, 500.0, 600.0, 700.0, 800.0, 900.0];
    let start = Instant::now();
    let res = budget_sweep(&cfg, &budgets).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let rows: Vec<_> = budgets.iter().map(|&b| res.row(b, Strategy::Portfolio).unwrap()).collect();
    let table = rows
        .iter()
        .map(|r| format!("{}: {:.4}", r.budget, r.mean_utility))
        .collect::<Vec<_>>()
        .join(", ");
    for pair in rows.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let se = (a.std_utility.unwrap().powi(2) / a.n_seeds as f64
            + b.std_utility.unwrap().powi(2) / b.n_seeds as f64)
            .sqrt();
        check(b.mean_utility >= a.mean_utility - se, || {
            format!(
                "U({}) = {:.4} < U({}) = {:.4} - SE {:.4}; {table}",
                b.budget, b.mean_utility, a.budget, a.mean_utility, se
            )
        })?;
    }
    check(elapsed < Duration::from_secs(120), || format!("sweep took {elapsed:?}"))?;
    Ok(format!("{table} ({elapsed:.1?})"))
}

fn bounded_shocks() -> Outcome {
    let cfg = SimConfig::default();
    let bound = cfg.drift;
    let mut seen = 0usize;
    let mut worst = 0.0f64;
    let mut seed = 0;
    while seen < 100_000 {
        seed += 1;
        let mut world = World::new(cfg.clone(), seed).unwrap();
        for _ in 0..100 {
            for d in world.step_capacities().shocks {
                worst = worst.max(d.abs());
                seen += 1;
            }
        }
    }
    check(worst <= 0.15 && bound == 0.15, || format!("largest |shock| {worst}"))?;
    Ok(format!("{seen} client-rounds, largest |shock| {worst:.6}"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<Vec<(String, Vec<u8>)>, String> {
        let out = dir.path().join(name);
        let cli = Cli::try_parse_from(["flimp", "run", "--seeds", "1,2", "--quiet", "--out", out.to_str().unwrap()])
            .map_err(|e| e.to_string())?;
        let Command::Run(args) = cli.command else { unreachable!() };
        let paths = cmd_run(&args).map_err(|e| e.to_string())?;
        Ok(paths
            .iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap()))
            .collect())
    };
    let (a, b) = (run("first")?, run("second")?);
    check(a == b, || "output files differ".into())?;
    let bytes: usize = a.iter().map(|(_, b)| b.len()).sum();
    Ok(format!("{} files, {bytes} bytes identical", a.len()))
}

fn correlation_knob() -> Outcome {
    let betas = [0.0, 0.3, 0.6, 0.9];
    let c: Vec<f64> = betas.iter().map(|&b| mean_return_correlation(b, 10_000, 404)).collect();
    let table = betas
        .iter()
        .zip(&c)
        .map(|(b, c)| format!("{b}: {c:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    check(c.windows(2).all(|p| p[1] >= p[0]), || table.clone())?;
    Ok(table)
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("closed-form correctness", closed_form_correctness),
        ("hyperbola identity", hyperbola_identity),
        ("gradient identity", gradient_identity),
        ("two-client analytic oracle", two_client_oracle),
        ("strategy dominance", strategy_dominance),
        ("budget monotonicity", budget_monotonicity),
        ("bounded shocks", bounded_shocks),
        ("determinism", determinism),
        ("correlation knob", correlation_knob),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {}. {name} [{secs:.1}s]: {detail}", i + 1),
            Err(mut detail) => {
                failed += 1;
                if detail.len() > 400 {
                    let cut = (0..=400).rev().find(|&i| detail.is_char_boundary(i)).unwrap();
                    detail.truncate(cut);
                    detail.push_str("...");
                }
                println!("FAIL {}. {name} [{secs:.1}s]: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
