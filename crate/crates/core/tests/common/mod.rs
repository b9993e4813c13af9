#![allow(dead_code)]

use flimp::portfolio::{
    portfolio_variance, solve_equality_constrained, CovarianceModel, SolverOptions,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random positive-definite covariance `AA′/n + 0.2·I` with distinct means.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> CovarianceModel {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let mut cov = &a * a.transpose() / n as f64;
    for i in 0..n {
        cov[(i, i)] += 0.2;
    }
    let mean: Vec<f64> = (0..n)
        .map(|i| 0.05 * i as f64 + rng.random_range(0.0..0.04))
        .collect();
    CovarianceModel::from_parts(mean, cov, 0.0).unwrap()
}

/// Random weight vector summing to one (may contain negative entries).
pub fn random_feasible(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
    let shift = (raw.iter().sum::<f64>() - 1.0) / n as f64;
    raw.iter().map(|x| x - shift).collect()
}

pub fn oracle_options() -> SolverOptions {
    SolverOptions::default()
        .with_iters(200_000)
        .with_tolerance(1e-16)
}

/// Equality-constrained minimizer by projected gradient (no matrix inverse).
pub fn equality_oracle(model: &CovarianceModel, target: f64) -> Vec<f64> {
    solve_equality_constrained(model, target, &oracle_options())
        .expect("oracle converges")
        .weights
        .weights
}

/// Central finite-difference gradient of the portfolio variance.
pub fn fd_gradient(model: &CovarianceModel, w: &[f64], h: f64) -> Vec<f64> {
    (0..w.len())
        .map(|i| {
            let mut up = w.to_vec();
            let mut down = w.to_vec();
            up[i] += h;
            down[i] -= h;
            (portfolio_variance(&up, model).unwrap() - portfolio_variance(&down, model).unwrap())
                / (2.0 * h)
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Correlations of every within-group pair of per-client series.
pub fn within_group_correlations(world: &flimp::sim::World, series: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for g in world.groups() {
        for (k, &i) in g.members.iter().enumerate() {
            for &j in &g.members[k + 1..] {
                out.push(pearson(&series[i], &series[j]));
            }
        }
    }
    out
}

/// Small world for Monte Carlo checks: 4 groups of 5 clients.
pub fn small_sim(beta: f64) -> flimp::sim::SimConfig {
    flimp::sim::SimConfig {
        groups: 4,
        group_size: [5, 5],
        shock_corr: beta,
        ..Default::default()
    }
}

/// Mean within-group correlation of realized returns over `rounds` rounds,
/// every client paid one reward unit per round.
pub fn mean_return_correlation(beta: f64, rounds: usize, seed: u64) -> f64 {
    let mut world = flimp::sim::World::new(small_sim(beta), seed).unwrap();
    let n = world.n_clients();
    let rewards: std::collections::BTreeMap<usize, f64> = (0..n).map(|i| (i, 1.0)).collect();
    let mut series = vec![Vec::with_capacity(rounds); n];
    for _ in 0..rounds {
        world.step_capacities();
        let r = world.realize_round(&rewards, n as f64).unwrap();
        for (s, x) in series.iter_mut().zip(&r.returns) {
            s.push(*x);
        }
    }
    let c = within_group_correlations(&world, &series);
    c.iter().sum::<f64>() / c.len() as f64
}
