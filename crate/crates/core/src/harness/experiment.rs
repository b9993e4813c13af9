use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::persist;
use super::run::{run_with_budget, RunResult};
use super::stats::{mean, paired_t_test, sample_std, PairedTest};
use crate::allocators::Strategy;
use crate::error::{Error, Result};

/// Utility of one finished run, without its round records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub budget: f64,
    pub strategy: Strategy,
    pub seed: u64,
    pub utility: f64,
    /// Mean `R_p` over the first ten rounds.
    pub early_mean: f64,
}

/// Aggregate over seeds for one (budget, strategy) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub budget: f64,
    pub strategy: Strategy,
    pub n_seeds: usize,
    pub mean_utility: f64,
    /// Omitted for a single seed.
    pub std_utility: Option<f64>,
    pub mean_early: f64,
    pub std_early: Option<f64>,
}

/// Paired test of `reference` against `baseline` at one budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub budget: f64,
    pub reference: Strategy,
    pub baseline: Strategy,
    pub utility: Option<PairedTest>,
    pub early_mean: Option<PairedTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub comparisons: Vec<Comparison>,
    pub runs: Vec<RunSummary>,
}

impl SweepResult {
    pub fn row(&self, budget: f64, strategy: Strategy) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.budget == budget && r.strategy == strategy)
    }

    /// Per-seed utilities of one cell, in seed-list order.
    pub fn utilities(&self, budget: f64, strategy: Strategy) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.budget == budget && r.strategy == strategy)
            .map(|r| r.utility)
            .collect()
    }

    pub fn comparison(&self, budget: f64, baseline: Strategy) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.budget == budget && c.baseline == baseline)
    }
}

/// Runs every (budget, strategy, seed) cell, in parallel.
///
/// On failure, the runs that did finish are written to
/// `out_dir/partial_runs.jsonl` before the first error (in grid order) is
/// returned.
fn run_grid(config: &ExperimentConfig, budgets: &[f64], strategies: &[Strategy]) -> Result<Vec<RunSummary>> {
    config.validate()?;
    let cells: Vec<(f64, Strategy, u64)> = budgets
        .iter()
        .flat_map(|&b| {
            strategies
                .iter()
                .flat_map(move |&s| config.seeds.iter().map(move |&seed| (b, s, seed)))
        })
        .collect();
    let outcomes: Vec<Result<RunSummary>> = cells
        .par_iter()
        .map(|&(budget, strategy, seed)| {
            run_with_budget(config, strategy, seed, budget).map(|r| RunSummary {
                budget,
                strategy,
                seed,
                utility: r.utility,
                early_mean: r.early_mean_return(),
            })
        })
        .collect();
    collect_or_persist(outcomes, &config.out_dir)
}

// All summaries, or the first error after saving the finished runs.
fn collect_or_persist(outcomes: Vec<Result<RunSummary>>, out_dir: &Path) -> Result<Vec<RunSummary>> {
    if outcomes.iter().all(Result::is_ok) {
        return Ok(outcomes.into_iter().map(|o| o.unwrap()).collect());
    }
    let done: Vec<RunSummary> = outcomes.iter().filter_map(|o| o.as_ref().ok().copied()).collect();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    persist::write_summaries_jsonl(&out_dir.join("partial_runs.jsonl"), &done)?;
    Err(outcomes.into_iter().find_map(Result::err).expect("some run failed"))
}

fn aggregate(runs: Vec<RunSummary>, budgets: &[f64], strategies: &[Strategy]) -> SweepResult {
    let mut cells: BTreeMap<(usize, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in &runs {
        let bi = budgets.iter().position(|&b| b == r.budget).expect("budget in grid");
        let si = strategies.iter().position(|&s| s == r.strategy).expect("strategy in grid");
        let cell = cells.entry((bi, si)).or_default();
        cell.0.push(r.utility);
        cell.1.push(r.early_mean);
    }
    let rows = cells
        .iter()
        .map(|(&(bi, si), (u, e))| SweepRow {
            budget: budgets[bi],
            strategy: strategies[si],
            n_seeds: u.len(),
            mean_utility: mean(u),
            std_utility: sample_std(u),
            mean_early: mean(e),
            std_early: sample_std(e),
        })
        .collect();
    SweepResult {
        rows,
        comparisons: Vec::new(),
        runs,
    }
}

/// Each configured strategy at `config.budget` over every seed, keeping the
/// round records. Runs come back strategy-major, seeds in list order.
pub fn run_detailed(config: &ExperimentConfig) -> Result<(Vec<RunResult>, SweepResult)> {
    config.validate()?;
    let cells: Vec<(Strategy, u64)> = config
        .strategies
        .iter()
        .flat_map(|&s| config.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let runs = cells
        .par_iter()
        .map(|&(s, seed)| run_with_budget(config, s, seed, config.budget))
        .collect::<Result<Vec<_>>>()?;
    let summaries = runs
        .iter()
        .map(|r| RunSummary {
            budget: r.budget,
            strategy: r.strategy,
            seed: r.seed,
            utility: r.utility,
            early_mean: r.early_mean_return(),
        })
        .collect();
    let result = aggregate(summaries, &[config.budget], &config.strategies);
    Ok((runs, result))
}

/// Each configured strategy at `config.budget`, over every seed.
pub fn run_replicated(config: &ExperimentConfig) -> Result<SweepResult> {
    let budgets = [config.budget];
    let runs = run_grid(config, &budgets, &config.strategies)?;
    Ok(aggregate(runs, &budgets, &config.strategies))
}

/// The full cross of `budgets × config.strategies × config.seeds`.
pub fn budget_sweep(config: &ExperimentConfig, budgets: &[f64]) -> Result<SweepResult> {
    if budgets.is_empty() || budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("budgets must be strictly increasing".into()));
    }
    if budgets.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
        return Err(Error::InvalidConfig("budgets must all be >= 0".into()));
    }
    let runs = run_grid(config, budgets, &config.strategies)?;
    Ok(aggregate(runs, budgets, &config.strategies))
}

/// Paired-seed comparison at `config.budget`.
///
/// The reference is the portfolio strategy when present, otherwise the first
/// listed; every other entry is tested against it.
pub fn compare_strategies(config: &ExperimentConfig, strategies: &[Strategy]) -> Result<SweepResult> {
    if strategies.len() < 2 {
        return Err(Error::InvalidConfig("compare needs at least 2 strategies".into()));
    }
    let reference_idx = strategies
        .iter()
        .position(|&s| s == Strategy::Portfolio)
        .unwrap_or(0);
    let reference = strategies[reference_idx];
    // Repeated names (e.g. random vs random) share a run: same seed, same
    // trajectory.
    let mut distinct = strategies.to_vec();
    distinct.sort();
    distinct.dedup();
    let budgets = [config.budget];
    let runs = run_grid(config, &budgets, &distinct)?;
    let mut result = aggregate(runs, &budgets, &distinct);
    let pick = |s: Strategy, f: fn(&RunSummary) -> f64| -> Vec<f64> {
        result.runs.iter().filter(|r| r.strategy == s).map(f).collect()
    };
    let mut comparisons = Vec::new();
    for (i, &baseline) in strategies.iter().enumerate() {
        if i == reference_idx {
            continue;
        }
        comparisons.push(Comparison {
            budget: config.budget,
            reference,
            baseline,
            utility: paired_t_test(&pick(reference, |r| r.utility), &pick(baseline, |r| r.utility)),
            early_mean: paired_t_test(
                &pick(reference, |r| r.early_mean),
                &pick(baseline, |r| r.early_mean),
            ),
        });
    }
    result.comparisons = comparisons;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SimConfig;

    fn small(seeds: Vec<u64>) -> ExperimentConfig {
        ExperimentConfig {
            sim: SimConfig {
                groups: 3,
                group_size: [3, 5],
                ..Default::default()
            },
            rounds: 10,
            seeds,
            ..Default::default()
        }
    }

    #[test]
    fn single_seed_omits_std() {
        let cfg = ExperimentConfig {
            strategies: vec![Strategy::Greedy],
            ..small(vec![7])
        };
        let res = run_replicated(&cfg).unwrap();
        assert_eq!(res.rows.len(), 1);
        assert_eq!(res.rows[0].std_utility, None);
        assert_eq!(res.rows[0].mean_utility, res.runs[0].utility);
    }

    #[test]
    fn sweep_covers_grid() {
        let cfg = ExperimentConfig {
            strategies: vec![Strategy::Portfolio, Strategy::Random],
            ..small(vec![1, 2])
        };
        let res = budget_sweep(&cfg, &[100.0, 200.0, 300.0]).unwrap();
        assert_eq!(res.rows.len(), 6);
        assert_eq!(res.runs.len(), 12);
        assert!(res.rows.iter().all(|r| r.n_seeds == 2 && r.std_utility.is_some()));
        assert!(budget_sweep(&cfg, &[200.0, 100.0]).is_err());
    }

    #[test]
    fn compare_requires_two() {
        let err = compare_strategies(&small(vec![1]), &[Strategy::Random]).unwrap_err();
        assert!(err.is_usage());
    }

    #[test]
    fn failure_keeps_finished_runs_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let ok = RunSummary {
            budget: 1.0,
            strategy: Strategy::Random,
            seed: 1,
            utility: 0.5,
            early_mean: 0.1,
        };
        let outcomes = vec![
            Ok(ok),
            Err(Error::in_round(3, Error::UnknownClient(9))),
            Ok(RunSummary { seed: 2, ..ok }),
        ];
        let err = collect_or_persist(outcomes, dir.path()).unwrap_err();
        assert_eq!(err.to_string(), "round 3: unknown-client: 9");
        let text = std::fs::read_to_string(dir.path().join("partial_runs.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn random_against_itself_is_null() {
        let res = compare_strategies(&small(vec![1, 2, 3]), &[Strategy::Random, Strategy::Random]).unwrap();
        let t = res.comparisons[0].utility.unwrap();
        assert_eq!(t.mean_diff, 0.0);
        assert_eq!(t.t, 0.0);
    }
}
