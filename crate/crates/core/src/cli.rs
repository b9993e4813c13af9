//! Command-line front end: `run`, `sweep`, `compare` and `frontier`.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage or
//! validation error. Errors are printed as `error[<category>]: <message>`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::allocators::{Mode, Strategy};
use crate::error::{Error, Result};
use crate::harness::persist::{self, fmt_f64, write_json, write_sweep_csv};
use crate::harness::{
    budget_sweep, compare_strategies, run_detailed, ExperimentConfig, Format, SweepResult,
};
use crate::portfolio::{
    asymptotes, auto_targets, efficient_frontier, estimate_covariance, estimate_covariance_auto,
    global_min_variance, Asymptotes, CovarianceModel, ReturnHistory, Theta,
};

/// Number of targets and half-width (in units of `√θ₄/θ₃`) of `--targets auto`.
pub const AUTO_TARGET_COUNT: usize = 41;
pub const AUTO_TARGET_SPAN: f64 = 3.0;

#[derive(Debug, Parser)]
#[command(
    name = "flimp",
    version,
    about = "Portfolio-based incentive allocation for simulated federated learning",
    after_help = CONFIG_HELP
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

const CONFIG_HELP: &str = "\
Configuration (JSON, every key optional, unknown keys rejected):
  sim.groups 15, sim.group_size [10,15], sim.capacity [3,7],
  sim.unit_cost [0.8,1.2], sim.drift 0.15, sim.shock_corr 0.5,
  sim.capacity_clamp [0.2,5], sim.a_max 1, sim.kappa 0.02,
  sim.noise_sigma 0.01, sim.p_breakdown/p_leave/p_join 0,
  strategies [portfolio,random,greedy,auction], budget 400,
  budgets [400,500,600,700,800,900], rounds 50, warmup 5, window 20,
  cap 0.25, mode adaptive, seeds [1], out_dir \"results\",
  portfolio.target \"gmv\" | {\"absolute\": t} | {\"risk_appetite\": k},
  portfolio.ridge null (auto), portfolio.solver.max_iters 5000,
  portfolio.solver.tolerance 1e-10.
Command-line flags override file values.";

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate each strategy and seed at one budget; write round records and a summary.
    Run(RunArgs),
    /// Run every strategy over a grid of budgets.
    Sweep(SweepArgs),
    /// Paired-seed comparison of two or more strategies.
    Compare(CommonArgs),
    /// Export the efficient frontier of a return history or explicit instance.
    Frontier(FrontierArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Budget per round.
    #[arg(long)]
    pub budget: Option<f64>,
    /// Comma-separated seeds.
    #[arg(long, alias = "seed", value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Comma-separated strategies: portfolio, random, greedy, auction.
    #[arg(long, alias = "strategies", value_delimiter = ',')]
    pub strategy: Option<Vec<String>>,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// static or adaptive.
    #[arg(long)]
    pub mode: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Suppress progress messages.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Round-record format.
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated, strictly increasing budgets.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct FrontierArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Rounds CSV written by `run`; the first run in the file is used.
    #[arg(long, conflicts_with = "instance", required_unless_present = "instance")]
    pub history: Option<PathBuf>,
    /// JSON instance: {"mean": [...], "cov": [[...]]} or {"history": [[...]]}.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// `auto` or a comma-separated list of target returns.
    #[arg(long, default_value = "auto")]
    pub targets: String,
}

/// Explicit frontier input.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Instance {
    Moments {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
        #[serde(default)]
        ridge: f64,
    },
    History {
        /// One return series per client.
        history: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize)]
struct FrontierSummary {
    n_clients: usize,
    degenerate: bool,
    ridge: f64,
    theta: Theta,
    gmv_return: f64,
    gmv_std_dev: f64,
    gmv_weights: Vec<f64>,
    /// `None` when the frontier is a single point.
    asymptotes: Option<Asymptotes>,
    n_points: usize,
}

/// Parses and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path)
}

/// Writes a configuration that [`parse_config`] reads back unchanged.
pub fn write_config(config: &ExperimentConfig, path: &Path) -> Result<()> {
    fs::write(path, config.to_json()).map_err(|e| Error::io(path, e))
}

/// Loads the configuration (or defaults) and applies flag overrides.
pub fn resolve_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: p.clone(),
                message: format!("line {} column {}: {e}", e.line(), e.column()),
            })?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(b) = args.budget {
        config.budget = b;
    }
    if let Some(s) = &args.seeds {
        config.seeds = s.clone();
    }
    if let Some(names) = &args.strategy {
        config.strategies = names
            .iter()
            .map(|n| n.trim().parse())
            .collect::<Result<Vec<Strategy>>>()?;
    }
    if let Some(r) = args.rounds {
        config.rounds = r;
    }
    if let Some(m) = &args.mode {
        config.mode = m.parse::<Mode>()?;
    }
    if let Some(o) = &args.out {
        config.out_dir = o.clone();
    }
    config.validate()?;
    Ok(config)
}

struct Console {
    quiet: bool,
}

impl Console {
    fn progress(&self, msg: &str) {
        if !self.quiet {
            println!("{msg}");
        }
    }

    fn wrote(&self, path: &Path) {
        println!("wrote {}", path.display());
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn print_table(con: &Console, result: &SweepResult) {
    let opt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
    for r in &result.rows {
        con.progress(&format!(
            "B={} {:<9} U={:.6} ± {} first10 R={:.6} ± {} (n={})",
            r.budget,
            r.strategy,
            r.mean_utility,
            opt(r.std_utility),
            r.mean_early,
            opt(r.std_early),
            r.n_seeds
        ));
    }
    for c in &result.comparisons {
        if let Some(t) = c.utility {
            con.progress(&format!(
                "{} vs {}: mean diff {:.6}, t = {:.4}, one-sided p = {:.3e}",
                c.reference, c.baseline, t.mean_diff, t.t, t.p_value
            ));
        }
    }
}

pub fn cmd_run(args: &RunArgs) -> Result<Vec<PathBuf>> {
    let config = resolve_config(&args.common)?;
    let con = Console { quiet: args.common.quiet };
    con.progress(&format!(
        "running {} strategies x {} seeds, B = {}, T = {}",
        config.strategies.len(),
        config.seeds.len(),
        config.budget,
        config.rounds
    ));
    let (runs, summary) = run_detailed(&config)?;
    ensure_dir(&config.out_dir)?;
    let (name, format) = match args.format {
        OutputFormat::Csv => ("rounds.csv", Format::Csv),
        OutputFormat::Jsonl => ("rounds.jsonl", Format::JsonLines),
    };
    let rounds_path = config.out_dir.join(name);
    persist::persist(&runs, &rounds_path, format)?;
    let summary_path = config.out_dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    print_table(&con, &summary);
    Ok(vec![rounds_path, summary_path])
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<PathBuf>> {
    let mut config = resolve_config(&args.common)?;
    if let Some(b) = &args.budgets {
        config.budgets = b.clone();
        config.validate()?;
    }
    let con = Console { quiet: args.common.quiet };
    con.progress(&format!(
        "sweeping {} budgets x {} strategies x {} seeds",
        config.budgets.len(),
        config.strategies.len(),
        config.seeds.len()
    ));
    let result = budget_sweep(&config, &config.budgets)?;
    ensure_dir(&config.out_dir)?;
    let csv = config.out_dir.join("sweep.csv");
    write_sweep_csv(&csv, &result)?;
    let json = config.out_dir.join("sweep_summary.json");
    write_json(&json, &result)?;
    print_table(&con, &result);
    Ok(vec![csv, json])
}

pub fn cmd_compare(args: &CommonArgs) -> Result<Vec<PathBuf>> {
    let config = resolve_config(args)?;
    let con = Console { quiet: args.quiet };
    let result = compare_strategies(&config, &config.strategies)?;
    ensure_dir(&config.out_dir)?;
    let csv = config.out_dir.join("compare.csv");
    write_sweep_csv(&csv, &result)?;
    let json = config.out_dir.join("compare_summary.json");
    write_json(&json, &result)?;
    print_table(&con, &result);
    Ok(vec![csv, json])
}

fn parse_targets(spec: &str, model: &CovarianceModel) -> Result<Vec<f64>> {
    if spec.trim() == "auto" {
        return Ok(auto_targets(model, AUTO_TARGET_COUNT, AUTO_TARGET_SPAN));
    }
    spec.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::InvalidConfig(format!("bad target {t:?} (expected auto or numbers)")))
        })
        .collect()
}

/// Builds the covariance model for `frontier` from an instance file.
pub fn load_instance(path: &Path, ridge: Option<f64>) -> Result<CovarianceModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let instance: Instance = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: format!(
            "line {} column {}: expected {{\"mean\", \"cov\"[, \"ridge\"]}} or {{\"history\"}}",
            e.line(),
            e.column()
        ),
    })?;
    match instance {
        Instance::Moments { mean, cov, ridge: r } => {
            let n = mean.len();
            if cov.len() != n || cov.iter().any(|row| row.len() != n) {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: cov.iter().map(Vec::len).find(|&l| l != n).unwrap_or(cov.len()),
                });
            }
            let m = DMatrix::from_fn(n, n, |i, j| cov[i][j]);
            CovarianceModel::from_parts(mean, m, ridge.unwrap_or(r))
        }
        Instance::History { history } => model_from_history(&ReturnHistory::new(history)?, ridge),
    }
}

fn model_from_history(history: &ReturnHistory, ridge: Option<f64>) -> Result<CovarianceModel> {
    match ridge {
        Some(r) => estimate_covariance(history, r),
        None => estimate_covariance_auto(history),
    }
}

pub fn cmd_frontier(args: &FrontierArgs) -> Result<Vec<PathBuf>> {
    let config = resolve_config(&args.common)?;
    let con = Console { quiet: args.common.quiet };
    let ridge = config.portfolio.ridge;
    let model = match (&args.history, &args.instance) {
        (Some(h), _) => {
            let rows = persist::read_rounds_csv(h)?;
            model_from_history(&persist::history_from_rows(&rows)?, ridge)?
        }
        (None, Some(i)) => load_instance(i, ridge)?,
        (None, None) => {
            return Err(Error::InvalidConfig("frontier needs --history or --instance".into()))
        }
    };
    let theta = model.theta();
    let degenerate = theta.is_degenerate();
    let targets = if degenerate {
        vec![theta.gmv_return()]
    } else {
        parse_targets(&args.targets, &model)?
    };
    let points = efficient_frontier(&model, &targets);
    if degenerate {
        con.progress("means are proportional to the ones vector: frontier is the GMV point only");
    }

    ensure_dir(&config.out_dir)?;
    let csv = config.out_dir.join("frontier.csv");
    let mut text = String::from("target_return,std_dev");
    for i in 1..=model.n() {
        text.push_str(&format!(",w_{i}"));
    }
    text.push('\n');
    for p in &points {
        text.push_str(&fmt_f64(p.expected_return));
        text.push(',');
        text.push_str(&fmt_f64(p.std_dev));
        for w in &p.weights.weights {
            text.push(',');
            text.push_str(&fmt_f64(*w));
        }
        text.push('\n');
    }
    fs::write(&csv, text).map_err(|e| Error::io(&csv, e))?;

    let gmv = global_min_variance(&model);
    let summary = FrontierSummary {
        n_clients: model.n(),
        degenerate,
        ridge: model.ridge(),
        theta,
        gmv_return: theta.gmv_return(),
        gmv_std_dev: theta.gmv_variance().sqrt(),
        gmv_weights: gmv.weights.weights,
        asymptotes: (!degenerate).then(|| asymptotes(&model)),
        n_points: points.len(),
    };
    let json = config.out_dir.join("frontier_summary.json");
    write_json(&json, &summary)?;
    Ok(vec![csv, json])
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Frontier(a) => cmd_frontier(a),
    };
    match outcome {
        Ok(paths) => {
            let con = Console { quiet: false };
            for p in &paths {
                con.wrote(p);
            }
            let _ = std::io::stdout().flush();
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}
