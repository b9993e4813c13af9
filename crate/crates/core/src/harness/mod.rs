//! Experiment driver: the round loop, seed replication, budget sweeps,
//! paired strategy comparisons and result files.

mod config;
mod experiment;
pub mod persist;
mod run;
pub mod stats;

pub use config::ExperimentConfig;
pub use experiment::{
    budget_sweep, compare_strategies, run_detailed, run_replicated, Comparison, RunSummary, SweepResult, SweepRow,
};
pub use persist::{persist, read_rounds_csv, Format, RoundRow};
pub use run::{run_single, RoundRecord, RunResult};
