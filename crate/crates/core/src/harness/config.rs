use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::allocators::{Mode, PortfolioSettings, Strategy};
use crate::error::{Error, Result};
use crate::sim::SimConfig;

/// One experiment: world parameters, strategies, budgets, horizon and seeds.
///
/// Deserializes from JSON with every key optional; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    /// Strategies run by `run`, `sweep` and `compare`.
    pub strategies: Vec<Strategy>,
    /// Budget per round for `run` and `compare`.
    pub budget: f64,
    /// Budget grid for `sweep`, strictly increasing.
    pub budgets: Vec<f64>,
    pub rounds: usize,
    /// Uniform rounds before any strategy runs.
    pub warmup: usize,
    /// History window (rounds) handed to strategies.
    pub window: usize,
    /// Per-client reward cap as a fraction of the budget.
    pub cap: f64,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub portfolio: PortfolioSettings,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            strategies: Strategy::ALL.to_vec(),
            budget: 400.0,
            budgets: vec![400.0, 500.0, 600.0, 700.0, 800.0, 900.0],
            rounds: 50,
            warmup: 5,
            window: 20,
            cap: 0.25,
            mode: Mode::Adaptive,
            seeds: vec![1],
            portfolio: PortfolioSettings::default(),
            out_dir: PathBuf::from("results"),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if !(self.budget >= 0.0 && self.budget.is_finite()) {
            return Err(invalid("budget must be >= 0"));
        }
        if self.budgets.is_empty() {
            return Err(invalid("budgets must not be empty"));
        }
        if self.budgets.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return Err(invalid("budgets must all be >= 0"));
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("budgets must be strictly increasing"));
        }
        if self.strategies.is_empty() {
            return Err(invalid("strategies must not be empty"));
        }
        if self.warmup < 2 {
            return Err(invalid("warmup must be >= 2"));
        }
        if self.warmup >= self.rounds {
            return Err(Error::WarmupTooLong {
                warmup: self.warmup,
                rounds: self.rounds,
            });
        }
        if self.window < 2 {
            return Err(invalid("window must be >= 2"));
        }
        if !(self.cap > 0.0 && self.cap <= 1.0) {
            return Err(invalid("cap must be in (0, 1]"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds must not be empty"));
        }
        let mut seen = BTreeSet::new();
        for &s in &self.seeds {
            if !seen.insert(s) {
                return Err(Error::DuplicateSeed(s));
            }
        }
        if let Some(r) = self.portfolio.ridge {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(invalid("portfolio.ridge must be >= 0"));
            }
        }
        if self.portfolio.solver.max_iters == 0 {
            return Err(invalid("portfolio.solver.max_iters must be >= 1"));
        }
        Ok(())
    }

    /// Parses and validates a JSON configuration.
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: format!("line {} column {}: {e}", e.line(), e.column()),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_full_default() {
        let c = ExperimentConfig::from_json("{}", Path::new("x.json")).unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.sim.groups, 15);
        assert_eq!(c.sim.group_size, [10, 15]);
        assert_eq!(c.sim.capacity, [3.0, 7.0]);
        assert_eq!(c.sim.drift, 0.15);
        assert_eq!(c.sim.shock_corr, 0.5);
        assert_eq!((c.warmup, c.window, c.cap, c.rounds), (5, 20, 0.25, 50));
    }

    #[test]
    fn negative_budget_rejected() {
        let err = ExperimentConfig::from_json("{\"budget\": -5}", Path::new("x.json")).unwrap_err();
        assert_eq!(err.to_string(), "invalid-config: budget must be >= 0");
    }

    #[test]
    fn unknown_keys_rejected_with_position() {
        let err = ExperimentConfig::from_json("{\n  \"budgte\": 3\n}", Path::new("c.json")).unwrap_err();
        assert_eq!(err.category(), "parse-error");
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("budgte"), "{msg}");
        let err = ExperimentConfig::from_json("{\"sim\": {\"groupz\": 1}}", Path::new("c.json")).unwrap_err();
        assert!(err.to_string().contains("groupz"));
    }

    #[test]
    fn default_budget_grid_shape() {
        let c = ExperimentConfig::from_json(
            "{\"budget\": 400, \"strategies\": [\"portfolio\"]}",
            Path::new("x.json"),
        )
        .unwrap();
        assert_eq!(c.budget, 400.0);
        assert_eq!(c.strategies, vec![Strategy::Portfolio]);
        assert_eq!(c.sim.groups, 15);
    }

    #[test]
    fn duplicate_seed_rejected() {
        let c = ExperimentConfig { seeds: vec![3, 4, 3], ..Default::default() };
        assert!(matches!(c.validate(), Err(Error::DuplicateSeed(3))));
    }

    #[test]
    fn warmup_must_leave_rounds() {
        let c = ExperimentConfig { rounds: 5, warmup: 5, ..Default::default() };
        assert!(matches!(c.validate(), Err(Error::WarmupTooLong { .. })));
    }
}
