use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the simulated client population and its learning dynamics.
///
/// Every field has a default, so `{}` is a complete configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Number of edge base stations, each managing one client group.
    pub groups: usize,
    /// Inclusive bounds on clients per group.
    pub group_size: [usize; 2],
    /// Inclusive bounds on a client's initial capacity (resource units).
    pub capacity: [f64; 2],
    /// Inclusive bounds on a client's unit cost (reward units per resource unit).
    pub unit_cost: [f64; 2],
    /// Largest relative capacity change per round.
    pub drift: f64,
    /// Weight `β` of the shared group shock in capacity and return noise.
    pub shock_corr: f64,
    /// Capacity stays within these multiples of its initial value.
    pub capacity_clamp: [f64; 2],
    /// Ceiling of the learning curve `a = a_max·(1 − exp(−κ·E))`.
    pub a_max: f64,
    /// Learning rate `κ` per resource unit.
    pub kappa: f64,
    /// Standard deviation of per-round return noise.
    pub noise_sigma: f64,
    pub p_breakdown: f64,
    pub p_leave: f64,
    pub p_join: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            groups: 15,
            group_size: [10, 15],
            capacity: [3.0, 7.0],
            unit_cost: [0.8, 1.2],
            drift: 0.15,
            shock_corr: 0.5,
            capacity_clamp: [0.2, 5.0],
            a_max: 1.0,
            kappa: 0.02,
            noise_sigma: 0.01,
            p_breakdown: 0.0,
            p_leave: 0.0,
            p_join: 0.0,
        }
    }
}

fn invalid(field: &str, constraint: &str) -> Error {
    Error::InvalidConfig(format!("{field} {constraint}"))
}

fn check_prob(field: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(field, "must be in [0, 1]"))
    }
}

fn check_positive_range(field: &str, r: [f64; 2]) -> Result<()> {
    if r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite() {
        Ok(())
    } else {
        Err(invalid(field, "must satisfy 0 < lo <= hi"))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 {
            return Err(invalid("sim.groups", "must be >= 1"));
        }
        let [lo, hi] = self.group_size;
        if lo == 0 || lo > hi {
            return Err(invalid("sim.group_size", "must satisfy 1 <= lo <= hi"));
        }
        check_positive_range("sim.capacity", self.capacity)?;
        check_positive_range("sim.unit_cost", self.unit_cost)?;
        if !(0.0..1.0).contains(&self.drift) {
            return Err(invalid("sim.drift", "must be in [0, 1)"));
        }
        check_prob("sim.shock_corr", self.shock_corr)?;
        let [clo, chi] = self.capacity_clamp;
        if !(clo > 0.0 && clo <= 1.0 && chi >= 1.0 && chi.is_finite()) {
            return Err(invalid("sim.capacity_clamp", "must satisfy 0 < lo <= 1 <= hi"));
        }
        if !(self.a_max > 0.0 && self.a_max <= 1.0) {
            return Err(invalid("sim.a_max", "must be in (0, 1]"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(invalid("sim.kappa", "must be > 0"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid("sim.noise_sigma", "must be >= 0"));
        }
        check_prob("sim.p_breakdown", self.p_breakdown)?;
        check_prob("sim.p_leave", self.p_leave)?;
        check_prob("sim.p_join", self.p_join)?;
        if self.p_breakdown + self.p_leave > 1.0 {
            return Err(invalid("sim.p_leave", "plus sim.p_breakdown must be <= 1"));
        }
        Ok(())
    }
}
