use std::collections::VecDeque;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::allocators::{
    allocate, allocate_uniform, warmup_policy, AllocationFlag, AllocationRequest, Mode, Phase,
    RewardAllocation, Strategy,
};
use crate::error::{Error, Result};
use crate::portfolio::ReturnHistory;
use crate::sim::{stream_rng, Stream, World};

/// One simulated round as seen by the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub uniform_phase: bool,
    /// Reward per client id (zero for unrewarded clients).
    pub rewards: Vec<f64>,
    /// Realized return per client id.
    pub returns: Vec<f64>,
    /// Global return `R_p`.
    pub global: f64,
    /// Running sum of `R_p` up to and including this round.
    pub cum_utility: f64,
    pub unspent: f64,
    pub flags: Vec<AllocationFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub strategy: Strategy,
    pub budget: f64,
    pub records: Vec<RoundRecord>,
    /// Cumulative utility `U = Σ_t R_p,t`.
    pub utility: f64,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl RunResult {
    /// Mean `R_p` over the first `min(10, T)` rounds.
    pub fn early_mean_return(&self) -> f64 {
        let k = self.records.len().min(10);
        if k == 0 {
            return 0.0;
        }
        self.records[..k].iter().map(|r| r.global).sum::<f64>() / k as f64
    }
}

/// Sliding window of per-client returns.
struct ReturnWindow {
    per_client: Vec<VecDeque<f64>>,
    capacity: usize,
}

impl ReturnWindow {
    fn new(n: usize, capacity: usize) -> Self {
        Self {
            per_client: vec![VecDeque::with_capacity(capacity); n],
            capacity,
        }
    }

    fn push(&mut self, returns: &[f64]) {
        for (q, &r) in self.per_client.iter_mut().zip(returns) {
            if q.len() == self.capacity {
                q.pop_front();
            }
            q.push_back(r);
        }
    }

    fn history(&self, clients: &[usize]) -> Option<ReturnHistory> {
        if self.per_client.first().is_none_or(|q| q.is_empty()) {
            return None;
        }
        let series = clients
            .iter()
            .map(|&id| self.per_client[id].iter().copied().collect())
            .collect();
        ReturnHistory::new(series).ok()
    }
}

/// Runs one seed of one strategy.
///
/// Each round: drift capacities, apply client events, allocate (uniformly
/// during warmup), realize returns, record.
pub fn run_single(config: &ExperimentConfig, strategy: Strategy, seed: u64) -> Result<RunResult> {
    run_with_budget(config, strategy, seed, config.budget)
}

pub(crate) fn run_with_budget(
    config: &ExperimentConfig,
    strategy: Strategy,
    seed: u64,
    budget: f64,
) -> Result<RunResult> {
    config.validate()?;
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(Error::InvalidConfig("budget must be >= 0".into()));
    }
    let started = Instant::now();
    let mut world = World::new(config.sim.clone(), seed)?;
    let mut alloc_rng = stream_rng(seed, Stream::Allocator);
    let n = world.n_clients();
    let costs = world.unit_costs();
    let mut window = ReturnWindow::new(n, config.window);
    let mut frozen: Option<RewardAllocation> = None;
    let mut records = Vec::with_capacity(config.rounds);
    let mut cum = 0.0;

    for round in 1..=config.rounds {
        world.step_capacities();
        world.mark_events();
        let active = world.active_clients();
        let phase = warmup_policy(round, config.warmup, config.rounds)?;

        let allocation = if budget == 0.0 || active.is_empty() {
            RewardAllocation {
                strategy: None,
                rewards: Default::default(),
                weights: None,
                flags: Vec::new(),
            }
        } else {
            let active_costs = active.iter().map(|&id| costs[id]).collect();
            let req = AllocationRequest::new(
                budget,
                active.clone(),
                window.history(&active),
                active_costs,
                config.cap,
            )
            .map_err(|e| Error::in_round(round, e))?;
            match (phase, config.mode, &frozen) {
                (Phase::Uniform, _, _) => allocate_uniform(&req),
                (Phase::Strategy, Mode::Static, Some(f)) => {
                    let mut a = f.clone();
                    a.rewards.retain(|id, _| world.clients()[*id].active);
                    a
                }
                (Phase::Strategy, mode, _) => {
                    let a = allocate(strategy, &req, &config.portfolio, &mut alloc_rng);
                    if mode == Mode::Static {
                        frozen = Some(a.clone());
                    }
                    a
                }
            }
        };

        let realized = world
            .realize_round(&allocation.rewards, budget)
            .map_err(|e| Error::in_round(round, e))?;
        window.push(&realized.returns);
        cum += realized.global;

        let mut rewards = vec![0.0; n];
        for (&id, &r) in &allocation.rewards {
            rewards[id] = r;
        }
        records.push(RoundRecord {
            round,
            uniform_phase: phase == Phase::Uniform,
            rewards,
            returns: realized.returns,
            global: realized.global,
            cum_utility: cum,
            unspent: (budget - realized.spent).max(0.0),
            flags: allocation.flags,
        });
    }

    Ok(RunResult {
        seed,
        strategy,
        budget,
        records,
        utility: cum,
        wall_time: started.elapsed(),
    })
}
