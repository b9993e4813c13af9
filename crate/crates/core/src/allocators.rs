//! Budget allocation strategies: the portfolio mechanism and the random,
//! greedy and auction baselines, plus the warmup policy that decides when a
//! strategy may take over from uniform allocation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::portfolio::{
    estimate_covariance, estimate_covariance_auto, estimate_mean, solve_long_only,
    CovarianceModel, ReturnHistory, SolverOptions,
};
use crate::sim::ClientId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Portfolio,
    Random,
    Greedy,
    Auction,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Portfolio,
        Strategy::Random,
        Strategy::Greedy,
        Strategy::Auction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Portfolio => "portfolio",
            Strategy::Random => "random",
            Strategy::Greedy => "greedy",
            Strategy::Auction => "auction",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown strategy {s:?} (expected portfolio, random, greedy or auction)"
                ))
            })
    }
}

/// Which point of the frontier the portfolio strategy aims for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetChoice {
    /// The global minimum-variance return `θ₁/θ₃`.
    #[default]
    Gmv,
    Absolute(f64),
    /// `θ₁/θ₃ + k·√θ₄/θ₃`.
    RiskAppetite(f64),
}

impl TargetChoice {
    pub fn resolve(&self, model: &CovarianceModel) -> f64 {
        let th = model.theta();
        match *self {
            TargetChoice::Gmv => th.gmv_return(),
            TargetChoice::Absolute(t) => t,
            TargetChoice::RiskAppetite(k) => th.gmv_return() + k * th.t4.sqrt() / th.t3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortfolioSettings {
    pub target: TargetChoice,
    /// Fixed ridge; `None` picks it from the sample covariance.
    pub ridge: Option<f64>,
    pub solver: SolverOptions,
}

/// Everything a strategy sees when dividing the budget.
#[derive(Debug, Clone)]
pub struct AllocationRequest {
    pub budget: f64,
    /// Eligible (active) clients, ascending.
    pub clients: Vec<ClientId>,
    /// Recent returns of `clients`, in the same order. `None` before any round.
    pub history: Option<ReturnHistory>,
    /// Unit cost of each eligible client, same order.
    pub unit_costs: Vec<f64>,
    /// Largest reward any single client may receive, as a fraction of the budget.
    pub cap: f64,
}

impl AllocationRequest {
    pub fn new(
        budget: f64,
        clients: Vec<ClientId>,
        history: Option<ReturnHistory>,
        unit_costs: Vec<f64>,
        cap: f64,
    ) -> Result<Self> {
        if !(budget > 0.0 && budget.is_finite()) {
            return Err(Error::InvalidInput(format!("budget must be > 0, got {budget}")));
        }
        if !(cap > 0.0 && cap <= 1.0) {
            return Err(Error::InvalidInput(format!("cap must be in (0, 1], got {cap}")));
        }
        if clients.is_empty() {
            return Err(Error::InvalidInput("no eligible clients".into()));
        }
        if clients.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("client ids must be strictly ascending".into()));
        }
        crate::error::check_len(clients.len(), unit_costs.len())?;
        if let Some(h) = &history {
            crate::error::check_len(clients.len(), h.n_clients())?;
        }
        if unit_costs.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::InvalidInput("unit costs must be > 0".into()));
        }
        Ok(Self {
            budget,
            clients,
            history,
            unit_costs,
            cap,
        })
    }

    pub fn n(&self) -> usize {
        self.clients.len()
    }

    /// Reward ceiling per client in reward units.
    pub fn cap_amount(&self) -> f64 {
        self.cap * self.budget
    }

    fn rounds(&self) -> usize {
        self.history.as_ref().map_or(0, ReturnHistory::len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllocationFlag {
    /// Not enough information to run the strategy; budget split uniformly.
    FallbackUniform,
    /// Means were proportional to the ones vector.
    DegenerateMeans,
    /// The long-only solver hit its iteration cap; its best iterate was used.
    NoConvergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardAllocation {
    pub strategy: Option<Strategy>,
    /// Reward per client; clients absent from the map receive nothing.
    pub rewards: BTreeMap<ClientId, f64>,
    /// Portfolio weights, aligned with the request's client order.
    pub weights: Option<Vec<f64>>,
    pub flags: Vec<AllocationFlag>,
}

impl RewardAllocation {
    pub fn total(&self) -> f64 {
        self.rewards.values().sum()
    }

    pub fn unspent(&self, budget: f64) -> f64 {
        (budget - self.total()).max(0.0)
    }

    fn from_amounts(strategy: Option<Strategy>, clients: &[ClientId], amounts: &[f64]) -> Self {
        let rewards = clients
            .iter()
            .zip(amounts)
            .filter(|(_, &a)| a > 0.0)
            .map(|(&id, &a)| (id, a))
            .collect();
        Self {
            strategy,
            rewards,
            weights: None,
            flags: Vec::new(),
        }
    }
}

/// `B/n` each, never above the per-client cap.
pub fn allocate_uniform(req: &AllocationRequest) -> RewardAllocation {
    let each = (req.budget / req.n() as f64).min(req.cap_amount());
    RewardAllocation::from_amounts(None, &req.clients, &vec![each; req.n()])
}

/// Turns weights into rewards `w_i·B`, then enforces the per-client cap by
/// moving any excess to the uncapped clients in proportion to their weights
/// until nothing exceeds the cap. Excess that no client can absorb is left
/// unspent.
pub fn weights_to_rewards(weights: &[f64], budget: f64, cap: f64) -> Vec<f64> {
    let limit = cap * budget;
    let mut amounts: Vec<f64> = weights.iter().map(|w| w.max(0.0) * budget).collect();
    let mut capped = vec![false; weights.len()];
    for _ in 0..=weights.len() {
        let mut excess = 0.0;
        for (a, c) in amounts.iter_mut().zip(capped.iter_mut()) {
            if !*c && *a > limit {
                excess += *a - limit;
                *a = limit;
                *c = true;
            }
        }
        if excess <= 0.0 {
            break;
        }
        let free_weight: f64 = weights
            .iter()
            .zip(&capped)
            .filter(|(w, c)| !**c && **w > 0.0)
            .map(|(w, _)| *w)
            .sum();
        if free_weight <= 0.0 {
            break;
        }
        for ((a, w), c) in amounts.iter_mut().zip(weights).zip(&capped) {
            if !*c && *w > 0.0 {
                *a += excess * w / free_weight;
            }
        }
    }
    amounts
}

/// Portfolio allocation: estimate `(r̄, V)` over the history window, solve
/// the long-only minimum-variance problem at the configured target and pay
/// each client its weight times the budget, subject to the cap.
pub fn allocate_portfolio(req: &AllocationRequest, settings: &PortfolioSettings) -> RewardAllocation {
    let fallback = || {
        let mut a = allocate_uniform(req);
        a.strategy = Some(Strategy::Portfolio);
        a.flags.push(AllocationFlag::FallbackUniform);
        a
    };
    let history = match &req.history {
        Some(h) if h.len() >= 2 => h,
        _ => return fallback(),
    };
    let model = match settings.ridge {
        Some(ridge) => estimate_covariance(history, ridge),
        None => estimate_covariance_auto(history),
    };
    let Ok(model) = model else {
        return fallback();
    };

    if model.theta().is_degenerate() {
        let mut a = fallback();
        a.flags.push(AllocationFlag::DegenerateMeans);
        a.weights = Some(vec![1.0 / req.n() as f64; req.n()]);
        return a;
    }
    let target = settings.target.resolve(&model);
    let mut flags = Vec::new();
    let solution = match solve_long_only(&model, target, &settings.solver) {
        Ok(s) => s,
        Err(Error::NoConvergence(best)) => {
            flags.push(AllocationFlag::NoConvergence);
            *best
        }
        Err(_) => return fallback(),
    };
    let weights = solution.weights.weights;
    let amounts = weights_to_rewards(&weights, req.budget, req.cap);
    let mut alloc = RewardAllocation::from_amounts(Some(Strategy::Portfolio), &req.clients, &amounts);
    alloc.weights = Some(weights);
    alloc.flags = flags;
    alloc
}

/// Fills `cap·B` per client in the given order until the budget runs out.
fn fill_in_order(req: &AllocationRequest, order: &[usize]) -> Vec<f64> {
    let mut amounts = vec![0.0; req.n()];
    let mut remaining = req.budget;
    let quantum = req.cap_amount();
    for &k in order {
        if remaining <= 1e-12 * req.budget {
            break;
        }
        let give = quantum.min(remaining);
        amounts[k] = give;
        remaining -= give;
    }
    amounts
}

/// Picks clients uniformly without replacement, each receiving
/// `min(cap·B, remaining)`, until the budget is spent.
pub fn allocate_random<R: Rng + ?Sized>(req: &AllocationRequest, rng: &mut R) -> RewardAllocation {
    let mut order: Vec<usize> = (0..req.n()).collect();
    order.shuffle(rng);
    let amounts = fill_in_order(req, &order);
    RewardAllocation::from_amounts(Some(Strategy::Random), &req.clients, &amounts)
}

/// Rank by descending score, ties to the lower client id, and fill.
fn ranked(req: &AllocationRequest, strategy: Strategy, scores: &[f64]) -> RewardAllocation {
    let mut order: Vec<usize> = (0..req.n()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(req.clients[a].cmp(&req.clients[b]))
    });
    let amounts = fill_in_order(req, &order);
    RewardAllocation::from_amounts(Some(strategy), &req.clients, &amounts)
}

fn uniform_fallback(req: &AllocationRequest, strategy: Strategy) -> RewardAllocation {
    let mut a = allocate_uniform(req);
    a.strategy = Some(strategy);
    a.flags.push(AllocationFlag::FallbackUniform);
    a
}

/// Best recent performers first: mean return over the window.
pub fn allocate_greedy(req: &AllocationRequest) -> RewardAllocation {
    if req.rounds() == 0 {
        return uniform_fallback(req, Strategy::Greedy);
    }
    let means = estimate_mean(req.history.as_ref().expect("rounds > 0")).expect("non-empty");
    ranked(req, Strategy::Greedy, &means)
}

/// Best cost-effectiveness first: mean return divided by unit cost.
pub fn allocate_auction(req: &AllocationRequest) -> RewardAllocation {
    if req.rounds() == 0 {
        return uniform_fallback(req, Strategy::Auction);
    }
    let means = estimate_mean(req.history.as_ref().expect("rounds > 0")).expect("non-empty");
    let ratios: Vec<f64> = means.iter().zip(&req.unit_costs).map(|(m, c)| m / c).collect();
    ranked(req, Strategy::Auction, &ratios)
}

/// Dispatches to the named strategy.
pub fn allocate<R: Rng + ?Sized>(
    strategy: Strategy,
    req: &AllocationRequest,
    settings: &PortfolioSettings,
    rng: &mut R,
) -> RewardAllocation {
    match strategy {
        Strategy::Portfolio => allocate_portfolio(req, settings),
        Strategy::Random => allocate_random(req, rng),
        Strategy::Greedy => allocate_greedy(req),
        Strategy::Auction => allocate_auction(req),
    }
}

/// Whether strategies are re-run every round or once after warmup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Allocation computed once at the first post-warmup round, then reused.
    Static,
    /// Allocation recomputed every round from the sliding window.
    #[default]
    Adaptive,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Mode::Static),
            "adaptive" => Ok(Mode::Adaptive),
            _ => Err(Error::InvalidConfig(format!(
                "unknown mode {s:?} (expected static or adaptive)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Uniform,
    Strategy,
}

/// Rounds `1..=warmup` allocate uniformly; later rounds use the strategy.
pub fn warmup_policy(round: usize, warmup: usize, total_rounds: usize) -> Result<Phase> {
    if warmup < 2 {
        return Err(Error::InvalidConfig(format!("warmup must be >= 2, got {warmup}")));
    }
    if warmup >= total_rounds {
        return Err(Error::WarmupTooLong {
            warmup,
            rounds: total_rounds,
        });
    }
    Ok(if round <= warmup {
        Phase::Uniform
    } else {
        Phase::Strategy
    })
}
