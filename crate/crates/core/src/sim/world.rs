use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use crate::error::{Error, Result};

pub type ClientId = usize;
pub type GroupId = usize;

/// Independent random streams derived from one seed. Each subsystem draws
/// from its own stream so that, for example, enabling events does not shift
/// the noise sequence, and allocation choices never perturb the world.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 0,
    Capacity = 1,
    Events = 2,
    Noise = 3,
    Allocator = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientState {
    pub id: ClientId,
    pub group: GroupId,
    pub capacity: f64,
    pub initial_capacity: f64,
    pub unit_cost: f64,
    pub active: bool,
    /// Cumulative resources invested, `E_i`.
    pub effective_resources: f64,
    /// Latent accuracy `a_max·(1 − exp(−κ·E_i))`.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupState {
    pub id: GroupId,
    pub members: Vec<ClientId>,
    pub shock_corr: f64,
}

/// Outcome of one simulated round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReturns {
    pub round: usize,
    /// Realized return per client, indexed by client id.
    pub returns: Vec<f64>,
    /// Resources each client actually bought.
    pub resources: Vec<f64>,
    /// Global return `R_p`.
    pub global: f64,
    pub spent: f64,
}

/// Shocks applied by one [`World::step_capacities`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityStep {
    /// Relative change `δ_i` applied before clamping, indexed by client id.
    pub shocks: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EventCounts {
    pub breakdowns: usize,
    pub departures: usize,
    pub joins: usize,
}

/// The simulated federation: one server, client groups behind edge stations,
/// and the clients themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    config: SimConfig,
    seed: u64,
    round: usize,
    groups: Vec<GroupState>,
    clients: Vec<ClientState>,
    global_acc: f64,
    capacity_rng: ChaCha8Rng,
    event_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
}

impl World {
    /// Builds a world. Draw order on the init stream: per-group sizes, then
    /// per-client capacities, then per-client unit costs.
    pub fn new(config: SimConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, Stream::Init);
        let [smin, smax] = config.group_size;
        let sizes: Vec<usize> = (0..config.groups)
            .map(|_| rng.random_range(smin..=smax))
            .collect();

        let mut groups = Vec::with_capacity(sizes.len());
        let mut owner = Vec::new();
        for (g, &size) in sizes.iter().enumerate() {
            let start = owner.len();
            owner.extend(std::iter::repeat_n(g, size));
            groups.push(GroupState {
                id: g,
                members: (start..start + size).collect(),
                shock_corr: config.shock_corr,
            });
        }
        let [cmin, cmax] = config.capacity;
        let capacities: Vec<f64> = owner.iter().map(|_| rng.random_range(cmin..=cmax)).collect();
        let [kmin, kmax] = config.unit_cost;
        let costs: Vec<f64> = owner.iter().map(|_| rng.random_range(kmin..=kmax)).collect();

        let clients = owner
            .iter()
            .enumerate()
            .map(|(id, &group)| ClientState {
                id,
                group,
                capacity: capacities[id],
                initial_capacity: capacities[id],
                unit_cost: costs[id],
                active: true,
                effective_resources: 0.0,
                accuracy: 0.0,
            })
            .collect();

        Ok(Self {
            config,
            seed,
            round: 0,
            groups,
            clients,
            global_acc: 0.0,
            capacity_rng: stream_rng(seed, Stream::Capacity),
            event_rng: stream_rng(seed, Stream::Events),
            noise_rng: stream_rng(seed, Stream::Noise),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Rounds realized so far.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn groups(&self) -> &[GroupState] {
        &self.groups
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn active_clients(&self) -> Vec<ClientId> {
        self.clients.iter().filter(|c| c.active).map(|c| c.id).collect()
    }

    pub fn global_acc(&self) -> f64 {
        self.global_acc
    }

    pub fn unit_costs(&self) -> Vec<f64> {
        self.clients.iter().map(|c| c.unit_cost).collect()
    }

    /// Pretty-printed JSON of the full state, RNG positions included.
    pub fn snapshot_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("world serializes")
    }

    /// One correlated draw per client: `β·g + (1 − β)·ε` with a shared
    /// `g ~ U(−1, 1)` per group and an individual `ε ~ U(−1, 1)`.
    fn correlated_draws(groups: &[GroupState], n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for group in groups {
            let beta = group.shock_corr;
            let g: f64 = rng.random_range(-1.0..=1.0);
            for &id in &group.members {
                let e: f64 = rng.random_range(-1.0..=1.0);
                out[id] = (beta * g + (1.0 - beta) * e).clamp(-1.0, 1.0);
            }
        }
        out
    }

    /// Applies one round of multiplicative capacity drift,
    /// `capacity ← capacity·(1 + drift·(β·g + (1 − β)·ε))`, then clamps.
    pub fn step_capacities(&mut self) -> CapacityStep {
        let draws = Self::correlated_draws(&self.groups, self.clients.len(), &mut self.capacity_rng);
        let [lo, hi] = self.config.capacity_clamp;
        let shocks: Vec<f64> = draws.iter().map(|d| self.config.drift * d).collect();
        for (client, &delta) in self.clients.iter_mut().zip(&shocks) {
            let next = client.capacity * (1.0 + delta);
            client.capacity = next.clamp(client.initial_capacity * lo, client.initial_capacity * hi);
        }
        CapacityStep { shocks }
    }

    /// Active clients break down or leave; inactive ones rejoin.
    pub fn mark_events(&mut self) -> EventCounts {
        let cfg = &self.config;
        let mut counts = EventCounts::default();
        if cfg.p_breakdown == 0.0 && cfg.p_leave == 0.0 && cfg.p_join == 0.0 {
            return counts;
        }
        for client in &mut self.clients {
            let u: f64 = self.event_rng.random();
            if client.active {
                if u < cfg.p_breakdown {
                    client.active = false;
                    counts.breakdowns += 1;
                } else if u < cfg.p_breakdown + cfg.p_leave {
                    client.active = false;
                    counts.departures += 1;
                }
            } else if u < cfg.p_join {
                client.active = true;
                counts.joins += 1;
            }
        }
        counts
    }

    /// Spends `rewards` on the clients and realizes one round of returns.
    ///
    /// Each rewarded client buys `min(reward/unit_cost, capacity)` resources,
    /// its latent accuracy moves along the learning curve and its return is the
    /// accuracy increment plus group-correlated noise. Unrewarded clients
    /// return noise only; inactive ones return zero. The global return is
    /// the sum over rewarded clients divided by the number of active clients.
    pub fn realize_round(
        &mut self,
        rewards: &BTreeMap<ClientId, f64>,
        budget: f64,
    ) -> Result<RoundReturns> {
        let mut spent = 0.0;
        for (&id, &reward) in rewards {
            let client = self.clients.get(id).ok_or(Error::UnknownClient(id))?;
            if !(reward >= 0.0 && reward.is_finite()) {
                return Err(Error::InvalidAllocation(format!(
                    "reward {reward} for client {id} must be finite and >= 0"
                )));
            }
            if reward > 0.0 && !client.active {
                return Err(Error::InvalidAllocation(format!(
                    "client {id} is inactive and cannot be rewarded"
                )));
            }
            spent += reward;
        }
        if spent > budget + 1e-9 {
            return Err(Error::InvalidAllocation(format!(
                "rewards total {spent} exceed budget {budget}"
            )));
        }

        let n = self.clients.len();
        let draws = Self::correlated_draws(&self.groups, n, &mut self.noise_rng);
        let noise_scale = self.noise_scale();
        let (a_max, kappa) = (self.config.a_max, self.config.kappa);

        let mut returns = vec![0.0; n];
        let mut resources = vec![0.0; n];
        let mut rewarded_sum = 0.0;
        let mut n_active = 0usize;
        for client in &mut self.clients {
            if !client.active {
                continue;
            }
            n_active += 1;
            let id = client.id;
            let reward = rewards.get(&id).copied().unwrap_or(0.0);
            let noise = noise_scale * draws[id];
            if reward > 0.0 {
                let bought = (reward / client.unit_cost).min(client.capacity);
                client.effective_resources += bought;
                let next = a_max * (1.0 - (-kappa * client.effective_resources).exp());
                returns[id] = next - client.accuracy + noise;
                client.accuracy = next;
                resources[id] = bought;
                rewarded_sum += returns[id];
            } else {
                returns[id] = noise;
            }
        }
        let global = if n_active > 0 {
            rewarded_sum / n_active as f64
        } else {
            0.0
        };
        self.global_acc = (self.global_acc + global).clamp(0.0, 1.0);
        self.round += 1;
        Ok(RoundReturns {
            round: self.round,
            returns,
            resources,
            global,
            spent,
        })
    }

    /// Multiplier turning a mixture draw `β·g + (1 − β)·ε` into noise with
    /// standard deviation `noise_sigma`.
    fn noise_scale(&self) -> f64 {
        let beta = self.config.shock_corr;
        let var = (beta * beta + (1.0 - beta) * (1.0 - beta)) / 3.0;
        self.config.noise_sigma / var.sqrt()
    }
}
