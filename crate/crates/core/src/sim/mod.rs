//! Agent-based model of a multi-level federation: a server, client groups
//! behind edge base stations, and IoT clients whose capacities drift with
//! group-correlated shocks. A saturating learning curve stands in for local
//! training and turns purchased resources into per-round returns.

mod config;
mod world;

pub use config::SimConfig;
pub use world::{
    stream_rng, CapacityStep, ClientId, ClientState, EventCounts, GroupId, GroupState,
    RoundReturns, Stream, World,
};
