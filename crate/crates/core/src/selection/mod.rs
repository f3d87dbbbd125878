//! Client selection: per-client RL state, the team reward, budget-aware
//! samplers, the per-client agent registry and the baseline selectors.

mod policy;
mod registry;
mod sampler;
mod sarl;

pub use policy::{LearnReport, RoundView, Selector};
pub use registry::AgentRegistry;
pub use sampler::{
    next_epsilon, sample_epsilon_greedy, sample_stochastic, select_by_score, selector_poc, selector_poca,
    selector_random, EpsilonSchedule, PickMode, PickRecord, SelectionOutcome,
};
pub use sarl::SarlPolicy;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fl::ClientId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// Per-client PPO agents with the epsilon-greedy budget sampler.
    Bippo,
    /// Per-client PPO agents with the stochastic budget sampler.
    Ippo,
    /// One PPO network over all clients with the stochastic sampler.
    Ppo,
    /// One PPO network over all clients, greedy by score.
    Fppo,
    Random,
    /// Highest recent local loss first.
    Poc,
    /// Lowest accuracy first.
    Poca,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::Bippo,
        PolicyKind::Ippo,
        PolicyKind::Ppo,
        PolicyKind::Fppo,
        PolicyKind::Random,
        PolicyKind::Poc,
        PolicyKind::Poca,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Bippo => "bippo",
            PolicyKind::Ippo => "ippo",
            PolicyKind::Ppo => "ppo",
            PolicyKind::Fppo => "fppo",
            PolicyKind::Random => "random",
            PolicyKind::Poc => "poc",
            PolicyKind::Poca => "poca",
        }
    }

    pub fn is_rl(self) -> bool {
        matches!(self, PolicyKind::Bippo | PolicyKind::Ippo | PolicyKind::Ppo | PolicyKind::Fppo)
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown policy kind `{s}`")))
    }
}

pub const STATE_DIM: usize = 5;

/// Observation of one client before a selection round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientState {
    /// Mean accuracy over all clients after the last round.
    pub avg_acc: f64,
    /// Training-set size relative to the largest live client.
    pub data_size: f64,
    /// Accuracy of the global model on this client's test shard.
    pub local_acc: f64,
    /// Round energy relative to the most expensive live client.
    pub energy: f64,
    /// 1 if the client took part in the previous round.
    pub participated_last: f64,
}

impl ClientState {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.avg_acc,
            self.data_size,
            self.local_acc,
            self.energy,
            self.participated_last,
        ]
    }
}

/// What the server knows about a client at the end of a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientObservation {
    pub id: ClientId,
    pub samples: usize,
    pub local_acc: f64,
    pub energy: f64,
    pub participated_last: bool,
}

/// Population-level values used to normalize states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateContext {
    pub avg_acc: f64,
    pub max_samples: usize,
    pub max_energy: f64,
}

impl StateContext {
    pub fn from_population(avg_acc: f64, observations: &[ClientObservation]) -> Self {
        Self {
            avg_acc,
            max_samples: observations.iter().map(|o| o.samples).max().unwrap_or(0),
            max_energy: observations.iter().map(|o| o.energy).fold(0.0, f64::max),
        }
    }
}

pub fn build_state(obs: &ClientObservation, ctx: &StateContext) -> ClientState {
    let ratio = |x: f64, max: f64| if max > 0.0 { x / max } else { 0.0 };
    ClientState {
        avg_acc: ctx.avg_acc,
        data_size: ratio(obs.samples as f64, ctx.max_samples as f64),
        local_acc: obs.local_acc,
        energy: ratio(obs.energy, ctx.max_energy),
        participated_last: if obs.participated_last { 1.0 } else { 0.0 },
    }
}

pub fn build_states(avg_acc: f64, observations: &[ClientObservation]) -> Vec<ClientState> {
    let ctx = StateContext::from_population(avg_acc, observations);
    observations.iter().map(|o| build_state(o, &ctx)).collect()
}

pub const REWARD_BASE: f64 = 64.0;

/// Shared team reward `phi * base^|curr - prev|`, with `phi = +1` only on a
/// strict improvement.
pub fn team_reward(prev_acc: f64, curr_acc: f64, base: f64) -> f64 {
    let sign = if curr_acc > prev_acc { 1.0 } else { -1.0 };
    sign * base.powf((curr_acc - prev_acc).abs())
}
