use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::{ClientState, PolicyKind, STATE_DIM};
use crate::energy::BudgetLedger;
use crate::error::{Error, Result};
use crate::fl::ClientId;
use crate::ppo::{ppo_update, Agent, PpoConfig};
use crate::rng::{SeedTree, Stream};

/// Index of the "participate" output of a per-client actor.
pub const PARTICIPATE: usize = 1;

/// One PPO agent per live client plus the sampler's epsilon.
#[derive(Debug, Clone)]
pub struct AgentRegistry {
    agents: BTreeMap<ClientId, Agent>,
    config: PpoConfig,
    seeds: SeedTree,
    pub epsilon: f64,
}

impl AgentRegistry {
    pub fn new(ids: &[ClientId], config: PpoConfig, seeds: SeedTree, epsilon: f64) -> Result<Self> {
        config.validate()?;
        let mut registry = Self {
            agents: BTreeMap::new(),
            config,
            seeds,
            epsilon,
        };
        for &id in ids {
            registry.add(id)?;
        }
        Ok(registry)
    }

    pub fn config(&self) -> &PpoConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn ids(&self) -> Vec<ClientId> {
        self.agents.keys().copied().collect()
    }

    pub fn get(&self, id: ClientId) -> Option<&Agent> {
        self.agents.get(&id)
    }

    /// Creates a fresh agent for a joining client.
    pub fn add(&mut self, id: ClientId) -> Result<()> {
        if self.agents.contains_key(&id) {
            return Err(Error::DuplicateClient(id.0));
        }
        let seed = self.seeds.seed(Stream::AgentInit, &[u64::from(id.0)]);
        self.agents.insert(id, Agent::new(STATE_DIM, 2, &self.config, seed)?);
        Ok(())
    }

    /// Destroys a leaving client's agent.
    pub fn remove(&mut self, id: ClientId) -> Result<Agent> {
        self.agents.remove(&id).ok_or(Error::UnknownClient(id.0))
    }

    /// Applies joins then leaves. Nothing changes if any leave names a client
    /// that is neither live nor joining.
    pub fn churn(&mut self, join: &[ClientId], leave: &[ClientId]) -> Result<()> {
        let mut members: BTreeSet<ClientId> = self.agents.keys().copied().collect();
        for &id in join {
            if !members.insert(id) {
                return Err(Error::DuplicateClient(id.0));
            }
        }
        for &id in leave {
            if !members.remove(&id) {
                return Err(Error::UnknownClient(id.0));
            }
        }
        for &id in join {
            self.add(id)?;
        }
        for &id in leave {
            self.remove(id)?;
        }
        Ok(())
    }

    /// Participation probability from each client's own actor.
    pub fn suggest(&self, states: &[(ClientId, ClientState)]) -> Result<Vec<f64>> {
        states
            .par_iter()
            .map(|(id, s)| {
                let agent = self.agents.get(id).ok_or(Error::UnknownClient(id.0))?;
                Ok(agent.policy(&s.to_vec())?[PARTICIPATE])
            })
            .collect()
    }

    /// Appends the team reward to each participant's buffer and runs PPO for
    /// the buffers that filled up. Non-participants are not touched. Returns
    /// the ids whose networks were updated.
    ///
    /// `participants` holds `(id, state at selection, state after the round)`.
    pub fn train_participants_only(
        &mut self,
        participants: &[(ClientId, ClientState, ClientState)],
        reward: f64,
        ledger: &mut BudgetLedger,
        kind: PolicyKind,
    ) -> Result<Vec<ClientId>> {
        let mut work: Vec<(ClientId, &mut Agent, &ClientState, &ClientState)> = Vec::with_capacity(participants.len());
        let by_id: BTreeMap<ClientId, (&ClientState, &ClientState)> =
            participants.iter().map(|(id, s, n)| (*id, (s, n))).collect();
        if by_id.len() != participants.len() {
            return Err(Error::Config("duplicate participant in training set".into()));
        }
        if let Some(missing) = by_id.keys().find(|id| !self.agents.contains_key(id)) {
            return Err(Error::UnknownClient(missing.0));
        }
        for (id, agent) in self.agents.iter_mut() {
            if let Some((s, n)) = by_id.get(id) {
                work.push((*id, agent, s, n));
            }
        }
        let config = self.config;
        let updated: Vec<Option<ClientId>> = work
            .into_par_iter()
            .map(|(id, agent, state, next)| {
                let t = agent.transition(state.to_vec(), vec![PARTICIPATE], reward)?;
                if agent.buffer.push(t) {
                    let bootstrap = agent.value(&next.to_vec())?;
                    ppo_update(agent, bootstrap, &config)?;
                    Ok(Some(id))
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;
        let updated: Vec<ClientId> = updated.into_iter().flatten().collect();
        let nets: Vec<_> = updated
            .iter()
            .flat_map(|id| {
                let a = &self.agents[id];
                [&a.actor, &a.critic]
            })
            .collect();
        ledger.record_rl_macs(kind, &nets, config.batch, config.epochs);
        Ok(updated)
    }
}
