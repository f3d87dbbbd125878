use super::{ClientState, PolicyKind, STATE_DIM};
use crate::energy::BudgetLedger;
use crate::error::{Error, Result};
use crate::fl::ClientId;
use crate::ppo::{ppo_update, Agent, PpoConfig};
use crate::rng::{SeedTree, Stream};

/// A single PPO learner that sees the concatenated states of all clients and
/// emits one softmax score per client. Its dimensions are tied to the
/// population, so any membership change replaces it with a fresh network.
#[derive(Debug, Clone)]
pub struct SarlPolicy {
    agent: Agent,
    ids: Vec<ClientId>,
    config: PpoConfig,
    seeds: SeedTree,
    generation: u64,
}

pub fn concat_states(states: &[ClientState]) -> Vec<f64> {
    states.iter().flat_map(|s| s.to_vec()).collect()
}

impl SarlPolicy {
    pub fn new(ids: &[ClientId], config: PpoConfig, seeds: SeedTree) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            agent: Self::fresh_agent(ids.len(), &config, &seeds, 0)?,
            ids: ids.to_vec(),
            config,
            seeds,
            generation: 0,
        })
    }

    fn fresh_agent(n: usize, config: &PpoConfig, seeds: &SeedTree, generation: u64) -> Result<Agent> {
        if n == 0 {
            return Err(Error::Config("single-network policy needs at least one client".into()));
        }
        let seed = seeds.seed(Stream::AgentInit, &[u64::MAX, generation]);
        Agent::new(STATE_DIM * n, n, config, seed)
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn ids(&self) -> &[ClientId] {
        &self.ids
    }

    /// Number of times the network has been replaced.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Re-initializes the network if the client population changed.
    pub fn sync_population(&mut self, ids: &[ClientId]) -> Result<bool> {
        if ids == self.ids.as_slice() {
            return Ok(false);
        }
        self.generation += 1;
        self.agent = Self::fresh_agent(ids.len(), &self.config, &self.seeds, self.generation)?;
        self.ids = ids.to_vec();
        Ok(true)
    }

    fn check_population(&self, ids: &[ClientId]) -> Result<()> {
        if ids != self.ids.as_slice() {
            return Err(Error::Config(format!(
                "single-network policy built for {} clients was given {}; call sync_population first",
                self.ids.len(),
                ids.len()
            )));
        }
        Ok(())
    }

    /// Softmax score per client, in the order of `ids`.
    pub fn scores(&self, ids: &[ClientId], states: &[ClientState]) -> Result<Vec<f64>> {
        self.check_population(ids)?;
        self.agent.policy(&concat_states(states))
    }

    /// Stores one transition whose action is the set of chosen positions and
    /// updates the network when the buffer is full. Rounds without
    /// participants produce no transition. Returns whether an update ran.
    #[allow(clippy::too_many_arguments)]
    pub fn observe(
        &mut self,
        ids: &[ClientId],
        states: &[ClientState],
        chosen: &[usize],
        reward: f64,
        next_states: &[ClientState],
        ledger: &mut BudgetLedger,
        kind: PolicyKind,
    ) -> Result<bool> {
        self.check_population(ids)?;
        if chosen.is_empty() {
            return Ok(false);
        }
        let mut action = chosen.to_vec();
        action.sort_unstable();
        let t = self.agent.transition(concat_states(states), action, reward)?;
        if !self.agent.buffer.push(t) {
            return Ok(false);
        }
        let bootstrap = self.agent.value(&concat_states(next_states))?;
        ppo_update(&mut self.agent, bootstrap, &self.config)?;
        ledger.record_rl_macs(kind, &[&self.agent.actor, &self.agent.critic], self.config.batch, self.config.epochs);
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::select_by_score;

    fn ids(n: u32) -> Vec<ClientId> {
        (0..n).map(ClientId).collect()
    }

    fn states(n: usize) -> Vec<ClientState> {
        (0..n)
            .map(|i| ClientState {
                avg_acc: 0.5,
                data_size: 1.0,
                local_acc: i as f64 / n as f64,
                energy: 0.5,
                participated_last: 0.0,
            })
            .collect()
    }

    #[test]
    fn dimensions_follow_population() {
        let p = SarlPolicy::new(&ids(20), PpoConfig::default(), SeedTree::new(1)).unwrap();
        assert_eq!(p.agent().actor.input_dim(), 100);
        assert_eq!(p.agent().actor.output_dim(), 20);
        assert_eq!(p.scores(&ids(20), &states(20)).unwrap().len(), 20);
    }

    #[test]
    fn equal_scores_pick_lowest_ids() {
        let out = select_by_score(&[0.25; 4], &[1.0; 4], 2.0);
        assert_eq!(out.chosen, vec![0, 1]);
    }

    #[test]
    fn churn_reinitializes_to_near_uniform() {
        let config = PpoConfig { hidden: 8, batch: 1, ..PpoConfig::default() };
        let mut p = SarlPolicy::new(&ids(4), config, SeedTree::new(2)).unwrap();
        let mut ledger = BudgetLedger::new(1.0);
        for _ in 0..20 {
            p.observe(&ids(4), &states(4), &[0], 5.0, &states(4), &mut ledger, PolicyKind::Fppo).unwrap();
        }
        let trained = p.scores(&ids(4), &states(4)).unwrap();
        assert!(trained[0] > 0.3, "{trained:?}");
        assert!(ledger.rl_macs(PolicyKind::Fppo) > 0);

        assert!(p.sync_population(&ids(5)).unwrap());
        assert_eq!(p.generation(), 1);
        assert!(p.scores(&ids(4), &states(4)).is_err());
        let fresh = p.scores(&ids(5), &states(5)).unwrap();
        for s in fresh {
            assert!((s - 0.2).abs() < 0.02, "{s}");
        }
        assert!(!p.sync_population(&ids(5)).unwrap());
    }

    #[test]
    fn no_participants_no_transition() {
        let mut p = SarlPolicy::new(&ids(3), PpoConfig::default(), SeedTree::new(2)).unwrap();
        let mut ledger = BudgetLedger::new(1.0);
        assert!(!p.observe(&ids(3), &states(3), &[], 1.0, &states(3), &mut ledger, PolicyKind::Ppo).unwrap());
        assert!(p.agent().buffer.is_empty());
    }
}
