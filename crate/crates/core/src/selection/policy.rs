use rand::Rng;

use super::registry::AgentRegistry;
use super::sampler::{
    sample_epsilon_greedy, sample_stochastic, select_by_score, selector_poc, selector_poca, selector_random,
    EpsilonSchedule, SelectionOutcome,
};
use super::sarl::SarlPolicy;
use super::{ClientState, PolicyKind};
use crate::energy::BudgetLedger;
use crate::error::{Error, Result};
use crate::fl::ClientId;
use crate::ppo::PpoConfig;
use crate::rng::SeedTree;

/// Everything a selector may look at for one round, indexed by position.
/// `ids` is sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundView {
    pub ids: Vec<ClientId>,
    pub states: Vec<ClientState>,
    pub energies: Vec<f64>,
    pub last_losses: Vec<f64>,
    pub local_accs: Vec<f64>,
}

impl RoundView {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.ids.len();
        for (name, len) in [
            ("states", self.states.len()),
            ("energies", self.energies.len()),
            ("last_losses", self.last_losses.len()),
            ("local_accs", self.local_accs.len()),
        ] {
            if len != n {
                return Err(Error::Config(format!("round view has {len} {name} for {n} clients")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearnReport {
    /// Clients whose networks (or the shared network, reported under every
    /// participant) were updated this round.
    pub updated: Vec<ClientId>,
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Selector {
    Marl {
        kind: PolicyKind,
        registry: AgentRegistry,
        schedule: EpsilonSchedule,
    },
    Sarl {
        kind: PolicyKind,
        policy: SarlPolicy,
    },
    Heuristic {
        kind: PolicyKind,
    },
}

impl Selector {
    pub fn new(
        kind: PolicyKind,
        ids: &[ClientId],
        ppo: PpoConfig,
        schedule: EpsilonSchedule,
        seeds: SeedTree,
    ) -> Result<Self> {
        Ok(match kind {
            PolicyKind::Bippo | PolicyKind::Ippo => Selector::Marl {
                kind,
                registry: AgentRegistry::new(ids, ppo, seeds, schedule.start)?,
                schedule,
            },
            PolicyKind::Ppo | PolicyKind::Fppo => Selector::Sarl {
                kind,
                policy: SarlPolicy::new(ids, ppo, seeds)?,
            },
            PolicyKind::Random | PolicyKind::Poc | PolicyKind::Poca => Selector::Heuristic { kind },
        })
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            Selector::Marl { kind, .. } | Selector::Sarl { kind, .. } | Selector::Heuristic { kind } => *kind,
        }
    }

    /// Current exploration rate of the epsilon-greedy sampler.
    pub fn epsilon(&self) -> Option<f64> {
        match self {
            Selector::Marl {
                kind: PolicyKind::Bippo,
                registry,
                ..
            } => Some(registry.epsilon),
            _ => None,
        }
    }

    pub fn registry(&self) -> Option<&AgentRegistry> {
        match self {
            Selector::Marl { registry, .. } => Some(registry),
            _ => None,
        }
    }

    pub fn sarl(&self) -> Option<&SarlPolicy> {
        match self {
            Selector::Sarl { policy, .. } => Some(policy),
            _ => None,
        }
    }

    pub fn select<R: Rng>(&mut self, view: &RoundView, budget: f64, rng: &mut R) -> Result<SelectionOutcome> {
        view.check()?;
        match self {
            Selector::Marl {
                kind,
                registry,
                schedule,
            } => {
                let pairs: Vec<(ClientId, ClientState)> = view.ids.iter().copied().zip(view.states.iter().copied()).collect();
                let probs = registry.suggest(&pairs)?;
                if *kind == PolicyKind::Bippo {
                    let (outcome, eps) =
                        sample_epsilon_greedy(&probs, &view.energies, budget, registry.epsilon, schedule, rng);
                    registry.epsilon = eps;
                    Ok(outcome)
                } else {
                    Ok(sample_stochastic(&probs, &view.energies, budget, rng))
                }
            }
            Selector::Sarl { kind, policy } => {
                policy.sync_population(&view.ids)?;
                let scores = policy.scores(&view.ids, &view.states)?;
                if *kind == PolicyKind::Fppo {
                    Ok(select_by_score(&scores, &view.energies, budget))
                } else {
                    Ok(sample_stochastic(&scores, &view.energies, budget, rng))
                }
            }
            Selector::Heuristic { kind } => Ok(match kind {
                PolicyKind::Random => selector_random(&view.energies, budget, rng),
                PolicyKind::Poc => selector_poc(&view.last_losses, &view.energies, budget),
                _ => selector_poca(&view.local_accs, &view.energies, budget),
            }),
        }
    }

    /// Feeds the round's team reward to the learners. `before` is the view the
    /// selection was made from, `after` the view for the next round (same
    /// population).
    pub fn learn(
        &mut self,
        before: &RoundView,
        outcome: &SelectionOutcome,
        reward: f64,
        after: &RoundView,
        ledger: &mut BudgetLedger,
    ) -> Result<LearnReport> {
        if before.ids != after.ids {
            return Err(Error::Config("population changed between selection and learning".into()));
        }
        match self {
            Selector::Marl { kind, registry, .. } => {
                let participants: Vec<(ClientId, ClientState, ClientState)> = outcome
                    .chosen
                    .iter()
                    .map(|&p| (before.ids[p], before.states[p], after.states[p]))
                    .collect();
                let updated = registry.train_participants_only(&participants, reward, ledger, *kind)?;
                Ok(LearnReport { updated })
            }
            Selector::Sarl { kind, policy } => {
                let ran = policy.observe(
                    &before.ids,
                    &before.states,
                    &outcome.chosen,
                    reward,
                    &after.states,
                    ledger,
                    *kind,
                )?;
                Ok(LearnReport {
                    updated: if ran {
                        outcome.chosen.iter().map(|&p| before.ids[p]).collect()
                    } else {
                        Vec::new()
                    },
                })
            }
            Selector::Heuristic { .. } => Ok(LearnReport::default()),
        }
    }

    /// Applies a membership change. Per-client agents are added and removed
    /// individually; the single-network selectors start over with a fresh
    /// network sized for `population_after`.
    pub fn churn(&mut self, join: &[ClientId], leave: &[ClientId], population_after: &[ClientId]) -> Result<()> {
        match self {
            Selector::Marl { registry, .. } => registry.churn(join, leave),
            Selector::Sarl { policy, .. } => policy.sync_population(population_after).map(|_| ()),
            Selector::Heuristic { .. } => Ok(()),
        }
    }
}
