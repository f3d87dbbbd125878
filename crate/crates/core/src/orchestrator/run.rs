use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::config::{DataConfig, ScenarioConfig};
use crate::data::{generate_synthetic_with, load_external, partition, Dataset};
use crate::energy::{combine, comm_energy, comp_energy, make_budget, total_energy, BudgetLedger};
use crate::error::{Error, Result};
use crate::fl::{classifier, evaluate_global, fedavg, local_train, ClientId, ClientProfile, GlobalModel, LocalTrainConfig};
use crate::nn::DenseNet;
use crate::rng::{SeedTree, Stream};
use crate::selection::{
    build_states, team_reward, ClientObservation, PickMode, RoundView, SelectionOutcome, Selector, REWARD_BASE,
};

/// One sampler pick.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub client: ClientId,
    pub mode: PickMode,
    pub energy: f64,
    pub suggestion: f64,
    pub admitted: bool,
}

/// Everything observed in one round. Round 0 is the bootstrap round, in
/// which every active client trains without a budget.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    /// Clients live during the round, ascending.
    pub active: Vec<ClientId>,
    /// Participants in pick order.
    pub chosen: Vec<ClientId>,
    pub budget: f64,
    pub spent: f64,
    pub cumulative_fl: f64,
    pub global_acc: f64,
    /// `None` for the bootstrap round.
    pub reward: Option<f64>,
    /// Exploration rate used for this round's selection, if any.
    pub epsilon: Option<f64>,
    pub rl_macs: u64,
    pub cumulative_rl_macs: u64,
    /// Clients whose selector networks were updated.
    pub updated: Vec<ClientId>,
    /// Global-model accuracy on each active client's test shard.
    pub client_accs: Vec<f64>,
    /// Most recent local training loss of each active client.
    pub client_losses: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    pub config: ScenarioConfig,
    /// Rounds `0..=R`.
    pub records: Vec<RoundRecord>,
    pub warnings: Vec<String>,
}

impl RunArtifact {
    /// Global accuracy per round, bootstrap first.
    pub fn history(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.global_acc).collect()
    }

    pub fn cumulative_rl_macs(&self) -> u64 {
        self.records.last().map_or(0, |r| r.cumulative_rl_macs)
    }

    pub fn cumulative_fl(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative_fl)
    }
}

#[derive(Debug, Clone, Copy)]
struct ClientRuntime {
    last_loss: f64,
    local_acc: f64,
    participated_last: bool,
}

/// The round loop as a steppable state machine. [`run`] drives it to the
/// end; tests can inspect the selector between rounds.
pub struct Simulation {
    config: ScenarioConfig,
    seeds: SeedTree,
    profiles: BTreeMap<ClientId, ClientProfile>,
    energies: BTreeMap<ClientId, f64>,
    active: BTreeSet<ClientId>,
    runtime: BTreeMap<ClientId, ClientRuntime>,
    template: DenseNet,
    global: GlobalModel,
    selector: Selector,
    ledger: BudgetLedger,
    records: Vec<RoundRecord>,
    warnings: Vec<String>,
    infeasible_warned: bool,
}

fn load_data(config: &ScenarioConfig) -> Result<Dataset> {
    match &config.data {
        DataConfig::Synthetic {
            classes,
            dim,
            per_class,
            separation,
        } => {
            let demand = config.roster_size() * (config.partition.train_per_client + config.partition.test_per_client);
            generate_synthetic_with(*classes, *dim, per_class.unwrap_or(demand), *separation, config.seed)
        }
        DataConfig::Csv { path, classes } => load_external(path, *classes),
    }
}

impl Simulation {
    /// Builds the roster, the classifier and the selector, then runs the
    /// bootstrap round.
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let seeds = SeedTree::new(config.seed);
        let data = load_data(&config)?;
        let shards = partition(&data, &config.partition_spec())?;
        let mut profiles = BTreeMap::new();
        let mut energies = BTreeMap::new();
        for (i, shard) in shards.into_iter().enumerate() {
            let id = ClientId(i as u32);
            let device = config.device_of(id).expect("roster and partition agree");
            let profile = ClientProfile::new(id, shard.train, shard.test, device, config.energy.bits_per_sample)?;
            energies.insert(id, total_energy(&profile, &config.energy)?);
            profiles.insert(id, profile);
        }
        let initial = config.initial_population();
        let budget = make_budget(initial.iter().map(|id| &profiles[id]), &config.energy, config.budget_fraction)?;
        let template = classifier(data.dim(), &config.fl.hidden, data.classes, seeds.seed(Stream::ModelInit, &[]))?;
        let selector = Selector::new(config.policy, &initial, config.ppo, config.epsilon, seeds)?;
        let global = GlobalModel::bootstrap(template.flatten(), 0.0);
        let mut sim = Self {
            seeds,
            profiles,
            energies,
            active: initial.iter().copied().collect(),
            runtime: BTreeMap::new(),
            template,
            global,
            selector,
            ledger: BudgetLedger::new(budget),
            records: Vec::new(),
            warnings: Vec::new(),
            infeasible_warned: false,
            config,
        };
        sim.bootstrap()?;
        Ok(sim)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn selector(&self) -> &Selector {
        &self.selector
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn active(&self) -> Vec<ClientId> {
        self.active.iter().copied().collect()
    }

    /// Round energy of each roster client.
    pub fn energies(&self) -> &BTreeMap<ClientId, f64> {
        &self.energies
    }

    /// Completed regular rounds.
    pub fn round(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn is_done(&self) -> bool {
        self.round() >= self.config.rounds
    }

    fn bootstrap_config(&self) -> LocalTrainConfig {
        LocalTrainConfig {
            epochs: self.config.fl.bootstrap_epochs,
            ..self.config.local_train()
        }
    }

    /// Unbudgeted short training of `ids` from the current global model.
    /// Returns each client's update in the order of `ids`.
    fn bootstrap_train(&mut self, ids: &[ClientId], tag: u64) -> Result<Vec<crate::fl::LocalUpdate>> {
        let cfg = self.bootstrap_config();
        let updates = ids
            .par_iter()
            .map(|id| {
                let mut rng = self.seeds.rng(Stream::Batching, &[tag, u64::from(id.0)]);
                local_train(&self.profiles[id], &self.template, &self.global.params, &cfg, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        for id in ids {
            let p = &self.profiles[id];
            let e = combine(comm_energy(&p.device, &self.config.energy)?, comp_energy(&p.device, p.data_bits), cfg.epochs)?;
            self.ledger.record_unbudgeted(e);
        }
        for (id, u) in ids.iter().zip(&updates) {
            self.runtime.insert(
                *id,
                ClientRuntime {
                    last_loss: u.loss,
                    local_acc: 0.0,
                    participated_last: false,
                },
            );
        }
        Ok(updates)
    }

    fn bootstrap(&mut self) -> Result<()> {
        let ids = self.active();
        let updates = self.bootstrap_train(&ids, u64::MAX)?;
        let weighted: Vec<_> = ids
            .iter()
            .zip(updates)
            .map(|(id, u)| (u.params, self.profiles[id].sample_count() as f64))
            .collect();
        self.global.params = fedavg(&weighted)?;
        let (acc, per_client) = self.evaluate()?;
        self.global.history[0] = acc;
        for (id, a) in ids.iter().zip(&per_client) {
            let rt = self.runtime.get_mut(id).expect("bootstrapped");
            rt.local_acc = *a;
            rt.participated_last = true;
        }
        self.warn_if_infeasible();
        self.records.push(RoundRecord {
            round: 0,
            active: ids.clone(),
            chosen: ids.clone(),
            budget: self.ledger.budget(),
            spent: 0.0,
            cumulative_fl: self.ledger.cumulative_fl(),
            global_acc: acc,
            reward: None,
            epsilon: None,
            rl_macs: 0,
            cumulative_rl_macs: 0,
            updated: Vec::new(),
            client_accs: per_client,
            client_losses: ids.iter().map(|id| self.runtime[id].last_loss).collect(),
            trace: Vec::new(),
        });
        Ok(())
    }

    fn evaluate(&self) -> Result<(f64, Vec<f64>)> {
        evaluate_global(&self.template, &self.global.params, self.active.iter().map(|id| &self.profiles[id]))
    }

    fn warn_if_infeasible(&mut self) {
        let cheapest = self.active.iter().map(|id| self.energies[id]).fold(f64::INFINITY, f64::min);
        if cheapest > self.ledger.budget() && !self.infeasible_warned {
            self.infeasible_warned = true;
            self.warnings.push(format!(
                "budget {} J is below the cheapest client's round energy {} J; rounds will have no participants",
                self.ledger.budget(),
                cheapest
            ));
        }
    }

    fn view(&self) -> RoundView {
        let ids = self.active();
        let observations: Vec<ClientObservation> = ids
            .iter()
            .map(|id| {
                let rt = &self.runtime[id];
                ClientObservation {
                    id: *id,
                    samples: self.profiles[id].sample_count(),
                    local_acc: rt.local_acc,
                    energy: self.energies[id],
                    participated_last: rt.participated_last,
                }
            })
            .collect();
        RoundView {
            states: build_states(self.global.accuracy(), &observations),
            energies: ids.iter().map(|id| self.energies[id]).collect(),
            last_losses: ids.iter().map(|id| self.runtime[id].last_loss).collect(),
            local_accs: ids.iter().map(|id| self.runtime[id].local_acc).collect(),
            ids,
        }
    }

    fn apply_churn(&mut self, round: usize) -> Result<()> {
        let events: Vec<_> = self.config.churn.iter().filter(|e| e.round == round).cloned().collect();
        if events.is_empty() {
            return Ok(());
        }
        let join: Vec<ClientId> = events.iter().flat_map(|e| e.join.iter().map(|&i| ClientId(i))).collect();
        let leave: Vec<ClientId> = events.iter().flat_map(|e| e.leave.iter().map(|&i| ClientId(i))).collect();
        for id in &join {
            if !self.active.insert(*id) {
                return Err(Error::DuplicateClient(id.0));
            }
        }
        for id in &leave {
            if !self.active.remove(id) {
                return Err(Error::UnknownClient(id.0));
            }
            self.runtime.remove(id);
        }
        let joined: Vec<ClientId> = join.iter().copied().filter(|id| self.active.contains(id)).collect();
        self.bootstrap_train(&joined, round as u64 | 1 << 63)?;
        let (_, per_client) = self.evaluate()?;
        for (id, a) in self.active.iter().zip(per_client) {
            if joined.contains(id) {
                self.runtime.get_mut(id).expect("bootstrapped").local_acc = a;
            }
        }
        let after = self.active();
        self.selector.churn(&join, &leave, &after)?;
        self.infeasible_warned = false;
        self.warn_if_infeasible();
        Ok(())
    }

    /// Runs one regular round and returns its record.
    pub fn step(&mut self) -> Result<&RoundRecord> {
        if self.is_done() {
            return Err(Error::Config(format!("all {} rounds have run", self.config.rounds)));
        }
        let round = self.round() + 1;
        self.apply_churn(round)?;
        self.ledger.start_round();
        let macs_before = self.ledger.total_rl_macs();
        let epsilon = self.selector.epsilon();

        let before = self.view();
        let mut rng = self.seeds.rng(Stream::Sampler, &[round as u64]);
        let outcome = self.selector.select(&before, self.ledger.budget(), &mut rng)?;
        for &p in &outcome.chosen {
            self.ledger.charge(before.energies[p])?;
        }

        let mut participants: Vec<ClientId> = outcome.chosen.iter().map(|&p| before.ids[p]).collect();
        participants.sort_unstable();
        let cfg = self.config.local_train();
        let updates = participants
            .par_iter()
            .map(|id| {
                let mut rng = self.seeds.rng(Stream::Batching, &[round as u64, u64::from(id.0)]);
                local_train(&self.profiles[id], &self.template, &self.global.params, &cfg, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let new_params = if updates.is_empty() {
            None
        } else {
            let weighted: Vec<_> = participants
                .iter()
                .zip(&updates)
                .map(|(id, u)| (u.params.clone(), self.profiles[id].sample_count() as f64))
                .collect();
            Some(fedavg(&weighted)?)
        };
        let prev_acc = self.global.accuracy();
        if let Some(p) = new_params {
            self.global.params = p;
        }
        let (acc, per_client) = self.evaluate()?;
        self.global.advance(None, acc);
        let reward = team_reward(prev_acc, acc, REWARD_BASE);

        for (id, u) in participants.iter().zip(&updates) {
            self.runtime.get_mut(id).expect("active").last_loss = u.loss;
        }
        for ((id, a), p) in before.ids.iter().zip(&per_client).zip(0..) {
            let rt = self.runtime.get_mut(id).expect("active");
            rt.local_acc = *a;
            rt.participated_last = outcome.is_chosen(p);
        }
        let after = self.view();
        let report = self.selector.learn(&before, &outcome, reward, &after, &mut self.ledger)?;

        let record = RoundRecord {
            round,
            chosen: outcome.chosen.iter().map(|&p| before.ids[p]).collect(),
            budget: self.ledger.budget(),
            spent: self.ledger.spent(),
            cumulative_fl: self.ledger.cumulative_fl(),
            global_acc: acc,
            reward: Some(reward),
            epsilon,
            rl_macs: self.ledger.total_rl_macs() - macs_before,
            cumulative_rl_macs: self.ledger.total_rl_macs(),
            updated: report.updated,
            client_accs: per_client,
            client_losses: after.last_losses.clone(),
            trace: trace_rows(&before, &outcome),
            active: before.ids,
        };
        self.records.push(record);
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn finish(self) -> RunArtifact {
        RunArtifact {
            config: self.config,
            records: self.records,
            warnings: self.warnings,
        }
    }
}

fn trace_rows(view: &RoundView, outcome: &SelectionOutcome) -> Vec<TraceRow> {
    outcome
        .trace
        .iter()
        .enumerate()
        .map(|(step, pick)| TraceRow {
            step,
            client: view.ids[pick.position],
            mode: pick.mode,
            energy: view.energies[pick.position],
            suggestion: outcome.suggestions[pick.position],
            admitted: pick.admitted,
        })
        .collect()
}

/// Runs a scenario to completion.
pub fn run(config: &ScenarioConfig) -> Result<RunArtifact> {
    let mut sim = Simulation::new(config.clone())?;
    while !sim.is_done() {
        sim.step()?;
    }
    Ok(sim.finish())
}
