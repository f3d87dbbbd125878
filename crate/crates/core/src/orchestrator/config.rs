use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{PartitionSpec, Skew, DEFAULT_SEPARATION};
use crate::energy::EnergyParams;
use crate::error::{Error, Result};
use crate::fl::{ClientId, DeviceParams};
use crate::ppo::PpoConfig;
use crate::selection::{EpsilonSchedule, PolicyKind};

/// A complete experiment description. Serialized as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub seed: u64,
    pub rounds: usize,
    pub policy: PolicyKind,
    pub budget_fraction: f64,
    #[serde(default)]
    pub target_accuracy: Option<f64>,
    pub data: DataConfig,
    pub partition: PartitionConfig,
    /// Device tiers in id order: the first `count` clients get the first tier,
    /// and so on.
    pub tiers: Vec<TierConfig>,
    #[serde(default)]
    pub device: DeviceParams,
    #[serde(default)]
    pub energy: EnergyParams,
    #[serde(default)]
    pub fl: FlConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub epsilon: EpsilonSchedule,
    #[serde(default)]
    pub churn: Vec<ChurnEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataConfig {
    /// Gaussian blobs. `per_class` defaults to the total number of samples
    /// the partition asks for, which can never run short.
    Synthetic {
        classes: usize,
        dim: usize,
        #[serde(default)]
        per_class: Option<usize>,
        #[serde(default = "default_separation")]
        separation: f64,
    },
    /// Headerless `label,feature,...` rows.
    Csv {
        path: PathBuf,
        #[serde(default)]
        classes: Option<usize>,
    },
}

fn default_separation() -> f64 {
    DEFAULT_SEPARATION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub train_per_client: usize,
    pub test_per_client: usize,
    pub skew: Skew,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierConfig {
    pub name: String,
    pub count: usize,
    /// CPU frequency in Hz; other device constants come from `[device]`.
    pub cpu_freq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlConfig {
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub lr: f64,
    /// Local epochs of the bootstrap round and of joining clients.
    pub bootstrap_epochs: usize,
}

impl Default for FlConfig {
    fn default() -> Self {
        Self {
            hidden: vec![16],
            batch_size: 32,
            lr: 0.1,
            bootstrap_epochs: 1,
        }
    }
}

/// Membership change applied at the start of `round`. Joining ids must be
/// roster clients that are not active at that point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChurnEvent {
    pub round: usize,
    #[serde(default)]
    pub join: Vec<u32>,
    #[serde(default)]
    pub leave: Vec<u32>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file. A relative CSV data path is resolved against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let DataConfig::Csv { path: data, .. } = &mut config.data {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.policy.name().to_string())
    }

    pub fn roster_size(&self) -> usize {
        self.tiers.iter().map(|t| t.count).sum()
    }

    pub fn tier_of(&self, id: ClientId) -> Option<&TierConfig> {
        let mut start = 0usize;
        for tier in &self.tiers {
            if (id.0 as usize) < start + tier.count {
                return Some(tier);
            }
            start += tier.count;
        }
        None
    }

    pub fn device_of(&self, id: ClientId) -> Option<DeviceParams> {
        self.tier_of(id).map(|t| DeviceParams {
            cpu_freq: t.cpu_freq,
            ..self.device
        })
    }

    /// Clients active before the first round: the roster minus every client
    /// that joins later.
    pub fn initial_population(&self) -> Vec<ClientId> {
        let joiners: BTreeSet<u32> = self.churn.iter().flat_map(|e| e.join.iter().copied()).collect();
        (0..self.roster_size() as u32)
            .filter(|id| !joiners.contains(id))
            .map(ClientId)
            .collect()
    }

    pub fn partition_spec(&self) -> PartitionSpec {
        PartitionSpec {
            clients: self.roster_size(),
            train_per_client: self.partition.train_per_client,
            test_per_client: self.partition.test_per_client,
            size_overrides: Default::default(),
            skew: self.partition.skew.clone(),
            seed: self.seed,
        }
    }

    /// Local training settings of a regular round.
    pub fn local_train(&self) -> crate::fl::LocalTrainConfig {
        crate::fl::LocalTrainConfig {
            epochs: self.energy.epochs,
            batch_size: self.fl.batch_size,
            lr: self.fl.lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.rounds < 1 {
            return fail("rounds must be at least 1".into());
        }
        if !(self.budget_fraction > 0.0 && self.budget_fraction <= 1.0) {
            return fail(format!("budget_fraction must lie in (0, 1], got {}", self.budget_fraction));
        }
        if let Some(t) = self.target_accuracy {
            if !(0.0..=1.0).contains(&t) {
                return fail(format!("target_accuracy must lie in [0, 1], got {t}"));
            }
        }
        if self.tiers.is_empty() || self.roster_size() == 0 {
            return fail("at least one client tier with count >= 1 is required".into());
        }
        if let Some(t) = self.tiers.iter().find(|t| !(t.cpu_freq > 0.0)) {
            return fail(format!("tier {} needs a positive cpu_freq", t.name));
        }
        if self.partition.train_per_client == 0 {
            return fail("train_per_client must be at least 1".into());
        }
        if self.energy.epochs == 0 || self.fl.bootstrap_epochs == 0 || self.fl.batch_size == 0 {
            return fail("epochs, bootstrap_epochs and batch_size must be at least 1".into());
        }
        if !(self.fl.lr > 0.0) {
            return fail(format!("fl.lr must be positive, got {}", self.fl.lr));
        }
        let s = &self.epsilon;
        if !(s.floor > 0.0 && s.floor <= s.start && s.start <= 1.0 && s.decay > 0.0 && s.decay <= 1.0) {
            return fail(format!("invalid epsilon schedule {s:?}"));
        }
        self.ppo.validate()?;
        self.validate_churn()
    }

    fn validate_churn(&self) -> Result<()> {
        let roster = self.roster_size() as u32;
        let mut events: Vec<&ChurnEvent> = self.churn.iter().collect();
        events.sort_by_key(|e| e.round);
        let mut active: BTreeSet<u32> = self.initial_population().iter().map(|c| c.0).collect();
        let mut joined_once = BTreeSet::new();
        for e in events {
            if e.round < 1 || e.round > self.rounds {
                return Err(Error::Config(format!("churn round {} outside 1..={}", e.round, self.rounds)));
            }
            for &id in &e.join {
                if id >= roster {
                    return Err(Error::Config(format!("joining client {id} is not in the roster of {roster}")));
                }
                if !joined_once.insert(id) || !active.insert(id) {
                    return Err(Error::Config(format!("client {id} joins twice or is already active")));
                }
            }
            for &id in &e.leave {
                if !active.remove(&id) {
                    return Err(Error::UnknownClient(id));
                }
            }
            if active.is_empty() {
                return Err(Error::Config(format!("churn at round {} leaves no clients", e.round)));
            }
        }
        Ok(())
    }
}
