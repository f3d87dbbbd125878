//! Closed-form client energy estimates, the per-round budget ledger and RL
//! training cost accounting in MACs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fl::{ClientProfile, DeviceParams};
use crate::nn::DenseNet;
use crate::selection::PolicyKind;

/// A training pass costs one forward and roughly two forward-sized backward
/// passes.
pub const TRAINING_PASS_FACTOR: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyParams {
    /// Channel bandwidth in Hz.
    pub bandwidth: f64,
    /// Background noise power in W.
    pub noise: f64,
    /// Local epochs per participating round.
    pub epochs: usize,
    /// Converts sample counts to training data size in bits.
    pub bits_per_sample: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            bandwidth: 1e6,
            noise: 1e-10,
            epochs: 5,
            bits_per_sample: 6272.0,
        }
    }
}

/// Energy to upload one model: `P * s / (B * log2(1 + h P / sigma))`.
pub fn comm_energy(device: &DeviceParams, params: &EnergyParams) -> Result<f64> {
    let snr = device.channel_gain * device.tx_power / params.noise;
    if !(snr > 0.0 && snr.is_finite()) || !(params.bandwidth > 0.0) {
        return Err(Error::Config(format!(
            "uplink needs positive SNR and bandwidth (snr {snr}, bandwidth {})",
            params.bandwidth
        )));
    }
    let rate = params.bandwidth * (1.0 + snr).log2();
    Ok(device.tx_power * device.model_bits / rate)
}

/// Energy of one local epoch: `(alpha/2) * eta * bits * f^2`.
pub fn comp_energy(device: &DeviceParams, data_bits: f64) -> f64 {
    device.capacitance_half * device.cycles_per_bit * data_bits * device.cpu_freq * device.cpu_freq
}

pub fn total_energy(client: &ClientProfile, params: &EnergyParams) -> Result<f64> {
    combine(
        comm_energy(&client.device, params)?,
        comp_energy(&client.device, client.data_bits),
        params.epochs,
    )
}

/// `comm + epochs * comp`.
pub fn combine(comm: f64, comp: f64, epochs: usize) -> Result<f64> {
    if epochs == 0 {
        return Err(Error::Config("energy estimate needs epochs >= 1".into()));
    }
    Ok(comm + epochs as f64 * comp)
}

/// Per-round budget as a fraction of what every client training once would cost.
pub fn make_budget<'a, I>(clients: I, params: &EnergyParams, fraction: f64) -> Result<f64>
where
    I: IntoIterator<Item = &'a ClientProfile>,
{
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("budget fraction must lie in (0, 1], got {fraction}")));
    }
    let mut total = 0.0;
    for c in clients {
        total += total_energy(c, params)?;
    }
    Ok(fraction * total)
}

/// Forward MACs of a set of networks trained on `buffer_size` samples for
/// `epochs` passes, scaled by [`TRAINING_PASS_FACTOR`].
pub fn training_macs(networks: &[&DenseNet], buffer_size: usize, epochs: usize) -> u64 {
    networks.iter().map(|n| n.macs_count()).sum::<u64>()
        * buffer_size as u64
        * epochs as u64
        * TRAINING_PASS_FACTOR
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetLedger {
    budget: f64,
    spent: f64,
    cumulative_fl: f64,
    rl_macs: BTreeMap<PolicyKind, u64>,
}

impl BudgetLedger {
    pub fn new(budget: f64) -> Self {
        Self {
            budget: budget.max(0.0),
            spent: 0.0,
            cumulative_fl: 0.0,
            rl_macs: BTreeMap::new(),
        }
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    pub fn cumulative_fl(&self) -> f64 {
        self.cumulative_fl
    }

    pub fn start_round(&mut self) {
        self.spent = 0.0;
    }

    /// Books one participant's energy. Charges that would overrun the budget
    /// are refused and leave the ledger untouched.
    pub fn charge(&mut self, joules: f64) -> Result<()> {
        if !(joules >= 0.0) {
            return Err(Error::Config(format!("energy charge must be non-negative, got {joules}")));
        }
        if self.spent + joules > self.budget {
            return Err(Error::Config(format!(
                "charge of {joules} J would exceed the round budget ({} of {} J spent)",
                self.spent, self.budget
            )));
        }
        self.spent += joules;
        self.cumulative_fl += joules;
        Ok(())
    }

    /// Energy spent outside the budget (the bootstrap round).
    pub fn record_unbudgeted(&mut self, joules: f64) {
        self.cumulative_fl += joules.max(0.0);
    }

    pub fn record_rl_macs(
        &mut self,
        kind: PolicyKind,
        networks_trained: &[&DenseNet],
        buffer_size: usize,
        epochs: usize,
    ) -> u64 {
        let added = training_macs(networks_trained, buffer_size, epochs);
        *self.rl_macs.entry(kind).or_insert(0) += added;
        added
    }

    pub fn rl_macs(&self, kind: PolicyKind) -> u64 {
        self.rl_macs.get(&kind).copied().unwrap_or(0)
    }

    pub fn total_rl_macs(&self) -> u64 {
        self.rl_macs.values().sum()
    }
}
