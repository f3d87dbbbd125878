//! Cost of the two device tiers against an 11% budget over 20 clients with
//! the default radio and device constants.

use fedsel::data::Dataset;
use fedsel::energy::{make_budget, total_energy, EnergyParams};
use fedsel::fl::{ClientId, ClientProfile, DeviceParams};

const CHEAP_HZ: f64 = 7e8;
const EXPENSIVE_HZ: f64 = 1.5e9;
const TRAIN_PER_CLIENT: usize = 120;

fn client(id: u32, cpu_freq: f64, params: &EnergyParams) -> ClientProfile {
    let train = Dataset::new(vec![vec![0.0; 2]; TRAIN_PER_CLIENT], vec![0; TRAIN_PER_CLIENT], 2).unwrap();
    let device = DeviceParams {
        cpu_freq,
        ..DeviceParams::default()
    };
    ClientProfile::new(ClientId(id), train, Dataset::empty(2), device, params.bits_per_sample).unwrap()
}

/// 8 cheap and 12 expensive clients.
fn population(params: &EnergyParams) -> Vec<ClientProfile> {
    (0..20).map(|i| client(i, if i < 8 { CHEAP_HZ } else { EXPENSIVE_HZ }, params)).collect()
}

fn fits(count: usize, energy: f64, budget: f64) -> bool {
    (0..count).fold(0.0, |acc, _| acc + energy) <= budget
}

#[test]
fn tier_costs_as_budget_shares() {
    let p = EnergyParams::default();
    let clients = population(&p);
    let budget = make_budget(&clients, &p, 0.11).unwrap();
    let cheap = total_energy(&clients[0], &p).unwrap();
    let expensive = total_energy(&clients[19], &p).unwrap();
    assert!((cheap / budget - 0.33).abs() <= 0.03, "cheap share {}", cheap / budget);
    assert!((expensive / budget - 0.56).abs() <= 0.03, "expensive share {}", expensive / budget);
    assert!(fits(3, cheap, budget) && !fits(4, cheap, budget));
    assert!(fits(1, expensive, budget) && !fits(2, expensive, budget));
    assert!(fits(1, cheap, budget - expensive));
}

#[test]
fn budget_scales_with_fraction() {
    let p = EnergyParams::default();
    let clients = population(&p);
    let full = make_budget(&clients, &p, 1.0).unwrap();
    let sum: f64 = clients.iter().map(|c| total_energy(c, &p).unwrap()).sum();
    assert!((full - sum).abs() <= 1e-12 * sum);
    let part = make_budget(&clients, &p, 0.11).unwrap();
    assert!((part - 0.11 * full).abs() <= 1e-12 * full);
    assert!(make_budget(&clients, &p, 0.0).is_err());
    assert!(make_budget(&clients, &p, 1.5).is_err());
}
