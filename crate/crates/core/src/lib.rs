//! Deterministic federated-learning simulator with budget-constrained client
//! selection.
//!
//! The crate is organized bottom-up:
//!
//! - [`nn`]: dense networks, manual backpropagation, Adam/SGD, parameter files
//! - [`data`]: synthetic blobs, non-IID partitioning, CSV loading
//! - [`fl`]: local training, FedAvg, evaluation
//! - [`energy`]: per-client energy estimates, budget ledger, RL MACs
//! - [`ppo`]: rollout buffer, GAE, clipped surrogate, PPO update
//! - [`selection`]: client states, team reward, samplers, RL and heuristic selectors
//! - [`orchestrator`]: scenario configs, the round loop, metrics and reports

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod energy;
pub mod error;
pub mod fl;
pub mod nn;
pub mod orchestrator;
pub mod ppo;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};
