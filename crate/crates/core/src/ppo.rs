//! PPO learning core shared by every RL selector: rollout buffer, GAE,
//! clipped surrogate and value regression.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::io::{read_adam_from, read_net_from, write_adam, LineReader};
use crate::nn::{write_net, Activation, Adam, AdamConfig, DenseNet, GradientTape, Head};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    /// Discount factor.
    pub gamma: f64,
    /// GAE bias-variance parameter.
    pub mu: f64,
    pub clip: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Transitions collected before an update.
    pub batch: usize,
    pub hidden: usize,
    pub entropy_coef: f64,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            mu: 0.8,
            clip: 0.2,
            lr: 0.001,
            epochs: 8,
            batch: 2,
            hidden: 128,
            entropy_coef: 0.0,
            normalize_advantages: false,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma > 0.0
            && self.gamma <= 1.0
            && (0.0..=1.0).contains(&self.mu)
            && self.clip > 0.0
            && self.lr > 0.0
            && self.epochs >= 1
            && self.batch >= 1
            && self.hidden >= 1
            && self.entropy_coef >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid PPO configuration: {self:?}")))
        }
    }
}

/// One agent step. `action` lists the chosen output indices of the actor's
/// softmax; its log-probability is the sum of their log-probabilities. A
/// per-client agent uses a single index (1 = participate, 0 = abstain); the
/// single-network selectors store the set of chosen client positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<usize>,
    pub log_prob_old: f64,
    pub reward: f64,
    pub value_old: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    capacity: usize,
    transitions: Vec<Transition>,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            transitions: Vec::with_capacity(capacity),
        }
    }

    /// Appends a transition and reports whether the buffer is now full.
    pub fn push(&mut self, t: Transition) -> bool {
        debug_assert!(!self.is_full(), "push into a full buffer");
        self.transitions.push(t);
        self.is_full()
    }

    pub fn is_full(&self) -> bool {
        self.transitions.len() >= self.capacity
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    fn take(&mut self) -> Vec<Transition> {
        std::mem::take(&mut self.transitions)
    }
}

/// Generalized advantage estimates by backward recursion
/// `A_t = delta_t + gamma * mu * A_{t+1}`. `values` carries the bootstrap
/// value as its last entry.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, mu: f64) -> Result<Vec<f64>> {
    gae_with_dones(rewards, values, &vec![false; rewards.len()], gamma, mu)
}

/// As [`gae`]; a `done` step neither bootstraps nor propagates advantage.
pub fn gae_with_dones(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, mu: f64) -> Result<Vec<f64>> {
    if values.len() != rewards.len() + 1 {
        return Err(Error::Dimension {
            context: "gae values (rewards + bootstrap)",
            expected: rewards.len() + 1,
            actual: values.len(),
        });
    }
    if dones.len() != rewards.len() {
        return Err(Error::Dimension {
            context: "gae done flags",
            expected: rewards.len(),
            actual: dones.len(),
        });
    }
    let mut advantages = vec![0.0; rewards.len()];
    let mut next = 0.0;
    for t in (0..rewards.len()).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        next = delta + gamma * mu * live * next;
        advantages[t] = next;
    }
    Ok(advantages)
}

/// `min(r A, clip(r, 1-eps, 1+eps) A)`.
pub fn clipped_objective(ratio: f64, advantage: f64, clip: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
    (ratio * advantage).min(clipped * advantage)
}

/// Negated clipped objective, the quantity minimized.
pub fn clipped_policy_loss(ratio: f64, advantage: f64, clip: f64) -> f64 {
    -clipped_objective(ratio, advantage, clip)
}

/// Whether the unclipped branch is active, i.e. whether gradient flows
/// through the ratio.
fn ratio_gradient_active(ratio: f64, advantage: f64, clip: f64) -> bool {
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
    ratio * advantage <= clipped * advantage
}

/// Mean squared error between predicted values and returns.
pub fn value_loss(predicted: &[f64], returns: &[f64]) -> f64 {
    debug_assert_eq!(predicted.len(), returns.len());
    if predicted.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(returns).map(|(v, r)| (v - r).powi(2)).sum::<f64>() / predicted.len() as f64
}

pub fn log_prob(probs: &[f64], action: &[usize]) -> f64 {
    action.iter().map(|&i| probs[i].max(f64::MIN_POSITIVE).ln()).sum()
}

/// Actor, critic, their optimizers and the rollout buffer of one learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub actor: DenseNet,
    pub critic: DenseNet,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub buffer: RolloutBuffer,
}

/// Scale of the actor's output layer at init so the policy starts near uniform.
const ACTOR_OUTPUT_GAIN: f64 = 0.01;

impl Agent {
    pub fn new(state_dim: usize, action_dim: usize, config: &PpoConfig, seed: u64) -> Result<Self> {
        let mut actor = DenseNet::seeded(
            &[state_dim, config.hidden, action_dim],
            Activation::Tanh,
            Head::Softmax,
            seed,
        )?;
        actor.scale_output_layer(ACTOR_OUTPUT_GAIN);
        let critic = DenseNet::seeded(
            &[state_dim, config.hidden, 1],
            Activation::Tanh,
            Head::Identity,
            seed ^ 0x9e37_79b9_7f4a_7c15,
        )?;
        Ok(Self::from_networks(actor, critic, config))
    }

    pub fn from_networks(actor: DenseNet, critic: DenseNet, config: &PpoConfig) -> Self {
        let opt = AdamConfig::with_lr(config.lr);
        Self {
            actor_opt: Adam::for_net(&actor, opt),
            critic_opt: Adam::for_net(&critic, opt),
            actor,
            critic,
            buffer: RolloutBuffer::new(config.batch),
        }
    }

    pub fn policy(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.actor.predict(state)
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        Ok(self.critic.predict(state)?[0])
    }

    /// Builds a transition for `action` taken in `state`, evaluating the
    /// current networks for the stored log-probability and value.
    pub fn transition(&self, state: Vec<f64>, action: Vec<usize>, reward: f64) -> Result<Transition> {
        let probs = self.policy(&state)?;
        if let Some(&bad) = action.iter().find(|&&a| a >= probs.len()) {
            return Err(Error::Dimension {
                context: "action index",
                expected: probs.len(),
                actual: bad,
            });
        }
        let value_old = self.value(&state)?;
        Ok(Transition {
            log_prob_old: log_prob(&probs, &action),
            value_old,
            state,
            action,
            reward,
            done: false,
        })
    }

    /// Forward MACs of actor plus critic.
    pub fn macs_count(&self) -> u64 {
        self.actor.macs_count() + self.critic.macs_count()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_checkpoint(&mut out)?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, config: &PpoConfig) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(&mut std::io::BufReader::new(file), config)
    }

    /// Networks and optimizer moments; the rollout buffer is not persisted.
    pub fn write_checkpoint<W: Write>(&self, out: &mut W) -> Result<()> {
        write_net(&self.actor, out)?;
        write_adam(&self.actor_opt, out)?;
        write_net(&self.critic, out)?;
        write_adam(&self.critic_opt, out)
    }

    pub fn read_checkpoint<R: BufRead>(input: &mut R, config: &PpoConfig) -> Result<Self> {
        let mut lines = LineReader::new(input);
        let actor = read_net_from(&mut lines)?;
        let actor_opt = read_adam_from(&mut lines)?;
        let critic = read_net_from(&mut lines)?;
        let critic_opt = read_adam_from(&mut lines)?;
        if actor_opt.m.len() != actor.param_count() || critic_opt.m.len() != critic.param_count() {
            return Err(Error::Config("checkpoint optimizer state does not match its network".into()));
        }
        Ok(Self {
            actor,
            critic,
            actor_opt,
            critic_opt,
            buffer: RolloutBuffer::new(config.batch),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpoStats {
    pub mean_ratio: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub epochs: usize,
}

/// Losses and parameter gradients for one pass over `batch`.
#[derive(Debug, Clone)]
pub struct SurrogateEval {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub mean_ratio: f64,
    pub actor_grad: GradientTape,
    pub critic_grad: GradientTape,
}

/// Evaluates the clipped surrogate (plus optional entropy bonus) and the value
/// loss on `batch`, with gradients for both networks.
pub fn surrogate_gradients(
    actor: &mut DenseNet,
    critic: &mut DenseNet,
    batch: &[Transition],
    advantages: &[f64],
    returns: &[f64],
    config: &PpoConfig,
) -> Result<SurrogateEval> {
    let n = batch.len() as f64;
    let mut actor_grad = GradientTape::zeros(actor.param_count());
    let mut critic_grad = GradientTape::zeros(critic.param_count());
    let (mut policy_loss, mut v_loss, mut ratio_sum) = (0.0, 0.0, 0.0);
    for ((t, &adv), &ret) in batch.iter().zip(advantages).zip(returns) {
        let probs = actor.forward(&t.state)?;
        let ratio = (log_prob(&probs, &t.action) - t.log_prob_old).exp();
        ratio_sum += ratio;
        policy_loss += clipped_policy_loss(ratio, adv, config.clip) / n;

        // d(-obj)/dz = -(r A / n) * sum_{i in action} (e_i - p)
        let mut logit_grad = vec![0.0; probs.len()];
        if ratio_gradient_active(ratio, adv, config.clip) {
            let coef = -ratio * adv / n;
            for &a in &t.action {
                for (g, p) in logit_grad.iter_mut().zip(&probs) {
                    *g -= coef * p;
                }
                logit_grad[a] += coef;
            }
        }
        if config.entropy_coef > 0.0 {
            let entropy: f64 = -probs.iter().map(|p| p * p.max(f64::MIN_POSITIVE).ln()).sum::<f64>();
            policy_loss -= config.entropy_coef * entropy / n;
            for (g, p) in logit_grad.iter_mut().zip(&probs) {
                *g += config.entropy_coef * p * (p.max(f64::MIN_POSITIVE).ln() + entropy) / n;
            }
        }
        actor.accumulate_backward_logits(&logit_grad, &mut actor_grad)?;

        let v = critic.forward(&t.state)?[0];
        v_loss += (v - ret).powi(2) / n;
        critic.accumulate_backward(&[2.0 * (v - ret) / n], &mut critic_grad)?;
    }
    Ok(SurrogateEval {
        policy_loss,
        value_loss: v_loss,
        mean_ratio: ratio_sum / n,
        actor_grad,
        critic_grad,
    })
}

fn dump(batch: &[Transition]) -> String {
    batch
        .iter()
        .map(|t| {
            format!(
                "[state {:?} action {:?} logp {} reward {} value {}]",
                t.state, t.action, t.log_prob_old, t.reward, t.value_old
            )
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Runs `config.epochs` full-batch PPO passes over the agent's buffer and
/// clears it. Advantages come from the values stored at collection time plus
/// `bootstrap_value` for the state following the last transition.
pub fn ppo_update(agent: &mut Agent, bootstrap_value: f64, config: &PpoConfig) -> Result<PpoStats> {
    if !agent.buffer.is_full() {
        return Err(Error::Config(format!(
            "ppo update needs a full buffer ({} of {})",
            agent.buffer.len(),
            agent.buffer.capacity()
        )));
    }
    let batch = agent.buffer.take();
    let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
    let dones: Vec<bool> = batch.iter().map(|t| t.done).collect();
    let values: Vec<f64> = batch
        .iter()
        .map(|t| t.value_old)
        .chain(std::iter::once(bootstrap_value))
        .collect();
    let mut advantages = gae_with_dones(&rewards, &values, &dones, config.gamma, config.mu)?;
    let returns: Vec<f64> = advantages.iter().zip(&values).map(|(a, v)| a + v).collect();
    if config.normalize_advantages && advantages.len() > 1 {
        let mean = advantages.iter().sum::<f64>() / advantages.len() as f64;
        let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / advantages.len() as f64;
        let std = var.sqrt().max(1e-8);
        advantages.iter_mut().for_each(|a| *a = (*a - mean) / std);
    }

    let mut stats = PpoStats::default();
    for epoch in 0..config.epochs {
        let eval = surrogate_gradients(&mut agent.actor, &mut agent.critic, &batch, &advantages, &returns, config)?;
        if !eval.policy_loss.is_finite() || !eval.value_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "ppo loss in epoch {epoch} (policy {}, value {}); buffer: {}",
                eval.policy_loss,
                eval.value_loss,
                dump(&batch)
            )));
        }
        agent.actor_opt.step(&mut agent.actor, &eval.actor_grad)?;
        agent.critic_opt.step(&mut agent.critic, &eval.critic_grad)?;
        stats = PpoStats {
            mean_ratio: eval.mean_ratio,
            policy_loss: eval.policy_loss,
            value_loss: eval.value_loss,
            epochs: epoch + 1,
        };
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gae_single_step() {
        assert_eq!(gae(&[1.0], &[0.5, 0.0], 0.9, 0.8).unwrap(), vec![0.5]);
    }

    #[test]
    fn gae_two_steps_by_hand() {
        let a = gae(&[1.0, 1.0], &[0.5, 0.4, 0.0], 0.9, 0.8).unwrap();
        assert!((a[1] - 0.6).abs() < 1e-15);
        assert!((a[0] - 1.292).abs() < 1e-12);
    }

    #[test]
    fn gae_mu_zero_is_td_residual() {
        let rewards = [0.3, -1.0, 2.0];
        let values = [0.1, 0.2, -0.4, 0.9];
        let a = gae(&rewards, &values, 0.9, 0.0).unwrap();
        for t in 0..3 {
            assert_eq!(a[t], rewards[t] + 0.9 * values[t + 1] - values[t]);
        }
    }

    #[test]
    fn gae_length_check() {
        assert!(gae(&[1.0], &[0.0], 0.9, 0.8).is_err());
    }

    #[test]
    fn gae_done_cuts_bootstrap() {
        let a = gae_with_dones(&[1.0, 1.0], &[0.0, 0.0, 5.0], &[false, true], 0.9, 0.8).unwrap();
        assert!((a[0] - 1.72).abs() < 1e-12);
        assert_eq!(a[1], 1.0);
    }

    proptest! {
        #[test]
        fn gae_recursion_equals_double_sum(
            rewards in prop::collection::vec(-5.0f64..5.0, 1..=8),
            values in prop::collection::vec(-5.0f64..5.0, 9),
            gamma in 0.01f64..=1.0,
            mu in 0.0f64..=1.0,
        ) {
            let values = &values[..rewards.len() + 1];
            let fast = gae(&rewards, values, gamma, mu).unwrap();
            let n = rewards.len();
            for t in 0..n {
                let direct: f64 = (0..n - t)
                    .map(|l| {
                        let delta = rewards[t + l] + gamma * values[t + l + 1] - values[t + l];
                        (gamma * mu).powi(l as i32) * delta
                    })
                    .sum();
                prop_assert!((fast[t] - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
            }
        }

        #[test]
        fn clipped_objective_is_bounded(r in 0.01f64..5.0, a in -10.0f64..10.0, eps in 0.01f64..0.9) {
            let obj = clipped_objective(r, a, eps);
            prop_assert!(obj.abs() <= (a.abs() * (1.0 + eps)).max(a.abs() * r) + 1e-12);
        }
    }

    #[test]
    fn clipped_examples() {
        assert_eq!(clipped_objective(1.0, 3.5, 0.2), 3.5);
        assert!((clipped_objective(1.5, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert!((clipped_objective(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);
        assert!((clipped_policy_loss(1.5, 1.0, 0.2) + 1.2).abs() < 1e-15);
    }

    #[test]
    fn value_loss_examples() {
        assert_eq!(value_loss(&[2.0], &[2.0]), 0.0);
        assert_eq!(value_loss(&[1.0], &[3.0]), 4.0);
        assert_eq!(value_loss(&[1.0, 2.0], &[3.0, 2.0]), 2.0);
    }

    #[test]
    fn buffer_fills_and_clears() {
        let config = PpoConfig { batch: 2, hidden: 4, ..PpoConfig::default() };
        let mut agent = Agent::new(5, 2, &config, 3).unwrap();
        let s = vec![0.1; 5];
        assert!(!agent.buffer.push(agent.transition(s.clone(), vec![1], 1.0).unwrap()));
        assert!(ppo_update(&mut agent, 0.0, &config).is_err());
        assert!(agent.buffer.push(agent.transition(s, vec![1], -1.0).unwrap()));
        ppo_update(&mut agent, 0.0, &config).unwrap();
        assert!(agent.buffer.is_empty());
    }

    #[test]
    fn fresh_actor_is_near_uniform() {
        let agent = Agent::new(5, 2, &PpoConfig::default(), 17).unwrap();
        let p = agent.policy(&[0.5, 0.3, 0.6, 0.2, 1.0]).unwrap();
        assert!((p[1] - 0.5).abs() < 0.02, "{p:?}");
    }

    #[test]
    fn zero_advantage_leaves_actor_unchanged() {
        let config = PpoConfig { batch: 2, hidden: 8, ..PpoConfig::default() };
        let mut agent = Agent::new(5, 2, &config, 5).unwrap();
        let before = agent.actor.clone();
        let s0 = vec![0.2, 0.4, 0.1, 0.3, 1.0];
        let s1 = vec![0.3, 0.4, 0.2, 0.3, 0.0];
        // choose rewards so every TD residual is zero: r_t = V(s_t) - gamma V(s_{t+1})
        let (v0, v1, vb) = (agent.value(&s0).unwrap(), agent.value(&s1).unwrap(), 0.25);
        let t0 = agent.transition(s0, vec![1], v0 - 0.9 * v1).unwrap();
        let t1 = agent.transition(s1, vec![1], v1 - 0.9 * vb).unwrap();
        agent.buffer.push(t0);
        agent.buffer.push(t1);
        ppo_update(&mut agent, vb, &config).unwrap();
        for (a, b) in agent.actor.params().iter().zip(before.params()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn positive_advantage_raises_action_probability() {
        let config = PpoConfig { batch: 1, hidden: 16, ..PpoConfig::default() };
        for seed in 0..100u64 {
            let mut agent = Agent::new(5, 2, &config, seed).unwrap();
            let s: Vec<f64> = (0..5).map(|i| ((seed + i) % 7) as f64 / 7.0).collect();
            let action = (seed % 2) as usize;
            let before = agent.policy(&s).unwrap()[action];
            let value = agent.value(&s).unwrap();
            // large reward keeps the advantage positive for any initial critic
            let t = agent.transition(s.clone(), vec![action], 10.0 + value.abs()).unwrap();
            agent.buffer.push(t);
            ppo_update(&mut agent, 0.0, &config).unwrap();
            let after = agent.policy(&s).unwrap()[action];
            assert!(after > before, "seed {seed}: {before} -> {after}");
            let sum: f64 = agent.policy(&s).unwrap().iter().sum();
            assert!((sum - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn surrogate_gradients_match_finite_differences() {
        let config = PpoConfig { hidden: 4, clip: 0.2, entropy_coef: 0.05, ..PpoConfig::default() };
        let agent = Agent::new(3, 3, &config, 41).unwrap();
        let mut actor = agent.actor.clone();
        // push the policy away from the stored log-probs so ratios differ from 1
        let shifted: Vec<f64> = actor.params().iter().enumerate().map(|(i, p)| p + 0.05 * ((i % 5) as f64 - 2.0)).collect();
        actor.set_params(&shifted).unwrap();
        let mut critic = agent.critic.clone();
        let batch = vec![
            agent.transition(vec![0.1, -0.3, 0.8], vec![0], 1.0).unwrap(),
            agent.transition(vec![0.5, 0.2, -0.1], vec![2, 1], -0.5).unwrap(),
        ];
        let adv = [0.7, -1.3];
        let ret = [1.1, -0.2];
        let eval = surrogate_gradients(&mut actor, &mut critic, &batch, &adv, &ret, &config).unwrap();

        let total = |a: &DenseNet, c: &DenseNet| -> f64 {
            let (mut a, mut c) = (a.clone(), c.clone());
            let e = surrogate_gradients(&mut a, &mut c, &batch, &adv, &ret, &config).unwrap();
            e.policy_loss + e.value_loss
        };
        let h = 1e-6;
        for i in 0..actor.param_count() {
            let mut up = actor.clone();
            let mut down = actor.clone();
            up.params_mut()[i] += h;
            down.params_mut()[i] -= h;
            let numeric = (total(&up, &critic) - total(&down, &critic)) / (2.0 * h);
            let analytic = eval.actor_grad.as_slice()[i];
            assert!((numeric - analytic).abs() <= 1e-4 * analytic.abs().max(1e-3), "actor {i}: {analytic} vs {numeric}");
        }
        for i in 0..critic.param_count() {
            let mut up = critic.clone();
            let mut down = critic.clone();
            up.params_mut()[i] += h;
            down.params_mut()[i] -= h;
            let numeric = (total(&actor, &up) - total(&actor, &down)) / (2.0 * h);
            let analytic = eval.critic_grad.as_slice()[i];
            assert!((numeric - analytic).abs() <= 1e-4 * analytic.abs().max(1e-3), "critic {i}: {analytic} vs {numeric}");
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let config = PpoConfig { hidden: 6, batch: 1, ..PpoConfig::default() };
        let mut agent = Agent::new(5, 2, &config, 8).unwrap();
        let t = agent.transition(vec![0.5; 5], vec![1], 1.0).unwrap();
        agent.buffer.push(t);
        ppo_update(&mut agent, 0.0, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.txt");
        agent.save(&path).unwrap();
        let back = Agent::load(&path, &config).unwrap();
        assert_eq!(back, agent);
    }
}
