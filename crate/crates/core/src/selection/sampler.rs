//! Budget-aware samplers.
//!
//! Every sampler repeatedly picks one not-yet-considered candidate and admits
//! it when its energy still fits into the remaining budget. A pick that does
//! not fit is dropped for the round without consuming budget. The round ends
//! once no remaining candidate fits. Candidates are addressed by position;
//! callers order them by ascending client id so that "lowest position" breaks
//! ties by lowest id.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PickMode {
    /// Highest remaining probability or score.
    Greedy,
    /// Uniformly random remaining candidate.
    Random,
    /// Drawn with probability proportional to its suggestion.
    Weighted,
}

impl PickMode {
    pub fn name(self) -> &'static str {
        match self {
            PickMode::Greedy => "greedy",
            PickMode::Random => "random",
            PickMode::Weighted => "weighted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PickRecord {
    pub position: usize,
    pub mode: PickMode,
    pub admitted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    /// Admitted positions in pick order.
    pub chosen: Vec<usize>,
    /// Energy share per candidate: its round energy if chosen, else 0.
    pub shares: Vec<f64>,
    pub total_cost: f64,
    /// The per-candidate suggestions or scores the sampler worked from.
    pub suggestions: Vec<f64>,
    pub trace: Vec<PickRecord>,
}

impl SelectionOutcome {
    pub fn is_chosen(&self, position: usize) -> bool {
        self.shares[position] > 0.0
    }
}

fn budgeted_draw<F>(energies: &[f64], budget: f64, suggestions: Vec<f64>, mut pick: F) -> SelectionOutcome
where
    F: FnMut(&[usize]) -> (usize, PickMode),
{
    let mut remaining: Vec<usize> = (0..energies.len()).collect();
    let mut outcome = SelectionOutcome {
        chosen: Vec::new(),
        shares: vec![0.0; energies.len()],
        total_cost: 0.0,
        suggestions,
        trace: Vec::new(),
    };
    let mut cost = 0.0;
    while remaining.iter().any(|&i| cost + energies[i] <= budget) {
        let (c, mode) = pick(&remaining);
        remaining.retain(|&i| i != c);
        let admitted = cost + energies[c] <= budget;
        if admitted {
            cost += energies[c];
            outcome.chosen.push(c);
            outcome.shares[c] = energies[c];
        }
        outcome.trace.push(PickRecord {
            position: c,
            mode,
            admitted,
        });
    }
    outcome.total_cost = cost;
    outcome
}

/// Highest value among `remaining`, lowest position on ties.
fn argmax_remaining(values: &[f64], remaining: &[usize]) -> usize {
    let mut best = remaining[0];
    for &i in &remaining[1..] {
        if values[i].total_cmp(&values[best]).is_gt() {
            best = i;
        }
    }
    best
}

fn uniform_remaining<R: Rng>(remaining: &[usize], rng: &mut R) -> usize {
    remaining[rng.random_range(0..remaining.len())]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub decay: f64,
    pub floor: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            decay: 0.9,
            floor: 0.05,
        }
    }
}

/// `max(epsilon * decay, floor)`.
pub fn next_epsilon(epsilon: f64, schedule: &EpsilonSchedule) -> f64 {
    (epsilon * schedule.decay).max(schedule.floor)
}

/// Epsilon-greedy budget sampler: each pick is a uniformly random remaining
/// candidate with probability `epsilon`, otherwise the remaining candidate
/// with the highest suggestion. Returns the outcome and the decayed epsilon.
pub fn sample_epsilon_greedy<R: Rng>(
    probs: &[f64],
    energies: &[f64],
    budget: f64,
    epsilon: f64,
    schedule: &EpsilonSchedule,
    rng: &mut R,
) -> (SelectionOutcome, f64) {
    debug_assert_eq!(probs.len(), energies.len());
    let outcome = budgeted_draw(energies, budget, probs.to_vec(), |remaining| {
        let e: f64 = rng.random();
        if e < epsilon {
            (uniform_remaining(remaining, rng), PickMode::Random)
        } else {
            (argmax_remaining(probs, remaining), PickMode::Greedy)
        }
    });
    (outcome, next_epsilon(epsilon, schedule))
}

/// Weighted sampling without replacement, proportional to `probs` among the
/// remaining candidates. Falls back to uniform when the remaining weights sum
/// to zero.
pub fn sample_stochastic<R: Rng>(probs: &[f64], energies: &[f64], budget: f64, rng: &mut R) -> SelectionOutcome {
    debug_assert_eq!(probs.len(), energies.len());
    budgeted_draw(energies, budget, probs.to_vec(), |remaining| {
        let weight = |i: usize| if probs[i] > 0.0 && probs[i].is_finite() { probs[i] } else { 0.0 };
        let total: f64 = remaining.iter().map(|&i| weight(i)).sum();
        if !(total > 0.0) {
            return (uniform_remaining(remaining, rng), PickMode::Random);
        }
        let mut target = rng.random::<f64>() * total;
        let mut last_positive = remaining[0];
        for &i in remaining {
            let w = weight(i);
            if w > 0.0 {
                last_positive = i;
                if target < w {
                    return (i, PickMode::Weighted);
                }
                target -= w;
            }
        }
        (last_positive, PickMode::Weighted)
    })
}

/// Uniform random picks until the budget is exhausted.
pub fn selector_random<R: Rng>(energies: &[f64], budget: f64, rng: &mut R) -> SelectionOutcome {
    budgeted_draw(energies, budget, vec![0.0; energies.len()], |remaining| {
        (uniform_remaining(remaining, rng), PickMode::Random)
    })
}

/// Descending-score greedy with budget skipping; ties by lowest position.
pub fn select_by_score(scores: &[f64], energies: &[f64], budget: f64) -> SelectionOutcome {
    debug_assert_eq!(scores.len(), energies.len());
    budgeted_draw(energies, budget, scores.to_vec(), |remaining| {
        (argmax_remaining(scores, remaining), PickMode::Greedy)
    })
}

/// Highest last reported local loss first.
pub fn selector_poc(last_losses: &[f64], energies: &[f64], budget: f64) -> SelectionOutcome {
    select_by_score(last_losses, energies, budget)
}

/// Lowest accuracy first.
pub fn selector_poca(local_accs: &[f64], energies: &[f64], budget: f64) -> SelectionOutcome {
    let mut outcome = select_by_score(&local_accs.iter().map(|a| -a).collect::<Vec<_>>(), energies, budget);
    outcome.suggestions = local_accs.to_vec();
    outcome
}
