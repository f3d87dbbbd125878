use super::run::RunArtifact;

/// Width of the trailing window used by [`round_x`].
pub const ROUND_X_WINDOW: usize = 10;
/// Final rounds summarized by the tail statistics.
pub const TAIL_WINDOW: usize = 50;

/// Slack for summation roundoff, so a constant history at the target counts.
pub const ROUND_X_TOLERANCE: f64 = 1e-12;

/// First 1-based round whose trailing [`ROUND_X_WINDOW`]-round mean reaches
/// `target`.
pub fn round_x(history: &[f64], target: f64) -> Option<usize> {
    (ROUND_X_WINDOW..=history.len())
        .find(|&t| mean(&history[t - ROUND_X_WINDOW..t]) >= target - ROUND_X_TOLERANCE)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile (the "type 7" estimator).
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn iqr(xs: &[f64]) -> f64 {
    quantile(xs, 0.75) - quantile(xs, 0.25)
}

/// Trailing mean over `window` values ending at each index (shorter at the
/// start).
pub fn rolling_mean(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..xs.len()).map(|i| mean(&xs[(i + 1).saturating_sub(w)..=i])).collect()
}

/// The columns of `rounds.csv` needed to summarize a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRow {
    pub round: usize,
    pub budget: f64,
    pub spent: f64,
    pub cumulative_fl: f64,
    pub global_acc: f64,
    pub cumulative_rl_macs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub policy: String,
    pub seed: u64,
    pub rounds: usize,
    pub budget: f64,
    /// Mean global accuracy over rounds `1..=R`.
    pub mean_acc: f64,
    pub final_acc: f64,
    /// Mean and interquartile range over the final [`TAIL_WINDOW`] rounds.
    pub tail_mean_acc: f64,
    pub tail_iqr_acc: f64,
    /// Mean accuracy from the first churn round on.
    pub post_churn_mean_acc: Option<f64>,
    pub target_accuracy: Option<f64>,
    pub round_x: Option<usize>,
    pub cumulative_fl: f64,
    pub cumulative_rl_macs: u64,
    /// Rounds whose spending exceeded the budget. Always zero for a correct
    /// run; reported so that a recomputation from CSV can confirm it.
    pub budget_violations: usize,
}

impl RunSummary {
    /// `rows` must start with the bootstrap round 0.
    pub fn from_rows(
        label: &str,
        policy: &str,
        seed: u64,
        rows: &[RoundRow],
        first_churn: Option<usize>,
        target: Option<f64>,
    ) -> Self {
        let regular: Vec<&RoundRow> = rows.iter().filter(|r| r.round >= 1).collect();
        let acc: Vec<f64> = regular.iter().map(|r| r.global_acc).collect();
        let tail = &acc[acc.len().saturating_sub(TAIL_WINDOW)..];
        let post_churn = first_churn.map(|c| {
            let xs: Vec<f64> = regular.iter().filter(|r| r.round >= c).map(|r| r.global_acc).collect();
            mean(&xs)
        });
        let last = rows.last();
        Self {
            label: label.to_string(),
            policy: policy.to_string(),
            seed,
            rounds: regular.len(),
            budget: last.map_or(0.0, |r| r.budget),
            mean_acc: mean(&acc),
            final_acc: acc.last().copied().unwrap_or(f64::NAN),
            tail_mean_acc: mean(tail),
            tail_iqr_acc: iqr(tail),
            post_churn_mean_acc: post_churn,
            target_accuracy: target,
            round_x: target.and_then(|t| round_x(&acc, t)),
            cumulative_fl: last.map_or(0.0, |r| r.cumulative_fl),
            cumulative_rl_macs: last.map_or(0, |r| r.cumulative_rl_macs),
            budget_violations: regular.iter().filter(|r| r.spent > r.budget).count(),
        }
    }

    pub fn of(artifact: &RunArtifact) -> Self {
        let c = &artifact.config;
        Self::from_rows(
            &c.label(),
            c.policy.name(),
            c.seed,
            &rows_of(artifact),
            c.churn.iter().map(|e| e.round).min(),
            c.target_accuracy,
        )
    }
}

pub fn rows_of(artifact: &RunArtifact) -> Vec<RoundRow> {
    artifact
        .records
        .iter()
        .map(|r| RoundRow {
            round: r.round,
            budget: r.budget,
            spent: r.spent,
            cumulative_fl: r.cumulative_fl,
            global_acc: r.global_acc,
            cumulative_rl_macs: r.cumulative_rl_macs,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force_round_x(h: &[f64], target: f64) -> Option<usize> {
        for t in 1..=h.len() {
            if t >= 10 {
                let window: f64 = h[t - 10..t].iter().sum::<f64>() / 10.0;
                if window + 1e-12 >= target {
                    return Some(t);
                }
            }
        }
        None
    }

    #[test]
    fn round_x_examples() {
        assert_eq!(round_x(&[0.8; 30], 0.8), Some(10));
        assert_eq!(round_x(&[0.5; 30], 0.8), None);
        assert_eq!(round_x(&[0.9; 9], 0.8), None);
        let ramp: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        // windows end at t=10 (mean 0.45) and t=11 (mean 0.55)
        assert_eq!(round_x(&ramp, 0.5), Some(11));
        assert_eq!(round_x(&ramp, 0.5), brute_force_round_x(&ramp, 0.5));
    }

    proptest! {
        #[test]
        fn round_x_matches_window_scan(h in prop::collection::vec(0.0f64..1.0, 0..40), target in 0.0f64..1.0) {
            prop_assert_eq!(round_x(&h, target), brute_force_round_x(&h, target));
        }
    }

    #[test]
    fn statistics() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert!((std_dev(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(std_dev(&[7.0]), 0.0);
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 0.5), 2.5);
        assert_eq!(iqr(&[1.0, 2.0, 3.0, 4.0, 5.0]), 2.0);
        assert_eq!(rolling_mean(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn summary_from_rows() {
        let rows: Vec<RoundRow> = (0..=12)
            .map(|r| RoundRow {
                round: r,
                budget: 1.0,
                spent: if r == 3 { 1.5 } else { 0.5 },
                cumulative_fl: r as f64,
                global_acc: r as f64 / 12.0,
                cumulative_rl_macs: 10 * r as u64,
            })
            .collect();
        let s = RunSummary::from_rows("x", "random", 4, &rows, Some(11), Some(0.5));
        assert_eq!(s.rounds, 12);
        assert_eq!(s.final_acc, 1.0);
        assert!((s.mean_acc - 6.5 / 12.0).abs() < 1e-15);
        assert!((s.post_churn_mean_acc.unwrap() - 11.5 / 12.0).abs() < 1e-15);
        assert_eq!(s.round_x, Some(11));
        assert_eq!(s.cumulative_rl_macs, 120);
        assert_eq!(s.budget_violations, 1);
    }
}
