use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::config::ScenarioConfig;
use super::metrics::{mean, std_dev, RunSummary};
use super::output::{fmt_f64, write_run};
use super::run::{run, RunArtifact};
use crate::data::Skew;
use crate::error::{Error, Result};

/// Runs per configuration when none is given.
pub const DEFAULT_SEEDS: usize = 5;

pub const COMPARE_HEADER: [&str; 15] = [
    "label",
    "policy",
    "runs",
    "mean_acc_mean",
    "mean_acc_std",
    "tail_acc_mean",
    "tail_acc_std",
    "post_churn_acc_mean",
    "post_churn_acc_std",
    "round_x_mean",
    "round_x_std",
    "round_x_hits",
    "rl_macs_mean",
    "fl_energy_mean_j",
    "budget_violations",
];

/// Statistics of one configuration over several seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub label: String,
    pub policy: String,
    pub runs: Vec<RunSummary>,
}

impl CompareRow {
    fn column(&self, f: impl Fn(&RunSummary) -> Option<f64>) -> Vec<f64> {
        self.runs.iter().filter_map(f).collect()
    }

    pub fn mean_acc(&self) -> Vec<f64> {
        self.column(|s| Some(s.mean_acc))
    }

    pub fn tail_acc(&self) -> Vec<f64> {
        self.column(|s| Some(s.tail_mean_acc))
    }

    pub fn post_churn_acc(&self) -> Vec<f64> {
        self.column(|s| s.post_churn_mean_acc)
    }

    /// Round-x of the runs that reached the target.
    pub fn round_x(&self) -> Vec<f64> {
        self.column(|s| s.round_x.map(|x| x as f64))
    }

    pub fn record(&self) -> Vec<String> {
        let opt = |xs: &[f64], f: fn(&[f64]) -> f64| if xs.is_empty() { String::new() } else { fmt_f64(f(xs)) };
        let rx = self.round_x();
        let post = self.post_churn_acc();
        vec![
            self.label.clone(),
            self.policy.clone(),
            self.runs.len().to_string(),
            fmt_f64(mean(&self.mean_acc())),
            fmt_f64(std_dev(&self.mean_acc())),
            fmt_f64(mean(&self.tail_acc())),
            fmt_f64(std_dev(&self.tail_acc())),
            opt(&post, mean),
            opt(&post, std_dev),
            opt(&rx, mean),
            opt(&rx, std_dev),
            rx.len().to_string(),
            fmt_f64(mean(&self.column(|s| Some(s.cumulative_rl_macs as f64)))),
            fmt_f64(mean(&self.column(|s| Some(s.cumulative_fl)))),
            self.runs.iter().map(|s| s.budget_violations).sum::<usize>().to_string(),
        ]
    }
}

/// Seeds `config.seed, config.seed + 1, ...`.
pub fn seeded(config: &ScenarioConfig, seeds: usize) -> Vec<ScenarioConfig> {
    (0..seeds as u64)
        .map(|k| ScenarioConfig {
            seed: config.seed.wrapping_add(k),
            ..config.clone()
        })
        .collect()
}

/// Runs each configuration over `seeds` seeds. When `out` is given, every
/// run is written to `out/runs/<index>-<label>/seed-<seed>` and the table to
/// `out/compare.csv` and `out/compare.txt`.
pub fn compare(configs: &[ScenarioConfig], seeds: usize, out: Option<&Path>) -> Result<Vec<CompareRow>> {
    if seeds == 0 {
        return Err(Error::Config("compare needs at least one seed".into()));
    }
    let mut rows = Vec::with_capacity(configs.len());
    for (i, config) in configs.iter().enumerate() {
        let artifacts: Vec<RunArtifact> = seeded(config, seeds).par_iter().map(run).collect::<Result<_>>()?;
        if let Some(out) = out {
            for a in &artifacts {
                let dir = out.join("runs").join(format!("{i:02}-{}", config.label())).join(format!("seed-{}", a.config.seed));
                write_run(dir, a)?;
            }
        }
        rows.push(CompareRow {
            label: config.label(),
            policy: config.policy.name().to_string(),
            runs: artifacts.iter().map(RunSummary::of).collect(),
        });
    }
    if let Some(out) = out {
        write_compare(out, &rows)?;
    }
    Ok(rows)
}

pub fn write_compare(out: &Path, rows: &[CompareRow]) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("compare.csv");
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
    w.write_record(COMPARE_HEADER)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let path = out.join("compare.txt");
    fs::write(&path, compare_text(rows)).map_err(|e| Error::io(&path, e))
}

pub fn compare_text(rows: &[CompareRow]) -> String {
    let mut t = String::new();
    let _ = writeln!(
        t,
        "{:<24} {:>4} {:>15} {:>15} {:>15} {:>10} {:>14}",
        "config", "runs", "mean acc", "tail acc", "round x", "x hits", "RL MACs"
    );
    for row in rows {
        let pm = |xs: &[f64]| {
            if xs.is_empty() {
                "-".to_string()
            } else {
                format!("{:.4}±{:.4}", mean(xs), std_dev(xs))
            }
        };
        let rx = row.round_x();
        let rx_text = if rx.is_empty() {
            "-".to_string()
        } else {
            format!("{:.1}±{:.1}", mean(&rx), std_dev(&rx))
        };
        let _ = writeln!(
            t,
            "{:<24} {:>4} {:>15} {:>15} {:>15} {:>10} {:>14.0}",
            row.label,
            row.runs.len(),
            pm(&row.mean_acc()),
            pm(&row.tail_acc()),
            rx_text,
            format!("{}/{}", rx.len(), row.runs.len()),
            mean(&row.column(|s| Some(s.cumulative_rl_macs as f64))),
        );
    }
    t
}

/// Parameters `sweep` can vary.
pub const SWEEP_PARAMS: [&str; 4] = ["budget_fraction", "dirichlet_alpha", "rounds", "epsilon_floor"];

/// Copies of `base` with `param` set to each value, labelled
/// `<label>@<param>=<value>`.
pub fn sweep_configs(base: &ScenarioConfig, param: &str, values: &[f64]) -> Result<Vec<ScenarioConfig>> {
    values
        .iter()
        .map(|&v| {
            let mut c = base.clone();
            match param {
                "budget_fraction" => c.budget_fraction = v,
                "dirichlet_alpha" => c.partition.skew = Skew::Dirichlet { alpha: v },
                "rounds" if v >= 1.0 && v.fract() == 0.0 => c.rounds = v as usize,
                "epsilon_floor" => c.epsilon.floor = v,
                _ => {
                    return Err(Error::Config(format!(
                        "cannot sweep {param} = {v}; supported parameters: {}",
                        SWEEP_PARAMS.join(", ")
                    )))
                }
            }
            c.name = Some(format!("{}@{param}={v}", base.label()));
            c.validate()?;
            Ok(c)
        })
        .collect()
}

pub fn sweep(base: &ScenarioConfig, param: &str, values: &[f64], seeds: usize, out: Option<&Path>) -> Result<Vec<CompareRow>> {
    compare(&sweep_configs(base, param, values)?, seeds, out)
}
