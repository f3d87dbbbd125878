use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::metrics::{RoundRow, RunSummary};
use super::run::RunArtifact;
use crate::error::{Error, Result};
use crate::fl::ClientId;

/// Bumped whenever a column is added, removed or reformatted.
pub const SCHEMA_VERSION: u32 = 1;

pub const ROUNDS_FILE: &str = "rounds.csv";
pub const CLIENTS_FILE: &str = "clients.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_TXT: &str = "summary.txt";
pub const MANIFEST_FILE: &str = "manifest.toml";

pub const ROUNDS_HEADER: [&str; 13] = [
    "round",
    "n_active",
    "chosen",
    "n_chosen",
    "budget_j",
    "spent_j",
    "cum_fl_j",
    "global_acc",
    "reward",
    "epsilon",
    "rl_macs",
    "cum_rl_macs",
    "updated",
];
pub const CLIENTS_HEADER: [&str; 5] = ["round", "client", "acc", "loss", "participated"];
pub const TRACE_HEADER: [&str; 7] = ["round", "step", "client", "mode", "energy_j", "suggestion", "admitted"];
pub const SUMMARY_HEADER: [&str; 16] = [
    "label",
    "policy",
    "seed",
    "rounds",
    "budget_j",
    "mean_acc",
    "final_acc",
    "tail_mean_acc",
    "tail_iqr_acc",
    "post_churn_mean_acc",
    "target_acc",
    "round_x",
    "cum_fl_j",
    "cum_rl_macs",
    "budget_violations",
    "warnings",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
    pub config: ScenarioConfig,
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn fmt_opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn join_ids(ids: &[ClientId]) -> String {
    ids.iter().map(|i| i.0.to_string()).collect::<Vec<_>>().join(";")
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn summary_record(s: &RunSummary, warnings: usize) -> Vec<String> {
    vec![
        s.label.clone(),
        s.policy.clone(),
        s.seed.to_string(),
        s.rounds.to_string(),
        fmt_f64(s.budget),
        fmt_f64(s.mean_acc),
        fmt_f64(s.final_acc),
        fmt_f64(s.tail_mean_acc),
        fmt_f64(s.tail_iqr_acc),
        fmt_opt(s.post_churn_mean_acc),
        fmt_opt(s.target_accuracy),
        fmt_opt(s.round_x),
        fmt_f64(s.cumulative_fl),
        s.cumulative_rl_macs.to_string(),
        s.budget_violations.to_string(),
        warnings.to_string(),
    ]
}

pub fn summary_text(s: &RunSummary) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "run {} (policy {}, seed {})", s.label, s.policy, s.seed);
    let _ = writeln!(t, "rounds            {}", s.rounds);
    let _ = writeln!(t, "budget per round  {:.6} J", s.budget);
    let _ = writeln!(t, "mean accuracy     {:.4}", s.mean_acc);
    let _ = writeln!(t, "final accuracy    {:.4}", s.final_acc);
    let _ = writeln!(t, "tail mean / IQR   {:.4} / {:.4}", s.tail_mean_acc, s.tail_iqr_acc);
    if let Some(p) = s.post_churn_mean_acc {
        let _ = writeln!(t, "post-churn mean   {p:.4}");
    }
    match (s.target_accuracy, s.round_x) {
        (Some(target), Some(x)) => {
            let _ = writeln!(t, "round x           {x} (target {target})");
        }
        (Some(target), None) => {
            let _ = writeln!(t, "round x           not reached (target {target})");
        }
        _ => {}
    }
    let _ = writeln!(t, "FL energy         {:.6} J", s.cumulative_fl);
    let _ = writeln!(t, "RL training MACs  {}", s.cumulative_rl_macs);
    let _ = writeln!(t, "budget violations {}", s.budget_violations);
    t
}

/// Writes every artifact of a run into `dir`, creating it if needed.
pub fn write_run(dir: impl AsRef<Path>, artifact: &RunArtifact) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join(ROUNDS_FILE);
    let mut w = writer(&path)?;
    w.write_record(ROUNDS_HEADER)?;
    for r in &artifact.records {
        w.write_record([
            r.round.to_string(),
            r.active.len().to_string(),
            join_ids(&r.chosen),
            r.chosen.len().to_string(),
            fmt_f64(r.budget),
            fmt_f64(r.spent),
            fmt_f64(r.cumulative_fl),
            fmt_f64(r.global_acc),
            fmt_opt(r.reward),
            fmt_opt(r.epsilon),
            r.rl_macs.to_string(),
            r.cumulative_rl_macs.to_string(),
            join_ids(&r.updated),
        ])?;
    }
    finish(w, &path)?;

    let path = dir.join(CLIENTS_FILE);
    let mut w = writer(&path)?;
    w.write_record(CLIENTS_HEADER)?;
    for r in &artifact.records {
        for (i, id) in r.active.iter().enumerate() {
            w.write_record([
                r.round.to_string(),
                id.0.to_string(),
                fmt_f64(r.client_accs[i]),
                fmt_f64(r.client_losses[i]),
                u8::from(r.chosen.contains(id)).to_string(),
            ])?;
        }
    }
    finish(w, &path)?;

    let path = dir.join(TRACE_FILE);
    let mut w = writer(&path)?;
    w.write_record(TRACE_HEADER)?;
    for r in &artifact.records {
        for t in &r.trace {
            w.write_record([
                r.round.to_string(),
                t.step.to_string(),
                t.client.0.to_string(),
                t.mode.name().to_string(),
                fmt_f64(t.energy),
                fmt_f64(t.suggestion),
                u8::from(t.admitted).to_string(),
            ])?;
        }
    }
    finish(w, &path)?;

    let summary = RunSummary::of(artifact);
    let path = dir.join(SUMMARY_CSV);
    let mut w = writer(&path)?;
    w.write_record(SUMMARY_HEADER)?;
    w.write_record(summary_record(&summary, artifact.warnings.len()))?;
    finish(w, &path)?;

    let mut text = summary_text(&summary);
    for warning in &artifact.warnings {
        let _ = writeln!(text, "warning: {warning}");
    }
    let path = dir.join(SUMMARY_TXT);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        files: [ROUNDS_FILE, CLIENTS_FILE, TRACE_FILE, SUMMARY_CSV, SUMMARY_TXT]
            .map(String::from)
            .to_vec(),
        warnings: artifact.warnings.clone(),
        config: artifact.config.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(dir.to_path_buf())
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "{} has schema version {}, this build reads {SCHEMA_VERSION}",
            path.display(),
            manifest.schema_version
        )));
    }
    Ok(manifest)
}

/// Parses the summary columns of a `rounds.csv`.
pub fn read_rounds(path: impl AsRef<Path>) -> Result<Vec<RoundRow>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    if reader.headers()?.iter().collect::<Vec<_>>() != ROUNDS_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header in {}", path.display()),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            field(i).parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {} is not a number: {:?}", ROUNDS_HEADER[i], field(i)),
            })
        };
        let int = |i: usize| -> Result<u64> {
            field(i).parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {} is not an integer: {:?}", ROUNDS_HEADER[i], field(i)),
            })
        };
        rows.push(RoundRow {
            round: int(0)? as usize,
            budget: num(4)?,
            spent: num(5)?,
            cumulative_fl: num(6)?,
            global_acc: num(7)?,
            cumulative_rl_macs: int(11)?,
        });
    }
    Ok(rows)
}

/// Recomputes the summary of a run directory from its CSV and manifest.
pub fn report(dir: impl AsRef<Path>) -> Result<RunSummary> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let rows = read_rounds(dir.join(ROUNDS_FILE))?;
    let c = &manifest.config;
    Ok(RunSummary::from_rows(
        &c.label(),
        c.policy.name(),
        c.seed,
        &rows,
        c.churn.iter().map(|e| e.round).min(),
        c.target_accuracy,
    ))
}
