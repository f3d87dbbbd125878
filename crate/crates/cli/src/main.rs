use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fedsel::orchestrator::{
    compare, compare_text, report, run, summary_text, sweep, write_run, ScenarioConfig, RunSummary, DEFAULT_SEEDS,
};

#[derive(Parser)]
#[command(name = "fedsel", version, about = "Budget-constrained client selection for federated learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its CSV artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run several scenarios over consecutive seeds and tabulate them.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        configs: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEEDS)]
        seeds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Vary one parameter of a scenario.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// budget_fraction, dirichlet_alpha, rounds or epsilon_floor
        #[arg(long)]
        param: String,
        #[arg(long, num_args = 1.., required = true, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_SEEDS)]
        seeds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute and print the summary of a run directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<ScenarioConfig> {
    ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, out } => {
            let mut config = load(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let artifact = run(&config)?;
            for w in &artifact.warnings {
                eprintln!("warning: {w}");
            }
            write_run(&out, &artifact).with_context(|| format!("writing {}", out.display()))?;
            print!("{}", summary_text(&RunSummary::of(&artifact)));
        }
        Command::Compare { configs, seeds, out } => {
            let configs = configs.iter().map(load).collect::<Result<Vec<_>>>()?;
            print!("{}", compare_text(&compare(&configs, seeds, out.as_deref())?));
        }
        Command::Sweep {
            config,
            param,
            values,
            seeds,
            out,
        } => {
            let base = load(&config)?;
            print!("{}", compare_text(&sweep(&base, &param, &values, seeds, out.as_deref())?));
        }
        Command::Report { input } => {
            if !input.is_dir() {
                bail!("{} is not a run directory", input.display());
            }
            print!("{}", summary_text(&report(&input)?));
        }
    }
    Ok(())
}
