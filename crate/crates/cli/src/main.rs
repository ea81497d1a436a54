//! `semicoh`: fit, simulate, predict with and compare multivariate spatial
//! covariance models.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};
use failure::Failure;

#[derive(Parser)]
#[command(name = "semicoh", version, about = "Semiparametric multivariate spatial covariance models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Maximum likelihood fit; writes fit.json and model.json.
    Fit(Overrides),
    /// Gaussian random field realizations; writes sim_<r>.csv.
    Simulate(Overrides),
    /// Held-out co-kriging; writes predictions.csv and scores.json.
    Predict(Overrides),
    /// Coherence curves of a model; writes coherence.csv.
    Coherence {
        #[command(flatten)]
        overrides: Overrides,
        /// model.json or fit.json to read the model from.
        #[arg(long = "model-file")]
        model_file: Option<PathBuf>,
    },
    /// Fits several candidate configurations and ranks them by AIC.
    Compare {
        #[command(flatten)]
        overrides: Overrides,
        /// Candidate configurations.
        #[arg(required = true)]
        candidates: Vec<PathBuf>,
    },
}

fn setup(cfg: &RunConfig) {
    if let Some(n) = cfg.threads {
        semicoh::par::set_threads(n.max(1));
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Fit(o) => {
            let cfg = RunConfig::resolve(&o)?;
            setup(&cfg);
            commands::cmd_fit(&cfg)
        }
        Command::Simulate(o) => {
            let cfg = RunConfig::resolve(&o)?;
            setup(&cfg);
            commands::cmd_simulate(&cfg)
        }
        Command::Predict(o) => {
            let cfg = RunConfig::resolve(&o)?;
            setup(&cfg);
            commands::cmd_predict(&cfg)
        }
        Command::Coherence { overrides, model_file } => {
            let mut cfg = RunConfig::resolve(&overrides)?;
            if let Some(path) = model_file {
                cfg.model.file = Some(path);
                cfg.model.params = None;
            }
            setup(&cfg);
            commands::cmd_coherence(&cfg)
        }
        Command::Compare { overrides, candidates } => {
            let base = RunConfig::resolve(&overrides)?;
            setup(&base);
            let mut list = Vec::with_capacity(candidates.len());
            for path in &candidates {
                let mut c = RunConfig::from_file(path)?;
                // shared flags apply to every candidate, the config file does not
                let shared = Overrides {
                    config: None,
                    ..overrides.clone()
                };
                c.apply(&shared);
                list.push(c);
            }
            commands::cmd_compare(&base, &list)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
