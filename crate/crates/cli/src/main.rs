//! `robustlab` command line: train recipes, run attacks and sweeps, grow
//! fooling images and export weight pictures.

mod commands;
mod common;
mod manifest;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use robustlab::Error;

#[derive(Parser)]
#[command(name = "robustlab", version, about = "Adversarial training vs weight decay experiments")]
struct Cli {
    /// Cap on worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a named recipe or a config file.
    Train(train::TrainArgs),
    /// Run one attack configuration on the test split.
    Attack(commands::AttackCmd),
    /// Accuracy under an attack across a grid of strengths.
    Sweep(commands::SweepCmd),
    /// Fooling images grown from noise, or the single-step fooling sweep.
    Fool(commands::FoolCmd),
    /// Weight pictures: logistic weights or first-layer filters.
    ExportWeights(commands::ExportCmd),
}

/// Data root shared by every command.
#[derive(clap::Args, Debug, Clone)]
pub struct DataArgs {
    /// Directory holding `mnist/` and `cifar-10-batches-bin/`.
    #[arg(long, env = "ROBUSTLAB_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
}

/// A failure with the exit code it maps to.
pub enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Lib(e) => match e {
                Error::Io { .. } | Error::Parse { .. } | Error::Csv(_) => 3,
                Error::Diverged { .. } | Error::NonFinite(_) | Error::ZeroWeights => 4,
                _ => 2,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Lib(Error::UnknownRecipe(name)) => format!(
                "unknown recipe `{name}`; known recipes:\n  {}",
                robustlab::training::RECIPES.join("\n  ")
            ),
            Failure::Lib(e) => e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let result = match cli.command {
        Command::Train(a) => train::run(a),
        Command::Attack(a) => commands::attack(a),
        Command::Sweep(a) => commands::sweep_cmd(a),
        Command::Fool(a) => commands::fool(a),
        Command::ExportWeights(a) => commands::export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
