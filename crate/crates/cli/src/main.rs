//! `medstate`: per-subject ON/OFF detection from wrist and ankle gyroscopes.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{FileConfig, SensorChoice};

#[derive(Parser, Debug)]
#[command(name = "medstate", version, about = "Medication ON/OFF state detection from gyroscope recordings")]
struct Cli {
    /// JSON file with default values for the shared flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads when several subject inputs are given.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Sensors used for features: wrist, ankle or both.
    #[arg(long, global = true)]
    sensors: Option<SensorChoice>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic training and testing recordings.
    Synth(commands::SynthArgs),
    /// Train one subject model per labelled training recording.
    Train(commands::TrainArgs),
    /// Write per-second state reports for recordings.
    Predict(commands::PredictArgs),
    /// Score a report against a labelled recording.
    Evaluate(commands::EvaluateArgs),
    /// Feature extraction utilities.
    Features {
        #[command(subcommand)]
        command: FeaturesCommand,
    },
}

#[derive(Subcommand, Debug)]
enum FeaturesCommand {
    /// Write the per-window feature matrix of a recording as CSV.
    Dump(commands::DumpArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let shared = file.resolve(cli.sensors, cli.jobs)?;
    if let Some(jobs) = shared.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    match cli.command {
        Command::Synth(args) => commands::synth(args, &shared, &file),
        Command::Train(args) => commands::train(args, &shared),
        Command::Predict(args) => commands::predict(args, &shared, &file),
        Command::Evaluate(args) => commands::evaluate(args, &file),
        Command::Features {
            command: FeaturesCommand::Dump(args),
        } => commands::features_dump(args, &shared),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
