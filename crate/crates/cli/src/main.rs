use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mgtd_cli::{run, Command, RunConfig};

#[derive(Parser)]
#[command(name = "mgtd", version, about = "Ensemble detector for machine-generated Chinese text")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(short, long, global = true, default_value = "config.json")]
    config: PathBuf,
    /// Overrides the configured global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit lexicons, token tables, thresholds and the strategy book.
    Fit,
    /// Fit only the score-detector thresholds.
    Calibrate,
    /// Judge the input set and write predictions and an audit trail.
    Predict,
    /// Score predictions against gold labels.
    Eval,
    /// Write transformed copies of the input set.
    Augment,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let command = match cli.command {
        Cmd::Fit => Command::Fit,
        Cmd::Calibrate => Command::Calibrate,
        Cmd::Predict => Command::Predict,
        Cmd::Eval => Command::Eval,
        Cmd::Augment => Command::Augment,
    };
    let result = RunConfig::load(&cli.config).and_then(|mut cfg| {
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        run(command, &cfg)
    });
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
