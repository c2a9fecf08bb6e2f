use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wdpd_cli::commands;
use wdpd_cli::{CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(name = "wdpd", version, about = "Walsh-domain neural-network predistortion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArg {
    /// Experiment config (JSON). Built-in defaults are used when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> CliResult<ExperimentConfig> {
        match &self.config {
            Some(p) => ExperimentConfig::load(p),
            None => ExperimentConfig::default().resolved(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the stimulus waveform and a summary of it.
    Generate {
        #[command(flatten)]
        config: ConfigArg,
        /// Output waveform path (`.csv` for text); defaults to the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pass a waveform through the configured PA.
    Amplify {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// NMSE against complexity for the IQ and Walsh model families.
    SweepForward {
        #[command(flatten)]
        config: ConfigArg,
        /// Threads for independent grid-search candidates.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Train the predistorter and evaluate the linearized chain.
    TrainDpd {
        #[command(flatten)]
        config: ConfigArg,
        /// Pretrain the student on the IQ teacher's output (default).
        #[arg(long, conflicts_with = "no_kd")]
        kd: bool,
        /// Train the student by Walsh-domain indirect learning only.
        #[arg(long)]
        no_kd: bool,
        /// Refine the student by indirect learning on its own chain.
        #[arg(long)]
        finetune: bool,
        /// Accepted for symmetry with sweep-forward; training is sequential.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Evaluate a stored student checkpoint.
    Evaluate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        student: PathBuf,
        /// Stimulus to predistort instead of the configured one.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Table of the reports stored in a train-dpd output directory.
    Report {
        dir: PathBuf,
    },
    /// Print the full default config.
    PrintDefaultConfig,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate { config, out } => {
            let path = commands::cmd_generate(&config.load()?, out.as_deref())?;
            println!("{}", path.display());
        }
        Command::Amplify { config, input, out } => commands::cmd_amplify(&config.load()?, &input, &out)?,
        Command::SweepForward { config, jobs } => {
            let path = commands::cmd_sweep_forward(&config.load()?, jobs.max(1))?;
            println!("{}", path.display());
        }
        Command::TrainDpd { config, kd: _, no_kd, finetune, jobs: _ } => {
            let cfg = config.load()?;
            commands::cmd_train_dpd(&cfg, !no_kd, finetune)?;
            print!("{}", commands::cmd_report(&cfg.output_dir)?);
        }
        Command::Evaluate { config, student, input } => {
            let summary = commands::cmd_evaluate(&config.load()?, &student, input.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
        }
        Command::Report { dir } => print!("{}", commands::cmd_report(&dir)?),
        Command::PrintDefaultConfig => println!("{}", ExperimentConfig::default_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
