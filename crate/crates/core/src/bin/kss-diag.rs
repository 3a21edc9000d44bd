use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use kss_core::generator::LossSet;
use kss_core::pipeline::{self, PipelineConfig};
use kss_core::KssError;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Pretrain,
    TrainGenerator,
    TrainGate,
    Diagnose,
    Synth,
    E2e,
}

/// Generalized zero-shot fault diagnosis.
#[derive(Debug, Parser)]
#[command(name = "kss-diag", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON pipeline configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for checkpoints and reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated generator losses, e.g. `ar,av,au,r,g,ad` or `all`.
    #[arg(long)]
    losses: Option<LossSet>,
    /// Train the gate on real seen data only.
    #[arg(long)]
    skip_generator: bool,
}

fn run(cli: Cli) -> Result<(), KssError> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    pipeline::apply_overrides(&mut cfg, cli.seed, cli.out, cli.losses, cli.skip_generator);
    match cli.command {
        Command::Pretrain => {
            pipeline::cmd_pretrain(&cfg)?;
        }
        Command::TrainGenerator => {
            pipeline::cmd_train_generator(&cfg)?;
        }
        Command::TrainGate => {
            pipeline::cmd_train_gate(&cfg)?;
        }
        Command::Synth => {
            let path = pipeline::cmd_synth(&cfg)?;
            println!("{}", path.display());
        }
        Command::Diagnose | Command::E2e => {
            let report = if matches!(cli.command, Command::E2e) {
                pipeline::cmd_e2e(&cfg)?
            } else {
                pipeline::cmd_diagnose(&cfg)?
            };
            println!(
                "acc_s={:.4} acc_u={:.4} har={:.4}",
                report.acc_s, report.acc_u, report.har
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
