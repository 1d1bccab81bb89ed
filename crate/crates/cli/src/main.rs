use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ftlflow_cli::commands::{cmd_fd, cmd_run, cmd_stability, Report};
use ftlflow_cli::config::{load_text, FdParams, MapSpec, ScenarioConfig};
use ftlflow_cli::{CliError, Format};

#[derive(Parser)]
#[command(name = "ftlflow", version, about = "Ring-road traffic models with reaction time")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory, overrides the config's `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario file or a built-in scenario (ring-jam, ring-random, ring-perturbed).
    Run {
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Record every `stride` steps.
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Stability region map from a map spec or a built-in (ring-f1, ring-f23).
    Stability { mapspec: String },
    /// Fundamental diagram with its delay bounds (ring-fd, pedestrian, vehicle).
    Fd {
        params: String,
        /// `density,speed` CSV to overlay.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<Report, CliError> {
    match cli.command {
        Command::Run { config, seed, stride } => {
            let mut cfg = ScenarioConfig::parse(&load_text(&config)?)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(s) = stride {
                if s == 0 {
                    return Err(CliError::Config(vec!["--stride must be at least 1".into()]));
                }
                cfg.record_stride = s;
            }
            if let Some(o) = cli.out {
                cfg.out = o;
            }
            cmd_run(&cfg, cli.format)
        }
        Command::Stability { mapspec } => {
            let mut spec = MapSpec::parse(&load_text(&mapspec)?)?;
            if let Some(o) = cli.out {
                spec.out = o;
            }
            cmd_stability(&spec, cli.format)
        }
        Command::Fd { params, data } => {
            let mut p = FdParams::parse(&load_text(&params)?)?;
            if let Some(o) = cli.out {
                p.out = o;
            }
            cmd_fd(&p, data.as_deref(), cli.format)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for l in &report.lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprint!("{e}");
            if !matches!(e, CliError::Config(_)) {
                eprintln!();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
