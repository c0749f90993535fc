//! `bms` — builds bonus-malus rating schemes from a JSON scenario config and
//! reports relativity tables, a-priori rates, fairness/prediction metrics,
//! coordinate-descent traces, and Monte-Carlo cross-checks.

use std::path::PathBuf;
use std::process::ExitCode;

use bms_cli::commands::{self, CommonArgs};
use bms_cli::CliError;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bms",
    version,
    about = "Bonus-malus rating schemes: premium tables, fairness metrics, and Monte-Carlo checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the requested schemes and write relativities.csv, priori.csv,
    /// metrics.md, and report.json.
    RunScenario {
        /// Path to the JSON scenario config.
        config: PathBuf,
        /// Output directory (overrides the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Gauss–Laguerre node count (overrides the config).
        #[arg(long)]
        quadrature_nodes: Option<usize>,
    },
    /// Write the coordinate-descent trace (trace.csv) of the fully optimized
    /// scheme.
    Trace {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quadrature_nodes: Option<usize>,
    },
    /// Run the seeded Monte-Carlo oracle and write sim-report.json with
    /// analytic-vs-empirical z-scores.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quadrature_nodes: Option<usize>,
        /// RNG seed (overrides the config's simulation.seed).
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run() -> Result<(), CliError> {
    let cli = Cli::try_parse().map_err(|e| {
        // --help/--version land here too; print and succeed.
        if e.use_stderr() {
            CliError::Config(e.to_string())
        } else {
            print!("{e}");
            std::process::exit(0);
        }
    })?;
    match cli.command {
        Command::RunScenario { config, out, quadrature_nodes } => commands::run_scenario(
            &CommonArgs { config_path: config, out, quadrature_nodes, seed: None },
        ),
        Command::Trace { config, out, quadrature_nodes } => {
            commands::trace(&CommonArgs { config_path: config, out, quadrature_nodes, seed: None })
        }
        Command::Simulate { config, out, quadrature_nodes, seed } => {
            commands::simulate(&CommonArgs { config_path: config, out, quadrature_nodes, seed })
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}
