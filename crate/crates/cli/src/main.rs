//! `extctrl`: batch comparisons of a single-arm trial against external controls.

mod commands;
mod failure;
mod output;
mod plan;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Context;
use failure::Failure;
use output::{Format, Outputs};

#[derive(Debug, Parser)]
#[command(name = "extctrl", version, about = "Compare a single-arm trial with external controls")]
struct Cli {
    /// Root seed for bootstrap resampling and simulation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving every artifact.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Format of tabular artifacts; reports are always JSON.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the propensity model and report positivity.
    PsFit(commands::PsFitArgs),
    /// Compute balancing weights for an estimand.
    Weight(commands::WeightArgs),
    /// Covariate balance before and after weighting.
    Balance(commands::BalanceArgs),
    /// Weighted trial-versus-external comparison.
    Compare(commands::CompareArgs),
    /// Matching-adjusted indirect comparison against an aggregate summary.
    Maic(commands::MaicArgs),
    /// Simulated treatment comparison against an aggregate summary.
    Stc(commands::StcArgs),
    /// Power-prior borrowing of external control responses.
    Borrow(commands::BorrowArgs),
    /// Draw a dataset from a scenario and record its true effects.
    Simulate(commands::SimulateArgs),
    /// Execute an analysis plan.
    Run {
        /// Plan JSON file.
        #[arg(long)]
        plan: PathBuf,
    },
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    // plan problems take precedence over output-directory problems
    let loaded = match &cli.command {
        Command::Run { plan } => Some(plan::load_plan(plan)?),
        _ => None,
    };
    let mut ctx = Context {
        seed: cli.seed,
        outputs: Outputs::new(&cli.out_dir, cli.format)?,
    };
    match &cli.command {
        Command::PsFit(a) => commands::ps_fit(a, &ctx),
        Command::Weight(a) => commands::weight(a, &ctx),
        Command::Balance(a) => commands::balance(a, &ctx),
        Command::Compare(a) => commands::compare(a, &ctx),
        Command::Maic(a) => commands::maic(a, &ctx),
        Command::Stc(a) => commands::stc(a, &ctx),
        Command::Borrow(a) => commands::borrow(a, &ctx),
        Command::Simulate(a) => commands::simulate(a, &ctx),
        Command::Run { .. } => plan::run(loaded.as_ref().expect("loaded above"), &mut ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
