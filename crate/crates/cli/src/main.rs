//! `hopekit` — batch workflows over hand-object manifests.
//!
//! Exit codes: 0 success, 1 failed check or metric gate, 2 input error.

mod commands;
mod selftest;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "hopekit",
    version,
    about = "Hand-object pose evaluation and data preparation"
)]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for per-frame work.
    #[arg(long, global = true, env = "HOPEKIT_THREADS", value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,

    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,

    /// Write the report here instead of standard output.
    #[arg(long, short = 'o', global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Label grasping per frame and compute occlusion proportions from masks.
    PrepareLabels(commands::PrepareLabelsArgs),
    /// Divide a labeled manifest into hand-only and hand-object scenes.
    Split(commands::SplitArgs),
    /// Compare predictions with ground truth.
    Evaluate(commands::EvaluateArgs),
    /// Recover object poses from predicted 2D keypoints.
    Pnp(commands::PnpArgs),
    /// Pick the control strength with the lowest joint error per sample.
    SelectStrength(commands::SelectStrengthArgs),
    /// Run built-in numerical checks.
    Selftest(SelftestArgs),
    /// Write the synthetic 12-frame fixture.
    MakeFixture(commands::MakeFixtureArgs),
}

#[derive(Args)]
struct SelftestArgs {
    /// Perturb the named check (used to exercise failure reporting).
    #[arg(long, hide = true, env = "HOPEKIT_SELFTEST_FAULT")]
    inject_fault: Option<String>,
}

/// Failure of a command, mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Check(String),
}

impl CliError {
    pub fn input(e: impl std::fmt::Display) -> Self {
        CliError::Input(e.to_string())
    }
}

/// Options shared by every command.
pub struct Global {
    pub seed: u64,
    pub format: Format,
    pub output: Option<PathBuf>,
}

impl Global {
    /// Writes the primary report to `--output` or standard output.
    pub fn emit(&self, text: &str) -> Result<(), CliError> {
        match &self.output {
            Some(path) => std::fs::write(path, text)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(CliError::input)?;
    }
    let global = Global {
        seed: cli.seed,
        format: cli.format,
        output: cli.output,
    };
    match cli.command {
        Command::PrepareLabels(a) => commands::prepare_labels(&global, a),
        Command::Split(a) => commands::split(&global, a),
        Command::Evaluate(a) => commands::evaluate(&global, a),
        Command::Pnp(a) => commands::pnp(&global, a),
        Command::SelectStrength(a) => commands::select_strength(&global, a),
        Command::Selftest(a) => selftest::run(&global, a.inject_fault.as_deref()),
        Command::MakeFixture(a) => commands::make_fixture(&global, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
