use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mbsde_lab::artifacts::Format;
use mbsde_lab::commands::{output_dir, run, Command, Options};
use mbsde_lab::scenario::Loaded;
use mbsde_lab::RunError;

#[derive(Parser)]
#[command(
    name = "mbsde",
    version,
    about = "Backward SDEs on manifolds: condition checks, solver, approximation cascade and uniqueness diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory; defaults to the scenario's `out` or `out/<name>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replaces the master seed of the scenario.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Worker threads; all cores by default.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "both")]
    format: Format,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Estimate the structural constants of the drift and check the boundary condition.
    CheckDrift,
    /// Solve the backward equation.
    Solve,
    /// Truncate, mollify and correct the drift, then tabulate convergence.
    Cascade,
    /// Submartingale diagnostics for a pair of solutions.
    Diagnose,
    /// Closed-form geometry against the ODE oracle and transport constants.
    GeometrySelftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match go(&cli) {
        Ok((pass, summary)) => {
            print!("{summary}");
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn go(cli: &Cli) -> Result<(bool, String), RunError> {
    let threads = cli.threads.unwrap_or(0);
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
    }
    let loaded = cli
        .scenario
        .as_deref()
        .map(|p| Loaded::from_path(p, cli.seed_override))
        .transpose()?;
    let cmd = match cli.command {
        Cmd::CheckDrift => Command::CheckDrift,
        Cmd::Solve => Command::Solve,
        Cmd::Cascade => Command::Cascade,
        Cmd::Diagnose => Command::Diagnose,
        Cmd::GeometrySelftest => Command::GeometrySelftest,
    };
    let opts = Options {
        out: output_dir(cli.out.as_deref(), loaded.as_ref().map(|l| &l.scenario)),
        format: cli.format,
        threads: rayon::current_num_threads(),
    };
    run(
        cmd,
        loaded.as_ref(),
        cli.scenario.as_deref(),
        &opts,
        cli.seed_override,
    )
}
