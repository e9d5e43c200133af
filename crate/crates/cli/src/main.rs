use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rsde_cli::config::ExperimentKind;
use rsde_cli::runner::{load_config, run_experiment, RunOptions, TestDriver, EXIT_RUNTIME};

#[derive(Parser)]
#[command(name = "rsde", version, about = "Reflected SDE experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed, overriding `driver.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Deterministic driver: `zero`, `ramp` or `ramp:<slope>`.
    #[arg(long, value_parser = |s: &str| s.parse::<TestDriver>())]
    test_driver: Option<TestDriver>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate reflected trajectories.
    Simulate(Common),
    /// Run synchronous or mirror couplings and check the angle invariants.
    Couple(Common),
    /// Weak convergence ladder over refinement levels.
    Converge(Common),
    /// Moment scaling, Hoelder tails and variation growth.
    Diagnose(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Simulate(a) => (ExperimentKind::Simulate, a),
        Command::Couple(a) => (ExperimentKind::Couple, a),
        Command::Converge(a) => (ExperimentKind::Converge, a),
        Command::Diagnose(a) => (ExperimentKind::Diagnose, a),
    };
    let cfg = match load_config(&args.config, Some(kind)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_RUNTIME as u8);
        }
    };
    let opts = RunOptions { out_dir: args.out, seed: args.seed, test_driver: args.test_driver };
    let report = run_experiment(&cfg, &opts);
    let status = report.text.lines().rev().find(|l| l.starts_with("status:")).unwrap_or("status: unknown");
    eprintln!("{status}; report in {}", report.out_dir.join("report.txt").display());
    ExitCode::from(report.exit_code as u8)
}
