use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use nisio::cli::{run, Scale, Subcommand};

/// Semigroup envelopes on a discretized L^p space.
///
/// Exit codes: 0 all checks pass, 1 a check failed (report still written),
/// 2 configuration error.
#[derive(Debug, Parser)]
#[command(name = "nisio", version)]
struct Args {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// Experiment configuration (JSON). Optional for `verify`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed; overrides `seeds` from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Problem size of `verify`.
    #[arg(long, value_enum, default_value = "small")]
    scale: Scale,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let outcome = run(
        args.subcommand,
        args.config.as_deref(),
        args.out.as_deref(),
        args.seed,
        args.scale,
    );
    if outcome.exit_code == 0 {
        println!("{}", outcome.message);
    } else {
        eprintln!("{}", outcome.message);
    }
    ExitCode::from(outcome.exit_code as u8)
}
