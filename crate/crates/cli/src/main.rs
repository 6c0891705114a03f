use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use synergy_cli::modes::ModeRegistry;
use synergy_cli::{execute, outcome_code, Invocation};

/// Hybrid synergistic feedback: simulations and property checks.
#[derive(Parser)]
#[command(name = "synergy", version, after_help = "modes: sphere-sim, quad-sim, gains, verify, geodesic-check\n\nexit codes: 0 success, 1 runtime error, 2 invalid input, 3 a checked property failed")]
struct Args {
    /// Mode to run.
    mode: String,
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output file; .json selects JSON, anything else CSV. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::new().filter_level(log::LevelFilter::Warn).init();
    let args = Args::parse();
    let registry = ModeRegistry::builtin();
    let inv = Invocation { mode: args.mode, config: args.config, out: args.out, seed: args.seed };
    let code = match execute(&registry, &inv) {
        Ok(outcome) => {
            for line in &outcome.summary {
                eprintln!("{line}");
            }
            if let Some(p) = &outcome.written_to {
                eprintln!("wrote {}", p.display());
            }
            outcome_code(outcome.passed)
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
