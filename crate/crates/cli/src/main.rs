use std::path::PathBuf;

use clap::Parser;

use evolve1d_cli::config::Mode;
use evolve1d_cli::CliArgs;

/// Product-formula evolution engine for 1D Schrödinger operators with
/// time-dependent and moving point interactions.
#[derive(Parser)]
#[command(name = "evolve1d", version, about)]
struct Cli {
    /// Path of the run configuration (TOML).
    #[arg(long, short = 'c')]
    config: PathBuf,

    /// Override the mode from the config (simulate|verify|converge|frames).
    #[arg(long)]
    mode: Option<String>,

    /// Override the output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,

    /// Override the random seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Tolerance override, repeatable: --tol key=value.
    #[arg(long)]
    tol: Vec<String>,

    /// Print progress and report summaries to stderr.
    #[arg(long, short = 'v')]
    verbose: bool,
}

fn main() {
    let cli = Cli::parse();
    let mode = match cli.mode.as_deref() {
        None => None,
        Some(raw) => match raw.parse::<Mode>() {
            Ok(m) => Some(m),
            Err(e) => {
                eprintln!("{e}");
                std::process::exit(2);
            }
        },
    };
    let code = evolve1d_cli::execute(CliArgs {
        config: cli.config,
        mode,
        output_dir: cli.output_dir,
        seed: cli.seed,
        tol: cli.tol,
        verbose: cli.verbose,
    });
    std::process::exit(code);
}
