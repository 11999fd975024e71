//! Library surface of the command-line driver, exposed so integration tests
//! can run full configurations in-process.

pub mod config;
pub mod output;
pub mod runner;

use std::path::PathBuf;

use config::Mode;

/// Parsed command-line inputs.
#[derive(Debug, Clone)]
pub struct CliArgs {
    pub config: PathBuf,
    pub mode: Option<Mode>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    /// `key=value` tolerance overrides.
    pub tol: Vec<String>,
    pub verbose: bool,
}

/// Loads, resolves and executes a run. Exit statuses: 0 pass, 2 config
/// error, 3 numeric failure, 4 diagnostic FAIL present.
pub fn execute(args: CliArgs) -> i32 {
    let mut tol_overrides = Vec::new();
    for entry in &args.tol {
        match entry.split_once('=') {
            Some((key, value)) => match value.parse::<f64>() {
                Ok(v) => tol_overrides.push((key.trim().to_string(), v)),
                Err(_) => {
                    eprintln!("config error: --tol {entry}: value is not a number");
                    return runner::EXIT_CONFIG;
                }
            },
            None => {
                eprintln!("config error: --tol {entry}: expected key=value");
                return runner::EXIT_CONFIG;
            }
        }
    }

    let (run, config_text, family, spec_text) = match config::load(&args.config) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{e}");
            return runner::EXIT_CONFIG;
        }
    };
    let resolved = match config::resolve(
        &args.config,
        run,
        config_text,
        family,
        spec_text,
        args.output_dir,
        args.seed,
        args.mode,
        &tol_overrides,
    ) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{e}");
            return runner::EXIT_CONFIG;
        }
    };
    runner::execute(&resolved, args.verbose)
}
