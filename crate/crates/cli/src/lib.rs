//! The `gap` command-line pipeline.

pub mod args;
pub mod config;
pub mod data;
pub mod error;
pub mod files;
pub mod solving;

use std::ffi::OsString;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::{CliError, Result, EXIT_OK, EXIT_USAGE};

/// Environment variable overriding the collection API base URL.
pub const BASE_URL_ENV: &str = "GAP_MET_BASE_URL";

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Data(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fetch(a) => data::fetch(&a, cli.workers),
        Command::Masks(a) => data::masks(&a),
        Command::Generate(a) => data::generate(&a),
        Command::Features(a) => data::features(&a),
        Command::StatsCompare(a) => data::stats_compare(&a),
        Command::Solve(a) => solving::solve(&a),
        Command::TrainScorer(a) => solving::train(&a),
        Command::Eval(a) => solving::eval(&a),
        Command::Render(a) => solving::render(&a),
    }
}

/// Runs the CLI on `argv` (including the program name) and returns the
/// process exit code.
pub fn run(argv: impl IntoIterator<Item = OsString>) -> i32 {
    let argv = match config::expand(argv.into_iter().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
