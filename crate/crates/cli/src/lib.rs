//! Library half of the `eadkit` binary, so tests can drive it in-process.

pub mod args;
mod commands;
pub mod failure;
pub mod session;

use std::ffi::OsString;

use clap::Parser;
use eadkit::io::config::RunConfig;

use args::{Cli, Command};
pub use commands::MinAreaOutput;
use failure::{CliResult, ExitKind, Failure};
use session::Session;

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    match &cli.config {
        None => Ok(RunConfig::default()),
        Some(path) => RunConfig::load(path).map_err(|e| {
            Failure::new(
                ExitKind::Config,
                anyhow::Error::new(e).context(path.display().to_string()),
            )
        }),
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let mut config = load_config(&cli)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let seed = config.seed;
    let mut session = Session::new(config, seed);
    if let Some(path) = &cli.config {
        session.read_bytes(path)?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Failure::new(ExitKind::Usage, anyhow::anyhow!("--jobs: {e}")))?;
    let outcome = pool.install(|| match &cli.command {
        Command::Split(a) => commands::split(&mut session, a),
        Command::Augment(a) => commands::augment(&mut session, a),
        Command::EnsembleSeg(a) => commands::ensemble_seg(&mut session, a),
        Command::TripleThreshold(a) => commands::triple_threshold(&mut session, a),
        Command::TuneSeg(a) => commands::tune_seg(&mut session, a),
        Command::MinArea(a) => commands::min_area(&mut session, a),
        Command::EnsembleDet(a) => commands::ensemble_det(&mut session, a),
        Command::TuneDet(a) => commands::tune_det(&mut session, a),
        Command::EvalSeg(a) => commands::eval_seg(&mut session, a),
        Command::EvalDet(a) => commands::eval_det(&mut session, a),
    })?;
    let report_path = cli.report.clone().unwrap_or(outcome.report_path);
    session.finish(cli.command.name(), &report_path, outcome.summary)
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code. Errors are printed to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitKind::Usage as i32
            } else {
                0
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.code()
        }
    }
}
