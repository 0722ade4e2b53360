use std::process::ExitCode;

use clap::Parser;
use motionedit_core::config::RunConfig;

mod args;
mod edit;
mod eval;
mod exit;
mod gen_data;
mod train;

use args::{Cli, Command};
use exit::{CmdResult, UsageContext};

fn run(cli: Cli) -> CmdResult {
    let config = RunConfig::resolve(cli.config.as_deref()).or_usage()?;
    match cli.command {
        Command::GenData(a) => gen_data::run(config, a),
        Command::Train(a) => train::run(config, a, cli.config.is_some()),
        Command::Edit(a) => edit::run(config, a),
        Command::Eval(a) => eval::run_eval(a),
        Command::Report(a) => eval::run_report(a),
        Command::Config => {
            print!("{}", config.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

/// A rayon pool with exactly `jobs` workers.
pub(crate) fn pool(jobs: usize) -> CmdResult<rayon::ThreadPool> {
    if jobs == 0 {
        return Err(exit::Failure::usage("--jobs must be at least 1"));
    }
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}
