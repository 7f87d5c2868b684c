//! `trslab` batch experiment runner.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "trslab", version, about = "Trust-region subproblem experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides the config's output directory.
    #[arg(long, short)]
    output_dir: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args)]
struct WithPaths {
    #[command(flatten)]
    common: Common,
    /// Instance files or directories; defaults to `<output_dir>/instances`.
    paths: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write seeded instances and their planted solutions.
    Generate(Common),
    /// Reference solutions and KKT reports.
    Solve(WithPaths),
    /// Case labels.
    Classify(WithPaths),
    /// Projected-gradient traces.
    Pgm(WithPaths),
    /// Exponent fits, rate classes and the summary table.
    Fit(WithPaths),
    /// Universal bounds, sufficient decrease and the sublinear rate bound; exit 2 on failure.
    VerifyBounds(WithPaths),
}

fn setup(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let level = match common.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().try_init().ok();
    let mut cfg = ExperimentConfig::load(common.config.as_deref())?;
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn paths_or_default(p: &WithPaths, cfg: &ExperimentConfig) -> Vec<PathBuf> {
    if p.paths.is_empty() {
        vec![cfg.output_dir.join("instances")]
    } else {
        p.paths.clone()
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match &cli.command {
        Command::Generate(c) => commands::generate_cmd(&setup(c)?).map(|_| true),
        Command::Solve(p) => {
            let cfg = setup(&p.common)?;
            commands::solve_cmd(&cfg, &paths_or_default(p, &cfg)).map(|_| true)
        }
        Command::Classify(p) => {
            let cfg = setup(&p.common)?;
            commands::classify_cmd(&cfg, &paths_or_default(p, &cfg)).map(|_| true)
        }
        Command::Pgm(p) => {
            let cfg = setup(&p.common)?;
            commands::pgm_cmd(&cfg, &paths_or_default(p, &cfg)).map(|_| true)
        }
        Command::Fit(p) => {
            let cfg = setup(&p.common)?;
            commands::fit_cmd(&cfg, &paths_or_default(p, &cfg)).map(|_| true)
        }
        Command::VerifyBounds(p) => {
            let cfg = setup(&p.common)?;
            commands::verify_cmd(&cfg, &paths_or_default(p, &cfg))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
