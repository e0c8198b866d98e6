//! `illumix`: batch front end for augmentation, estimation, correction and
//! evaluation runs. Exit status is 0 on success, 1 if any sample failed and
//! 2 if the run could not start.

mod augment;
mod batch;
mod config;
mod correct;
mod estimate;
mod evaluate;
mod losses;
mod seeds;
mod split;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use illumix::io::RasterFormat;
use serde::Serialize;

use crate::config::ConfigFile;

#[derive(Debug, Parser)]
#[command(name = "illumix", version, about = "Multi-illuminant color constancy toolkit")]
struct Cli {
    /// TOML run configuration; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args, Serialize)]
struct CommonArgs {
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    rng_seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Image format for written images: png16 or pfm.
    #[arg(long, global = true)]
    format: Option<RasterFormat>,
}

#[derive(Debug, Subcommand)]
enum Command {
    Augment(augment::Args),
    Estimate(estimate::Args),
    Correct(correct::Args),
    Seeds(seeds::Args),
    Evaluate(evaluate::Args),
    Losses(losses::Args),
    Split(split::Args),
}

fn run(cli: Cli) -> Result<usize> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let common = file.common(&cli.common)?;
    if let Some(jobs) = common.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().context("starting worker pool")?;
    }
    match &cli.command {
        Command::Augment(a) => augment::run(&common, file.section("augment", a)?),
        Command::Estimate(a) => estimate::run(&common, file.section("estimate", a)?),
        Command::Correct(a) => correct::run(&common, file.section("correct", a)?),
        Command::Seeds(a) => seeds::run(&common, file.section("seeds", a)?),
        Command::Evaluate(a) => evaluate::run(&common, file.section("evaluate", a)?),
        Command::Losses(a) => losses::run(&common, file.section("losses", a)?),
        Command::Split(a) => split::run(&common, file.section("split", a)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("{n} sample(s) failed; see errors.log in the output directory");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
