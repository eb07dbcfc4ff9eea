//! `provex`: run pipeline stages from a TOML configuration.
//!
//! Each stage reads the artifacts of the previous one from the run
//! directory, so any stage can be re-run on its own.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use provex_core::config::RunConfig;
use provex_core::pipeline::{Pipeline, Stage};

#[derive(Parser, Debug)]
#[command(name = "provex", version, about = "Dataset provenance from research software packages")]
struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Cache directory; falls back to the config, then $PROVEX_CACHE, then
    /// `<run_dir>/cache`.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,

    /// Forbid all network access; only cached responses are used.
    #[arg(long, global = true)]
    offline: bool,

    /// Worker threads for stage-internal parallelism (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory for stage artifacts.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Page through repository APIs and keep software records.
    Harvest,
    /// Download and unpack archives, mine metadata, resolve articles.
    Fetch,
    /// Trace data sources and operations in every script.
    Analyze,
    /// Keep chains whose terms the linked article mentions.
    Match,
    /// Re-run scholarly scripts and confirm their printed values.
    Recompute,
    /// Emit (and optionally ingest) contribution graphs.
    BuildKg,
    /// Score extraction against ground truth with the index of agreement.
    Validate,
    /// Every stage in order.
    Pipeline,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        Some(match self {
            Command::Harvest => Stage::Harvest,
            Command::Fetch => Stage::Fetch,
            Command::Analyze => Stage::Analyze,
            Command::Match => Stage::Match,
            Command::Recompute => Stage::Recompute,
            Command::BuildKg => Stage::BuildKg,
            Command::Validate => Stage::Validate,
            Command::Pipeline => return None,
        })
    }
}

fn load_config(cli: &Cli) -> provex_core::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.cache_dir {
        config.cache_dir = Some(dir.clone());
    }
    if let Some(dir) = &cli.run_dir {
        config.run_dir = dir.clone();
    }
    if cli.offline {
        config.offline = true;
    }
    if let Some(n) = cli.threads {
        config.threads = n;
    }
    Ok(config)
}

fn run(cli: &Cli) -> provex_core::Result<()> {
    let pipeline = Pipeline::new(load_config(cli)?)?;
    let reports = match cli.command.stage() {
        Some(stage) => vec![pipeline.run_stage(stage)?],
        None => pipeline.run_all()?,
    };
    for r in &reports {
        print!("{r}");
    }
    if reports.iter().any(|r| r.stage == Stage::Validate.name()) {
        print!("{}", std::fs::read_to_string(pipeline.run_dir().join("agreement.txt"))?);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
