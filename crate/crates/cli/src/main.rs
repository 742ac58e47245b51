//! `protolex` — word-list pipeline runner.
//!
//! Subcommand `run <stage>` executes one pipeline stage (or `all`) against
//! a run directory, reading earlier stages' artifacts and writing its own.
//! Exit codes: 0 ok, 1 internal error, 2 missing prerequisite artifact,
//! 3 invalid configuration.

mod config;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use stages::{Runner, Stage, StageError, EXIT_BAD_CONFIG};

#[derive(Parser)]
#[command(name = "protolex", version, about = "Cognate clustering, Bayesian phylogenetics, and proto-word-list reconstruction over phonetic word lists")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a pipeline stage (or `all`).
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// One of: train-align, distances, relate, cluster, characters,
    /// phylo, asr, msa, reconstruct, evaluate, all.
    stage: String,
    /// Flat key=value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input word-list TSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Reduced-effort profile (posterior 200, 200k generations).
    #[arg(long)]
    fast: bool,
    /// Cap on worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// MCMC generations per chain.
    #[arg(long)]
    generations: Option<usize>,
    /// Retained posterior sample size (all chains together).
    #[arg(long)]
    posterior_size: Option<usize>,
    /// Number of independent MCMC chains.
    #[arg(long)]
    chains: Option<usize>,
    /// Permutation count for the relatedness null model.
    #[arg(long)]
    null_permutations: Option<usize>,
    /// Comma-separated outgroup doculects.
    #[arg(long)]
    outgroup: Option<String>,
    /// Comma-separated gold doculects.
    #[arg(long)]
    gold: Option<String>,
    /// Also write the synonymous-pair alignment dump during train-align.
    #[arg(long)]
    dump_alignments: bool,
}

fn build_config(args: &RunArgs) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    if let Some(v) = &args.data {
        cfg.data = v.clone();
    }
    if let Some(v) = &args.out {
        cfg.out = v.clone();
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if args.fast {
        cfg.apply_fast_profile();
    }
    if let Some(v) = args.threads {
        cfg.threads = v;
    }
    if let Some(v) = args.generations {
        cfg.generations = v;
    }
    if let Some(v) = args.posterior_size {
        cfg.posterior_size = v;
    }
    if let Some(v) = args.chains {
        cfg.chains = v;
    }
    if let Some(v) = args.null_permutations {
        cfg.null_permutations = v;
    }
    if let Some(v) = &args.outgroup {
        cfg.outgroup = v.split(',').map(|s| s.trim().to_string()).collect();
    }
    if let Some(v) = &args.gold {
        cfg.gold = v.split(',').map(|s| s.trim().to_string()).collect();
    }
    if args.dump_alignments {
        cfg.dump_alignments = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs) -> Result<(), StageError> {
    let stage: Stage = args.stage.parse().map_err(|message| StageError {
        exit_code: EXIT_BAD_CONFIG,
        message,
    })?;
    let cfg = build_config(args).map_err(|message| StageError {
        exit_code: EXIT_BAD_CONFIG,
        message,
    })?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| StageError {
                exit_code: 1,
                message: format!("thread pool: {e}"),
            })?;
    }
    Runner::new(cfg)?.run(stage)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match run(&args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {}", e.message);
                ExitCode::from(e.exit_code as u8)
            }
        },
    }
}
