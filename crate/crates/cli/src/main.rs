//! `recveil` — train collaborative-filtering models, attack their user
//! embeddings, unlearn the attribute, and report the trade-offs.

mod commands;
mod config;
mod pipeline;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "recveil",
    about = "Attribute-inference attacks and post-training attribute unlearning for recommenders",
    version
)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, default_value = "recveil.toml")]
    config: PathBuf,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Recompute everything, ignoring existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load (or synthesize), filter, split and serialize the dataset.
    Prepare,
    /// Train the configured model and write a checkpoint.
    Train,
    /// Run the configured unlearning losses on a trained checkpoint.
    Unlearn {
        /// Model checkpoint to unlearn; defaults to the trained one.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Attack an embedding checkpoint and append report rows.
    Attack {
        /// Embedding checkpoint to attack; defaults to the trained model.
        #[arg(long)]
        embedding: Option<PathBuf>,
        /// Method label recorded in the CSV rows.
        #[arg(long, default_value = "original")]
        method: String,
    },
    /// Evaluate ranking quality of a checkpoint and append report rows.
    Eval {
        #[arg(long)]
        embedding: Option<PathBuf>,
        #[arg(long, default_value = "original")]
        method: String,
    },
    /// Full grid: original, unlearned and retrained embeddings, both
    /// attackers, all repeats, plus averaged tables and diagnostics.
    Pipeline,
    /// Trade-off sweep over the configured alpha grid.
    Sweep,
}

fn main() {
    let cli = Cli::parse();
    let stage = match &cli.command {
        Command::Prepare => "prepare",
        Command::Train => "train",
        Command::Unlearn { .. } => "unlearn",
        Command::Attack { .. } => "attack",
        Command::Eval { .. } => "eval",
        Command::Pipeline => "pipeline",
        Command::Sweep => "sweep",
    };
    if let Err(err) = run(cli) {
        eprintln!("recveil: error in {stage}: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    init_thread_pool()?;
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out_dir = cli
        .out
        .or_else(|| cfg.out_dir.clone())
        .context("no output directory: pass --out or set out_dir in the config")?;
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    cfg.out_dir = Some(out_dir);

    match cli.command {
        Command::Prepare => commands::prepare(&cfg, cli.force).map(|_| ()),
        Command::Train => commands::train(&cfg, cli.force).map(|_| ()),
        Command::Unlearn { checkpoint } => commands::unlearn(&cfg, checkpoint.as_deref()),
        Command::Attack { embedding, method } => {
            commands::attack(&cfg, embedding.as_deref(), &method)
        }
        Command::Eval { embedding, method } => commands::eval(&cfg, embedding.as_deref(), &method),
        Command::Pipeline => pipeline::run(&cfg, cli.force),
        Command::Sweep => commands::sweep(&cfg),
    }
}

/// Cap worker threads via `RECVEIL_THREADS`.
fn init_thread_pool() -> Result<()> {
    if let Ok(value) = std::env::var("RECVEIL_THREADS") {
        let threads: usize = value
            .parse()
            .context("RECVEIL_THREADS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .context("initializing the thread pool")?;
    }
    Ok(())
}
