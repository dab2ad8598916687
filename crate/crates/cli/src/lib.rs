//! The `dlm` command line: ingest a lexicon and embeddings, split it, fit
//! and evaluate comprehension and production, probe the embeddings and
//! relate class productivity to model performance.
//!
//! Every command reads its inputs from the configured paths or from the
//! output of earlier commands under `--out`, and writes its results plus a
//! `config.json` sidecar into its own subdirectory.

pub mod commands;
pub mod config;
pub mod error;
pub mod svg;
pub mod workspace;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "dlm", version, about = "Discriminative lexicon model experiments")]
pub struct Cli {
    /// JSON experiment configuration; defaults apply to missing fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `paths.output`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for the split and the network (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Validate the lexicon and embeddings and write the working lexicon.
    Ingest,
    /// Split the working lexicon into training and test parts.
    Split,
    /// Fit and evaluate comprehension mappings.
    Comprehend,
    /// Run the production pipeline on held-out or training words.
    Produce,
    /// Discriminant probes of the embedding space.
    Probe,
    /// Productivity measures per inflectional class.
    Productivity,
    /// Correlate per-class performance with productivity and plot it.
    Report,
}

/// Build the effective configuration from the file and command-line overrides.
pub fn effective_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let mut c = ExperimentConfig::load(path)?;
            let base = path.parent().map(PathBuf::from).unwrap_or_default();
            c.resolve_paths(&base);
            c
        }
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.paths.output = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = effective_config(cli)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker threads: {e}")))?;
    pool.install(|| match cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::Split => commands::split(&cfg),
        Command::Comprehend => commands::comprehend(&cfg),
        Command::Produce => commands::produce(&cfg),
        Command::Probe => commands::probe(&cfg),
        Command::Productivity => commands::productivity(&cfg),
        Command::Report => commands::report(&cfg),
    })
}
