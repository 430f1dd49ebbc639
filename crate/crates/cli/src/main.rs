//! `quatkgc`: preprocess benchmark datasets, train the rotation-translation
//! model, evaluate filtered link-prediction metrics, and run the
//! four-variant ablation sweep.
//!
//! Exit codes: 0 success, 1 data/environment error, 2 usage error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use quatkgc_core::{NormKind, ScoreVariant, Split, TrainConfig};

#[derive(Parser)]
#[command(name = "quatkgc", version, about = "Knowledge-graph completion with learnable quaternion relation rotations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build vocabularies and the binary triple cache; print dataset statistics.
    Preprocess(PreprocessArgs),
    /// Train a model and write best/final checkpoints, log, and manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split and write a metrics record.
    Evaluate(EvaluateArgs),
    /// Train and evaluate all scoring variants under one config (shared seed).
    Ablate(AblateArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Dataset directory containing train.txt / valid.txt / test.txt.
    #[arg(long, env = "QUATKGC_DATA")]
    data: PathBuf,
    /// Output directory for entities.dict / relations.dict / triples.bin
    /// (defaults to the dataset directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Hyperparameter overrides; file values (--config) are applied first,
/// flags win.
#[derive(Args, Clone)]
struct HyperArgs {
    /// JSON config file with TrainConfig keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Embedding dimension d.
    #[arg(long)]
    dim: Option<usize>,
    /// Learning rate ε.
    #[arg(long)]
    lr: Option<f64>,
    /// Negative samples n per positive.
    #[arg(long)]
    neg: Option<usize>,
    /// Self-adversarial temperature α.
    #[arg(long)]
    alpha: Option<f64>,
    /// Fixed margin γ.
    #[arg(long)]
    gamma: Option<f64>,
    /// Scoring variant.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<ScoreVariant>,
    /// Residual norm.
    #[arg(long, value_parser = parse_norm)]
    norm: Option<NormKind>,
    /// Batch size.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long = "max-steps")]
    max_steps: Option<u64>,
    #[arg(long = "valid-every")]
    valid_every: Option<u64>,
    /// Master seed; all run randomness derives from it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, env = "QUATKGC_DATA")]
    data: PathBuf,
    /// Run directory for manifest, checkpoints, and the training log.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Worker threads; 1 guarantees bit-reproducible runs.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, env = "QUATKGC_DATA")]
    data: PathBuf,
    /// Split to evaluate.
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: Split,
    /// Rank against the raw (unfiltered) candidate list.
    #[arg(long)]
    raw: bool,
    /// Where to write the metrics record (defaults to the checkpoint's directory).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Comma-separated subset of variants to run (default: all four).
    #[arg(long)]
    variants: Option<String>,
}

fn parse_variant(s: &str) -> Result<ScoreVariant, String> {
    ScoreVariant::from_str(s).map_err(|e| e.to_string())
}

fn parse_norm(s: &str) -> Result<NormKind, String> {
    NormKind::from_str(s).map_err(|e| e.to_string())
}

fn parse_split(s: &str) -> Result<Split, String> {
    Split::from_str(s).map_err(|e| e.to_string())
}

/// Errors split by exit code: configuration resolution fails before any
/// compute with a usage error; everything downstream is a data/environment
/// error.
enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn resolve_config(hyper: &HyperArgs) -> Result<TrainConfig, CliError> {
    let mut config = match &hyper.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str::<TrainConfig>(&text)
                .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(dim) = hyper.dim {
        config.dim = dim;
    }
    if let Some(lr) = hyper.lr {
        config.learning_rate = lr;
    }
    if let Some(neg) = hyper.neg {
        config.negatives = neg;
    }
    if let Some(alpha) = hyper.alpha {
        config.alpha = alpha;
    }
    if let Some(gamma) = hyper.gamma {
        config.gamma = gamma;
    }
    if let Some(variant) = hyper.variant {
        config.variant = variant;
    }
    if let Some(norm) = hyper.norm {
        config.norm = norm;
    }
    if let Some(batch) = hyper.batch {
        config.batch_size = batch;
    }
    if let Some(max_steps) = hyper.max_steps {
        config.max_steps = max_steps;
    }
    if let Some(valid_every) = hyper.valid_every {
        config.valid_every = valid_every;
    }
    if let Some(seed) = hyper.seed {
        config.seed = seed;
    }
    config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn init_thread_pool(threads: usize) {
    if threads > 1 {
        // ignore the error if a pool already exists (e.g. repeated calls in tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Preprocess(args) => Ok(commands::preprocess(&args.data, args.out.as_deref())?),
        Command::Train(args) => {
            let config = resolve_config(&args.hyper)?;
            init_thread_pool(args.threads);
            Ok(commands::train_run(&args.data, &args.out, &config, args.threads)?)
        }
        Command::Evaluate(args) => {
            init_thread_pool(args.threads);
            Ok(commands::evaluate_run(
                &args.ckpt,
                &args.data,
                args.split,
                args.raw,
                args.out.as_deref(),
                args.threads,
            )?)
        }
        Command::Ablate(args) => {
            let config = resolve_config(&args.train.hyper)?;
            let variants = match &args.variants {
                None => ScoreVariant::ALL.to_vec(),
                Some(list) => list
                    .split(',')
                    .map(|s| parse_variant(s.trim()).map_err(CliError::Usage))
                    .collect::<Result<Vec<_>, _>>()?,
            };
            if variants.is_empty() {
                return Err(CliError::Usage("empty --variants list".to_string()));
            }
            // dim divisibility must hold for every requested variant
            for &variant in &variants {
                TrainConfig {
                    variant,
                    ..config.clone()
                }
                .validate()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            }
            init_thread_pool(args.train.threads);
            Ok(commands::ablate_run(
                &args.train.data,
                &args.train.out,
                &config,
                &variants,
                args.train.threads,
            )?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse(); // clap exits with code 2 on usage errors
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
