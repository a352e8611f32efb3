//! `charseg` — character-level code-segment detection pipeline.
//!
//! Subcommands cover the full experiment: corpus ingestion and synthesis,
//! language-model training, perplexity and nearest-neighbor inspection,
//! feature emission, CRF training, labeling, evaluation, and the
//! learning-curve harness. Every command prints one machine-parsable
//! summary line to stdout and human detail to stderr.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O or bad input data, 4 model
//! mismatch, 5 training diverged, 1 internal.

mod commands;
mod config;
mod error;
mod formats;
mod summary;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::FeatureSet;
use config::ExperimentConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "charseg", version, about = "Character-level code segment detection")]
struct Cli {
    /// TOML experiment configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for stochastic components (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureSetArg {
    Baseline,
    Augmented,
}

#[derive(Subcommand)]
enum Command {
    /// Strip markup from documents and dump BIO-labeled sequences plus a
    /// split manifest.
    Ingest {
        /// Document source: a directory of text files or a JSONL file.
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// BIO dump holding every document, in input order.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Also write unlabeled/train/dev/test BIO dumps (and the manifest)
        /// into this directory.
        #[arg(long, value_name = "DIR")]
        split_dir: Option<PathBuf>,
        /// Character-mass ratios for the unlabeled/train/dev/test splits.
        #[arg(long, value_delimiter = ',', value_name = "R,R,R,R")]
        ratios: Option<Vec<f64>>,
    },
    /// Generate a synthetic prose+code corpus as JSONL with markup.
    Synth {
        /// Number of documents.
        #[arg(long, default_value_t = 100)]
        docs: usize,
        /// Probability that a document contains code blocks.
        #[arg(long)]
        block_rate: Option<f64>,
        /// Probability that a document contains inline code.
        #[arg(long)]
        inline_rate: Option<f64>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Train the character language model.
    TrainLm {
        /// Training text source (BIO dump, JSONL, or directory).
        #[arg(long, value_name = "PATH")]
        train: PathBuf,
        /// Validation text source driving the learning-rate schedule.
        #[arg(long, value_name = "PATH")]
        valid: PathBuf,
        /// Hidden layer size.
        #[arg(long)]
        hidden: Option<usize>,
        /// Backpropagation-through-time depth.
        #[arg(long)]
        bptt: Option<usize>,
        /// Cap on training passes.
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Per-character perplexity of a text under a trained language model.
    Perplexity {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
    },
    /// Nearest-neighbor report over hidden-state embeddings.
    Nn {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Query every Nth position.
        #[arg(long, default_value_t = 100)]
        stride: usize,
        /// Search the first N positions.
        #[arg(long, default_value_t = 10000)]
        prefix: usize,
        /// Neighbors per query.
        #[arg(long, default_value_t = 4)]
        neighbors: usize,
        /// Write the report here instead of stderr.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Emit per-character feature rows for CRF training or labeling.
    Featurize {
        /// Sequences to featurize (BIO dump, JSONL, or directory).
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = FeatureSetArg::Baseline)]
        feature_set: FeatureSetArg,
        /// Language model for augmented features.
        #[arg(long, value_name = "FILE")]
        lm: Option<PathBuf>,
        /// Hidden-unit indicators per augmented row.
        #[arg(long)]
        topk: Option<usize>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Train the segment labeler on a feature file.
    TrainCrf {
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Gaussian prior width.
        #[arg(long)]
        sigma: Option<f64>,
        /// Cap on optimizer iterations.
        #[arg(long)]
        max_iter: Option<usize>,
        /// Relative objective-change stopping tolerance.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Tag feature rows with a trained labeler.
    Label {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Predicted tags, one per line, blank line between sequences.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Segment-wise precision/recall/F1 of predictions against gold.
    Evaluate {
        /// Gold BIO dump (labeled).
        #[arg(long, value_name = "PATH")]
        gold: PathBuf,
        /// Predictions: a tags file from `label`, or a labeled BIO dump.
        #[arg(long, value_name = "PATH")]
        pred: PathBuf,
        /// Also write the report as TSV.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Learning curve: retrain on nested prefixes of the training data.
    Curve {
        /// Labeled training pool (BIO dump, JSONL, or directory).
        #[arg(long, value_name = "PATH")]
        train: PathBuf,
        /// Fixed labeled dev set.
        #[arg(long, value_name = "PATH")]
        dev: PathBuf,
        /// Percent of training characters per cell, ascending.
        #[arg(long, value_delimiter = ',', value_name = "F,F,...")]
        fractions: Option<Vec<f64>>,
        /// Language model for the "small" augmented feature set.
        #[arg(long, value_name = "FILE")]
        lm_small: Option<PathBuf>,
        /// Language model for the "large" augmented feature set.
        #[arg(long, value_name = "FILE")]
        lm_large: Option<PathBuf>,
        #[arg(long)]
        topk: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        /// Curve rows as TSV: fraction, feature set, P, R, F1.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<summary::Summary, CliError> {
    let cfg = ExperimentConfig::load(cli.config.as_deref())?;
    let seed = cli.seed;
    match cli.command {
        Command::Ingest { input, out, split_dir, ratios } => {
            let ratios = cfg.split_ratios(ratios.map(to_ratio_array).transpose()?);
            commands::ingest(&input, &out, split_dir.as_deref(), ratios, cfg.seed(seed))
        }
        Command::Synth { docs, block_rate, inline_rate, out } => {
            commands::synth(docs, block_rate, inline_rate, cfg.seed(seed), &out)
        }
        Command::TrainLm { train, valid, hidden, bptt, max_iter, out } => {
            let config = cfg.srn_config(hidden, bptt, max_iter, seed);
            commands::train_lm(&train, &valid, config, &out)
        }
        Command::Perplexity { model, input } => commands::perplexity(&model, &input),
        Command::Nn { model, input, stride, prefix, neighbors, out } => {
            commands::nn(&model, &input, stride, prefix, neighbors, out.as_deref())
        }
        Command::Featurize { input, feature_set, lm, topk, out } => {
            let fs = match feature_set {
                FeatureSetArg::Baseline => FeatureSet::Baseline,
                FeatureSetArg::Augmented => FeatureSet::Augmented,
            };
            commands::featurize(&input, fs, lm.as_deref(), cfg.topk(topk), &out)
        }
        Command::TrainCrf { input, sigma, max_iter, tol, out } => {
            let options = cfg.crf_options(sigma, max_iter, tol, seed);
            commands::train_crf(&input, options, &out)
        }
        Command::Label { model, input, out } => commands::label(&model, &input, &out),
        Command::Evaluate { gold, pred, out } => {
            commands::evaluate(&gold, &pred, out.as_deref())
        }
        Command::Curve {
            train,
            dev,
            fractions,
            lm_small,
            lm_large,
            topk,
            sigma,
            max_iter,
            tol,
            out,
        } => {
            let options = cfg.crf_options(sigma, max_iter, tol, seed);
            commands::curve(
                &train,
                &dev,
                &cfg.fractions(fractions),
                lm_small.as_deref(),
                lm_large.as_deref(),
                cfg.topk(topk),
                options,
                &out,
            )
        }
    }
}

fn to_ratio_array(v: Vec<f64>) -> Result<[f64; 4], CliError> {
    <[f64; 4]>::try_from(v)
        .map_err(|v| CliError::Usage(format!("--ratios needs exactly 4 values, got {}", v.len())))
}
