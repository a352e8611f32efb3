//! Implementations of the pipeline subcommands.
//!
//! Every function returns the one-line machine summary for stdout; human
//! detail goes to stderr along the way.

use std::path::{Path, PathBuf};

use charseg::corpus::{
    self, read_bio_file, read_documents, split_corpus, to_bio, write_bio_file, write_documents_jsonl,
    BioRecord, LabeledSequence, MarkedDocument, SynthConfig,
};
use charseg::crf::{self, crf_train, crf_train_with_report, CrfModel, TrainOptions};
use charseg::embed::{format_nn_report, nearest_neighbors, trace_hidden};
use charseg::eval::{extract_segments, learning_curve, segment_prf, CurvePoint, PrfReport};
use charseg::features::{
    featurize_dataset, featurize_sequence, read_feature_file, write_feature_file,
};
use charseg::srn::{self, train_lm_with_report, SrnConfig, SrnModel, StopReason};
use charseg::{BioTag, Segment};

use crate::error::{io_ctx, CellError, CliError};
use crate::formats::{read_tags_file, write_tags_file};
use crate::summary::Summary;

/// How a dataset is featurized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSet {
    /// Character n-grams only.
    Baseline,
    /// N-grams plus top-K language-model indicators.
    Augmented,
}

// ---------------------------------------------------------------- inputs --

fn is_bio(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bio")
}

/// Documents from a directory or JSONL file (markup formats).
fn load_docs(path: &Path) -> Result<Vec<MarkedDocument>, CliError> {
    Ok(read_documents(path)?)
}

/// Character sequences with optional tags, from a BIO dump or a markup
/// source.
fn load_records(path: &Path) -> Result<Vec<BioRecord>, CliError> {
    if is_bio(path) {
        Ok(read_bio_file(path)?)
    } else {
        Ok(load_docs(path)?.iter().map(|d| BioRecord::labeled(&to_bio(d))).collect())
    }
}

/// Plain unlabeled texts for language-model work.
fn load_texts(path: &Path) -> Result<Vec<String>, CliError> {
    Ok(load_records(path)?.into_iter().map(|r| r.chars.into_iter().collect()).collect())
}

/// Fully labeled sequences; errors if any sequence lacks tags.
fn load_labeled(path: &Path) -> Result<Vec<LabeledSequence>, CliError> {
    load_records(path)?
        .iter()
        .map(|r| {
            r.to_labeled().map_err(|e| {
                CliError::Io(format!("{}: {e}", path.display()))
            })
        })
        .collect()
}

// -------------------------------------------------------------- commands --

pub fn ingest(
    input: &Path,
    out: &Path,
    split_dir: Option<&Path>,
    ratios: [f64; 4],
    seed: u64,
) -> Result<Summary, CliError> {
    let docs = load_docs(input)?;
    let records: Vec<BioRecord> = docs.iter().map(|d| BioRecord::labeled(&to_bio(d))).collect();
    write_bio_file(out, &records)?;
    let total_chars: usize = docs.iter().map(|d| d.char_len()).sum();

    // Split assignments: shuffled character-mass split when there is enough
    // data, otherwise everything is "train".
    let assignments: Vec<(String, &'static str, usize)> = if docs.len() >= 4 {
        let splits = split_corpus(docs.clone(), ratios, seed)?;
        let mut rows = Vec::with_capacity(docs.len());
        for (name, part) in splits.splits() {
            for doc in part {
                rows.push((doc.id.clone(), name, doc.char_len()));
            }
        }
        if let Some(dir) = split_dir {
            std::fs::create_dir_all(dir).map_err(io_ctx("create", dir))?;
            for (name, part) in splits.splits() {
                let recs: Vec<BioRecord> = part
                    .iter()
                    .map(|d| {
                        let seq = to_bio(d);
                        if name == "unlabeled" {
                            BioRecord::unlabeled(seq.chars)
                        } else {
                            BioRecord::labeled(&seq)
                        }
                    })
                    .collect();
                write_bio_file(dir.join(format!("{name}.bio")), &recs)?;
            }
        }
        rows
    } else {
        if split_dir.is_some() {
            return Err(CliError::Usage(format!(
                "--split-dir needs at least 4 documents, got {}",
                docs.len()
            )));
        }
        docs.iter().map(|d| (d.id.clone(), "train", d.char_len())).collect()
    };

    let manifest = match split_dir {
        Some(dir) => dir.join("manifest.tsv"),
        None => manifest_path(out),
    };
    let mut text = String::new();
    for (id, split, chars) in &assignments {
        text.push_str(&format!("{id}\t{split}\t{chars}\n"));
    }
    std::fs::write(&manifest, text).map_err(io_ctx("write", &manifest))?;

    Ok(Summary::new("ingest")
        .push("documents", docs.len())
        .push("chars", total_chars)
        .push("out", out.display())
        .push("manifest", manifest.display()))
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.tsv");
    out.with_file_name(name)
}

pub fn synth(
    docs: usize,
    block_rate: Option<f64>,
    inline_rate: Option<f64>,
    seed: u64,
    out: &Path,
) -> Result<Summary, CliError> {
    let mut config = SynthConfig { n_docs: docs, ..SynthConfig::default() };
    if let Some(r) = block_rate {
        config.block_rate = r;
    }
    if let Some(r) = inline_rate {
        config.inline_rate = r;
    }
    let docs = corpus::generate_synthetic(&config, seed)?;
    write_documents_jsonl(out, &docs)?;
    let chars: usize = docs.iter().map(|d| d.char_len()).sum();
    Ok(Summary::new("synth")
        .push("documents", docs.len())
        .push("chars", chars)
        .push("seed", seed)
        .push("out", out.display()))
}

pub fn train_lm(
    train: &Path,
    valid: &Path,
    config: SrnConfig,
    out: &Path,
) -> Result<Summary, CliError> {
    let train_texts = load_texts(train)?;
    let valid_texts = load_texts(valid)?;
    let (model, report) = train_lm_with_report(&train_texts, &config, &valid_texts)?;
    srn::save_file(&model, out)?;

    eprintln!("iter    lr        train-bits  valid-bits  halving");
    for it in &report.iterations {
        eprintln!(
            "{:<7} {:<9.6} {:<11.6} {:<11.6} {}",
            it.iteration, it.learning_rate, it.train_entropy_bits, it.validation_entropy_bits,
            it.halving
        );
    }
    let last = report.iterations.last().expect("training runs at least one iteration");
    let stop = match report.stop {
        StopReason::Converged { .. } => "converged",
        StopReason::MaxIterations => "max-iterations",
    };
    Ok(Summary::new("train-lm")
        .push("iterations", report.iterations.len())
        .push("stop", stop)
        .push("train_bits", format_args!("{:.6}", last.train_entropy_bits))
        .push("valid_bits", format_args!("{:.6}", last.validation_entropy_bits))
        .push("hidden", model.hidden_units())
        .push("vocab", model.input_size())
        .push("out", out.display()))
}

pub fn perplexity(model: &Path, input: &Path) -> Result<Summary, CliError> {
    let model = srn::load_file(model)?;
    let texts = load_texts(input)?;
    let value = srn::perplexity_many(&model, &texts)?;
    let chars: usize = texts.iter().map(|t| t.chars().count()).sum();
    Ok(Summary::new("perplexity")
        .push("value", format_args!("{value:.6}"))
        .push("sequences", texts.len())
        .push("chars", chars))
}

#[allow(clippy::too_many_arguments)]
pub fn nn(
    model: &Path,
    input: &Path,
    stride: usize,
    prefix: usize,
    neighbors: usize,
    out: Option<&Path>,
) -> Result<Summary, CliError> {
    let model = srn::load_file(model)?;
    let text = load_texts(input)?.join("\n");
    let trace = trace_hidden(&model, &text)?;
    let prefix = prefix.min(trace.len());
    let queries = nearest_neighbors(&trace, stride, prefix, neighbors)?;
    let report = format_nn_report(&queries);
    match out {
        Some(path) => std::fs::write(path, &report).map_err(io_ctx("write", path))?,
        None => eprint!("{report}"),
    }
    let mut summary = Summary::new("nn")
        .push("queries", queries.len())
        .push("stride", stride)
        .push("prefix", prefix)
        .push("neighbors", neighbors);
    if let Some(path) = out {
        summary = summary.push("out", path.display());
    }
    Ok(summary)
}

pub fn featurize(
    input: &Path,
    feature_set: FeatureSet,
    lm: Option<&Path>,
    topk: usize,
    out: &Path,
) -> Result<Summary, CliError> {
    let model = match (feature_set, lm) {
        (FeatureSet::Baseline, _) => None,
        (FeatureSet::Augmented, Some(path)) => Some(srn::load_file(path)?),
        (FeatureSet::Augmented, None) => {
            return Err(CliError::Usage(
                "--feature-set augmented requires --lm <model>".into(),
            ))
        }
    };
    let records = load_records(input)?;
    let seqs: Vec<(Vec<char>, Option<Vec<BioTag>>)> =
        records.into_iter().map(|r| (r.chars, r.tags)).collect();
    let k = if model.is_some() { topk } else { 0 };
    let dataset = featurize_dataset(&seqs, model.as_ref(), k)?;
    write_feature_file(out, &dataset)?;
    let rows: usize = dataset.iter().map(Vec::len).sum();
    Ok(Summary::new("featurize")
        .push("sequences", dataset.len())
        .push("rows", rows)
        .push("feature_set", if model.is_some() { "augmented" } else { "baseline" })
        .push("topk", k)
        .push("out", out.display()))
}

pub fn train_crf(input: &Path, options: TrainOptions, out: &Path) -> Result<Summary, CliError> {
    let dataset = read_feature_file(input)?;
    let (model, report) = crf_train_with_report(&dataset, &options)?;
    crf::save_crf_file(&model, out)?;
    eprintln!(
        "objective {:.6} -> {:.6} over {} iterations (converged: {})",
        report.objectives.first().unwrap_or(&f64::NAN),
        report.objectives.last().unwrap_or(&f64::NAN),
        report.iterations,
        report.converged
    );
    Ok(Summary::new("train-crf")
        .push("sequences", dataset.iter().filter(|s| !s.is_empty()).count())
        .push("features", model.n_features())
        .push("iterations", report.iterations)
        .push("converged", report.converged)
        .push("objective", format_args!("{:.6}", report.objectives.last().unwrap_or(&f64::NAN)))
        .push("out", out.display()))
}

pub fn label(model: &Path, input: &Path, out: &Path) -> Result<Summary, CliError> {
    let model = crf::load_crf_file(model)?;
    let dataset = read_feature_file(input)?;
    let mut tags = Vec::with_capacity(dataset.len());
    let mut chars = 0usize;
    for seq in &dataset {
        if seq.is_empty() {
            continue;
        }
        let t = crf::label(&model, seq)?;
        chars += t.len();
        tags.push(t);
    }
    write_tags_file(out, &tags)?;
    Ok(Summary::new("label")
        .push("sequences", tags.len())
        .push("chars", chars)
        .push("out", out.display()))
}

pub fn evaluate(gold: &Path, pred: &Path, out: Option<&Path>) -> Result<Summary, CliError> {
    let gold_seqs = load_labeled(gold)?;
    let pred_tags: Vec<Vec<BioTag>> = if is_bio(pred) {
        load_labeled(pred)?.into_iter().map(|s| s.tags).collect()
    } else {
        read_tags_file(pred)?
    };
    if gold_seqs.len() != pred_tags.len() {
        return Err(CliError::Io(format!(
            "gold has {} sequences but predictions have {}",
            gold_seqs.len(),
            pred_tags.len()
        )));
    }
    for (i, (g, p)) in gold_seqs.iter().zip(&pred_tags).enumerate() {
        if g.chars.len() != p.len() {
            return Err(CliError::Io(format!(
                "sequence {i}: gold has {} characters but prediction has {} tags",
                g.chars.len(),
                p.len()
            )));
        }
    }
    let gold_segs: Vec<Vec<Segment>> =
        gold_seqs.iter().map(|s| extract_segments(&s.tags)).collect();
    let pred_segs: Vec<Vec<Segment>> = pred_tags.iter().map(|t| extract_segments(t)).collect();
    let report = segment_prf(&gold_segs, &pred_segs);

    eprint!("{report}");
    if let Some(path) = out {
        std::fs::write(path, report.to_tsv()).map_err(io_ctx("write", path))?;
    }
    let overall = report.overall();
    let mut summary = Summary::new("evaluate")
        .push("block_f1", format_args!("{:.4}", report.block.f1()))
        .push("inline_f1", format_args!("{:.4}", report.inline.f1()))
        .push("overall_f1", format_args!("{:.4}", overall.f1()))
        .push("gold", overall.gold)
        .push("predicted", overall.predicted)
        .push("matched", overall.matched);
    if let Some(path) = out {
        summary = summary.push("out", path.display());
    }
    Ok(summary)
}

/// The curve's feature sets: baseline n-grams always, plus one augmented
/// set per supplied language model.
pub struct CurveModels {
    pub small: Option<SrnModel>,
    pub large: Option<SrnModel>,
}

#[allow(clippy::too_many_arguments)]
pub fn curve(
    train: &Path,
    dev: &Path,
    fractions: &[f64],
    lm_small: Option<&Path>,
    lm_large: Option<&Path>,
    topk: usize,
    options: TrainOptions,
    out: &Path,
) -> Result<Summary, CliError> {
    let pool = load_labeled(train)?;
    let dev_seqs = load_labeled(dev)?;
    let models = CurveModels {
        small: lm_small.map(srn::load_file).transpose()?,
        large: lm_large.map(srn::load_file).transpose()?,
    };
    let mut feature_sets = vec!["baseline"];
    if models.small.is_some() {
        feature_sets.push("small");
    }
    if models.large.is_some() {
        feature_sets.push("large");
    }

    let model_for = |fs: &str| match fs {
        "small" => models.small.as_ref(),
        "large" => models.large.as_ref(),
        _ => None,
    };
    let points = learning_curve(
        &pool,
        &dev_seqs,
        fractions,
        &feature_sets,
        |fs, prefix| -> Result<CrfModel, CellError> {
            let lm = model_for(fs);
            let k = if lm.is_some() { topk } else { 0 };
            let seqs: Vec<(Vec<char>, Option<Vec<BioTag>>)> = prefix
                .iter()
                .map(|s| (s.chars.clone(), Some(s.tags.clone())))
                .collect();
            let rows = featurize_dataset(&seqs, lm, k)?;
            Ok(crf_train(&rows, &options)?)
        },
        |fs, model, seq| -> Result<Vec<BioTag>, CellError> {
            let lm = model_for(fs);
            let k = if lm.is_some() { topk } else { 0 };
            let rows = featurize_sequence(&seq.chars, None, lm, k)?;
            Ok(crf::label(model, &rows)?)
        },
    )?;

    let mut tsv = String::new();
    for p in &points {
        eprintln!("{}", cell_detail(p));
        tsv.push_str(&p.to_tsv_row());
        tsv.push('\n');
    }
    std::fs::write(out, tsv).map_err(io_ctx("write", out))?;
    Ok(Summary::new("curve")
        .push("rows", points.len())
        .push("fractions", fractions.len())
        .push("feature_sets", feature_sets.len())
        .push("out", out.display()))
}

fn cell_detail(p: &CurvePoint) -> String {
    let PrfReport { block, inline } = p.report;
    format!(
        "fraction={:<5} set={:<9} block_f1={:<7.2} inline_f1={:<7.2} overall_f1={:.2}",
        p.fraction,
        p.feature_set,
        block.f1(),
        inline.f1(),
        p.report.overall().f1()
    )
}
