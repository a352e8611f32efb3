//! Per-character feature extraction for the labeler.
//!
//! The baseline template yields exactly 11 character n-gram features per
//! position: unigrams at offsets −2..+2, bigrams at (−1,0) and (0,+1), the
//! trigram (−1,0,+1), fourgrams (−2..+1) and (−1..+2), and the fivegram
//! (−2..+2). Out-of-range offsets substitute ⟨BOS⟩/⟨EOS⟩ sentinels so row
//! arity never varies. Augmented rows append K binary indicators from the
//! language model's hidden layer.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::corpus::{escape_text, unescape_text, BioTag, CorpusError};
use crate::embed::{topk_binarize, trace_hidden, EmbedError, SrnFeatureBlock};
use crate::par;
use crate::srn::SrnModel;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("position {pos} out of range for a {len}-character text")]
    PosOutOfRange { pos: usize, len: usize },
    #[error("bad feature file at line {line}: {reason}")]
    BadFeatureFile { line: usize, reason: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The feature strings active at one character position, with its gold tag
/// when known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureRow {
    pub position: usize,
    pub features: Vec<String>,
    pub tag: Option<BioTag>,
}

/// Number of features in a baseline row.
pub const BASELINE_ARITY: usize = 11;

const BOS: &str = "\u{27E8}BOS\u{27E9}";
const EOS: &str = "\u{27E8}EOS\u{27E9}";

/// The fixed n-gram template: offset vectors in emission order.
const TEMPLATE: [&[i64]; BASELINE_ARITY] = [
    &[-2],
    &[-1],
    &[0],
    &[1],
    &[2],
    &[-1, 0],
    &[0, 1],
    &[-1, 0, 1],
    &[-2, -1, 0, 1],
    &[-1, 0, 1, 2],
    &[-2, -1, 0, 1, 2],
];

/// The 11 n-gram feature strings at `pos`, named
/// `<order>:<comma-joined-offsets>=<chars>`.
pub fn ngram_features(text: &[char], pos: usize) -> Result<Vec<String>, FeatureError> {
    if pos >= text.len() {
        return Err(FeatureError::PosOutOfRange { pos, len: text.len() });
    }
    let at = |offset: i64| -> Option<char> {
        let i = pos as i64 + offset;
        (0..text.len() as i64).contains(&i).then(|| text[i as usize])
    };
    let mut out = Vec::with_capacity(BASELINE_ARITY);
    for offsets in TEMPLATE {
        let mut name = format!("{}:", offsets.len());
        for (i, &o) in offsets.iter().enumerate() {
            if i > 0 {
                name.push(',');
            }
            name.push_str(&o.to_string());
        }
        name.push('=');
        for &o in offsets {
            match at(o) {
                Some(c) => name.push(c),
                None if o < 0 => name.push_str(BOS),
                None => name.push_str(EOS),
            }
        }
        out.push(name);
    }
    Ok(out)
}

/// Append the K hidden-unit indicators (`srn:<k>=<0|1>`, ranks 1-based) to a
/// baseline row. Zero indicators are kept: every augmented row has the same
/// arity.
pub fn augment_row(mut base: FeatureRow, srn: &SrnFeatureBlock) -> FeatureRow {
    base.features.reserve(srn.k());
    for (i, bit) in srn.bits().iter().enumerate() {
        base.features.push(format!("srn:{}={}", i + 1, u8::from(*bit)));
    }
    base
}

/// Feature rows for one character sequence: baseline n-grams, plus the
/// model's top-K indicators when a model is supplied. Empty input produces
/// an empty row list.
pub fn featurize_sequence(
    chars: &[char],
    tags: Option<&[BioTag]>,
    model: Option<&SrnModel>,
    k: usize,
) -> Result<Vec<FeatureRow>, FeatureError> {
    if chars.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(tags) = tags {
        if tags.len() != chars.len() {
            return Err(FeatureError::PosOutOfRange { pos: tags.len(), len: chars.len() });
        }
    }
    let blocks: Option<Vec<SrnFeatureBlock>> = match model {
        Some(model) => {
            let text: String = chars.iter().collect();
            let trace = trace_hidden(model, &text)?;
            let mut blocks = Vec::with_capacity(trace.len());
            for t in 0..trace.len() {
                blocks.push(topk_binarize(trace.state(t), k)?);
            }
            Some(blocks)
        }
        None => None,
    };
    let mut rows = Vec::with_capacity(chars.len());
    for pos in 0..chars.len() {
        let mut row = FeatureRow {
            position: pos,
            features: ngram_features(chars, pos)?,
            tag: tags.map(|t| t[pos]),
        };
        if let Some(blocks) = &blocks {
            row = augment_row(row, &blocks[pos]);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// [`featurize_sequence`] over many sequences, in parallel, preserving input
/// order.
pub fn featurize_dataset(
    seqs: &[(Vec<char>, Option<Vec<BioTag>>)],
    model: Option<&SrnModel>,
    k: usize,
) -> Result<Vec<Vec<FeatureRow>>, FeatureError> {
    par::map_collect(seqs, |(chars, tags)| {
        featurize_sequence(chars, tags.as_deref(), model, k)
    })
    .into_iter()
    .collect()
}

/// Write sequences of rows as a CoNLL-style column file: tab-separated
/// escaped feature strings, the final column the tag (`?` when unlabeled),
/// blank line between sequences. Empty sequences are dropped.
pub fn write_features<W: Write>(
    mut w: W,
    dataset: &[Vec<FeatureRow>],
) -> Result<(), FeatureError> {
    let mut first = true;
    for seq in dataset.iter().filter(|s| !s.is_empty()) {
        if !first {
            writeln!(w)?;
        }
        first = false;
        for row in seq {
            for feat in &row.features {
                write!(w, "{}\t", escape_text(feat))?;
            }
            match row.tag {
                Some(tag) => writeln!(w, "{}", tag.as_str())?,
                None => writeln!(w, "?")?,
            }
        }
    }
    Ok(())
}

pub fn write_feature_file(
    path: impl AsRef<Path>,
    dataset: &[Vec<FeatureRow>],
) -> Result<(), FeatureError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_features(&mut w, dataset)?;
    w.flush()?;
    Ok(())
}

/// Read a feature file back into row sequences.
pub fn read_features<R: Read>(r: R) -> Result<Vec<Vec<FeatureRow>>, FeatureError> {
    let reader = BufReader::new(r);
    let mut dataset = Vec::new();
    let mut seq: Vec<FeatureRow> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.is_empty() {
            if !seq.is_empty() {
                dataset.push(std::mem::take(&mut seq));
            }
            continue;
        }
        let mut cols: Vec<&str> = line.split('\t').collect();
        let tag_col = cols.pop().expect("split yields at least one column");
        if cols.is_empty() {
            return Err(FeatureError::BadFeatureFile {
                line: lineno,
                reason: "row holds a tag but no features".into(),
            });
        }
        let tag = match tag_col {
            "?" => None,
            t => Some(BioTag::parse(t).ok_or_else(|| FeatureError::BadFeatureFile {
                line: lineno,
                reason: format!("unknown tag {t:?}"),
            })?),
        };
        let features = cols
            .into_iter()
            .map(|c| {
                unescape_text(c).map_err(|e| FeatureError::BadFeatureFile {
                    line: lineno,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        seq.push(FeatureRow { position: seq.len(), features, tag });
    }
    if !seq.is_empty() {
        dataset.push(seq);
    }
    Ok(dataset)
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<Vec<Vec<FeatureRow>>, FeatureError> {
    read_features(File::open(path)?)
}
