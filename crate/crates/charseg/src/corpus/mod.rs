//! Corpus ingestion and preparation.
//!
//! Documents arrive as UTF-8 text with lightweight markup (`<pre><code>…
//! </code></pre>` around code blocks, bare `<code>…</code>` around inline
//! code). This module strips the markup into [`MarkedDocument`]s, converts
//! them to BIO-labeled character sequences, builds character vocabularies,
//! splits corpora into disjoint subsets, and can generate a synthetic
//! mixed-domain corpus for desk-scale experiments.

mod bio_io;
mod markup;
mod synth;

pub use bio_io::{
    escape_text, read_bio, read_bio_file, read_documents, unescape_text, write_bio,
    write_bio_file, write_documents_jsonl, BioRecord,
};
pub use markup::{parse_markup, serialize_markup};
pub use synth::{generate_synthetic, CharDistribution, SynthConfig};

use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Errors from corpus construction and ingestion.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed markup at byte {offset}: {reason}")]
    MalformedMarkup { offset: usize, reason: String },
    #[error("empty corpus: no characters in any input text")]
    EmptyCorpus,
    #[error("insufficient data: need at least {need} documents, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("duplicate document id {0:?}")]
    DuplicateDocId(String),
    #[error("split ratios must sum to 1, got {0}")]
    BadRatios(f64),
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("bad BIO dump at line {line}: {reason}")]
    BadBioDump { line: usize, reason: String },
    #[error("bad JSON document record at line {line}: {message}")]
    BadJsonl { line: usize, message: String },
    #[error("document {id}: {source}")]
    Doc {
        id: String,
        #[source]
        source: Box<CorpusError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Kind of code segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SegmentLabel {
    Block,
    Inline,
}

impl fmt::Display for SegmentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmentLabel::Block => write!(f, "BLOCK"),
            SegmentLabel::Inline => write!(f, "INLINE"),
        }
    }
}

/// Half-open character span `[start, end)` carrying a segment label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub label: SegmentLabel,
}

impl Segment {
    pub fn new(start: usize, end: usize, label: SegmentLabel) -> Self {
        debug_assert!(start < end, "segment must be nonempty");
        Segment { start, end, label }
    }
}

/// Per-character BIO tag. `B-X` opens a segment of kind X, `I-X` continues
/// it, `O` is outside any segment.
///
/// The discriminant order is fixed: it is the CRF label index and the
/// serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BioTag {
    Outside,
    BeginBlock,
    InsideBlock,
    BeginInline,
    InsideInline,
}

/// All tags in label-index order.
pub const BIO_TAGS: [BioTag; 5] = [
    BioTag::Outside,
    BioTag::BeginBlock,
    BioTag::InsideBlock,
    BioTag::BeginInline,
    BioTag::InsideInline,
];

impl BioTag {
    /// Label index in the fixed order `O, B-BLOCK, I-BLOCK, B-INLINE, I-INLINE`.
    pub fn index(self) -> usize {
        match self {
            BioTag::Outside => 0,
            BioTag::BeginBlock => 1,
            BioTag::InsideBlock => 2,
            BioTag::BeginInline => 3,
            BioTag::InsideInline => 4,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        BIO_TAGS.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BioTag::Outside => "O",
            BioTag::BeginBlock => "B-BLOCK",
            BioTag::InsideBlock => "I-BLOCK",
            BioTag::BeginInline => "B-INLINE",
            BioTag::InsideInline => "I-INLINE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "O" => Some(BioTag::Outside),
            "B-BLOCK" => Some(BioTag::BeginBlock),
            "I-BLOCK" => Some(BioTag::InsideBlock),
            "B-INLINE" => Some(BioTag::BeginInline),
            "I-INLINE" => Some(BioTag::InsideInline),
            _ => None,
        }
    }

    /// Segment kind for `B-`/`I-` tags, `None` for `O`.
    pub fn label(self) -> Option<SegmentLabel> {
        match self {
            BioTag::Outside => None,
            BioTag::BeginBlock | BioTag::InsideBlock => Some(SegmentLabel::Block),
            BioTag::BeginInline | BioTag::InsideInline => Some(SegmentLabel::Inline),
        }
    }

    pub fn is_begin(self) -> bool {
        matches!(self, BioTag::BeginBlock | BioTag::BeginInline)
    }

    pub fn is_inside(self) -> bool {
        matches!(self, BioTag::InsideBlock | BioTag::InsideInline)
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

/// A document with markup stripped and its tagged regions recorded as
/// character-offset segments.
///
/// Invariants: segments are non-overlapping, sorted by start, and each spans
/// `0 <= start < end <= text chars`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedDocument {
    pub id: String,
    pub text: String,
    pub segments: Vec<Segment>,
}

impl MarkedDocument {
    /// Build a document, validating the segment invariants.
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        segments: Vec<Segment>,
    ) -> Result<Self, CorpusError> {
        let doc = MarkedDocument { id: id.into(), text: text.into(), segments };
        doc.validate()?;
        Ok(doc)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let len = self.char_len();
        let mut prev_end = 0usize;
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.start >= seg.end || seg.end > len {
                return Err(CorpusError::InvalidDocument(format!(
                    "segment {i} spans {}..{} in a {len}-char text",
                    seg.start, seg.end
                )));
            }
            if i > 0 && seg.start < prev_end {
                return Err(CorpusError::InvalidDocument(format!(
                    "segment {i} overlaps or is out of order (starts at {} before {prev_end})",
                    seg.start
                )));
            }
            prev_end = seg.end;
        }
        Ok(())
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn chars(&self) -> Vec<char> {
        self.text.chars().collect()
    }
}

/// A character sequence with aligned BIO tags.
///
/// Invariants: `chars` and `tags` have equal length and every `I-X` tag is
/// preceded by `B-X` or `I-X`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSequence {
    pub chars: Vec<char>,
    pub tags: Vec<BioTag>,
}

impl LabeledSequence {
    /// Build a sequence, validating length agreement and BIO well-formedness.
    pub fn new(chars: Vec<char>, tags: Vec<BioTag>) -> Result<Self, CorpusError> {
        if chars.len() != tags.len() {
            return Err(CorpusError::InvalidDocument(format!(
                "{} chars vs {} tags",
                chars.len(),
                tags.len()
            )));
        }
        let mut prev: Option<BioTag> = None;
        for (i, &tag) in tags.iter().enumerate() {
            if tag.is_inside() {
                let ok = prev.is_some_and(|p| p.label() == tag.label());
                if !ok {
                    return Err(CorpusError::InvalidDocument(format!(
                        "ill-formed BIO: {tag} at position {i} has no open {} segment",
                        tag.label().expect("inside tag has a label")
                    )));
                }
            }
            prev = Some(tag);
        }
        Ok(LabeledSequence { chars, tags })
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn text(&self) -> String {
        self.chars.iter().collect()
    }
}

/// Convert a marked document to a BIO-labeled character sequence.
///
/// Characters inside a segment get `B-X` at the first position and `I-X`
/// afterwards; everything else is `O`. Newlines are ordinary characters.
pub fn to_bio(doc: &MarkedDocument) -> LabeledSequence {
    let chars = doc.chars();
    let mut tags = vec![BioTag::Outside; chars.len()];
    for seg in &doc.segments {
        for (i, tag) in tags[seg.start..seg.end].iter_mut().enumerate() {
            *tag = match (seg.label, i) {
                (SegmentLabel::Block, 0) => BioTag::BeginBlock,
                (SegmentLabel::Block, _) => BioTag::InsideBlock,
                (SegmentLabel::Inline, 0) => BioTag::BeginInline,
                (SegmentLabel::Inline, _) => BioTag::InsideInline,
            };
        }
    }
    LabeledSequence { chars, tags }
}

/// Character vocabulary with a reserved UNK index.
///
/// Listed characters occupy indices `0..size()-1` in first-occurrence order;
/// UNK is the last index. `size()` is the SRN input dimensionality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl CharVocab {
    pub fn from_chars(chars: Vec<char>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(chars.len());
        for (i, &c) in chars.iter().enumerate() {
            if index.insert(c, i).is_some() {
                return Err(CorpusError::InvalidDocument(format!(
                    "duplicate vocabulary character {c:?}"
                )));
            }
        }
        Ok(CharVocab { chars, index })
    }

    /// Total symbol count including UNK (the SRN input dimensionality).
    pub fn size(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn unk_index(&self) -> usize {
        self.chars.len()
    }

    /// Index of `c`, or the UNK index for characters not in the vocabulary.
    pub fn index_of(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or_else(|| self.unk_index())
    }

    /// Listed characters in index order (UNK excluded).
    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        text.chars().map(|c| self.index_of(c)).collect()
    }
}

/// Build a vocabulary over every character occurring in `texts`, in
/// first-occurrence order, plus UNK.
pub fn build_vocab<S: AsRef<str>>(texts: &[S]) -> Result<CharVocab, CorpusError> {
    let mut chars = Vec::new();
    let mut index = HashMap::new();
    for text in texts {
        for c in text.as_ref().chars() {
            if !index.contains_key(&c) {
                index.insert(c, chars.len());
                chars.push(c);
            }
        }
    }
    if chars.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(CharVocab { chars, index })
}

/// Disjoint corpus subsets: unlabeled language-model text, labeled training
/// data, development set, and test set.
#[derive(Debug, Clone)]
pub struct CorpusSplits {
    pub unlabeled: Vec<MarkedDocument>,
    pub train: Vec<MarkedDocument>,
    pub dev: Vec<MarkedDocument>,
    pub test: Vec<MarkedDocument>,
}

impl CorpusSplits {
    pub fn char_counts(&self) -> [usize; 4] {
        [
            char_count(&self.unlabeled),
            char_count(&self.train),
            char_count(&self.dev),
            char_count(&self.test),
        ]
    }

    pub fn splits(&self) -> [(&'static str, &[MarkedDocument]); 4] {
        [
            ("unlabeled", self.unlabeled.as_slice()),
            ("train", self.train.as_slice()),
            ("dev", self.dev.as_slice()),
            ("test", self.test.as_slice()),
        ]
    }
}

fn char_count(docs: &[MarkedDocument]) -> usize {
    docs.iter().map(MarkedDocument::char_len).sum()
}

/// Shuffle documents with a seeded PRNG and partition them into four splits
/// whose cumulative character counts come closest to `ratios`.
///
/// The split unit is the document, so no sequence straddles splits.
/// Deterministic per seed.
pub fn split_corpus(
    docs: Vec<MarkedDocument>,
    ratios: [f64; 4],
    seed: u64,
) -> Result<CorpusSplits, CorpusError> {
    if docs.len() < 4 {
        return Err(CorpusError::InsufficientData { need: 4, got: docs.len() });
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || ratios.iter().any(|r| *r < 0.0) {
        return Err(CorpusError::BadRatios(sum));
    }
    {
        let mut seen = HashMap::new();
        for doc in &docs {
            if seen.insert(doc.id.clone(), ()).is_some() {
                return Err(CorpusError::DuplicateDocId(doc.id.clone()));
            }
        }
    }

    let mut shuffled = docs;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let total: usize = char_count(&shuffled);
    let mut boundaries = [0.0; 3];
    let mut cum_ratio = 0.0;
    for (b, r) in boundaries.iter_mut().zip(&ratios) {
        cum_ratio += r;
        *b = cum_ratio * total as f64;
    }

    let mut parts: [Vec<MarkedDocument>; 4] = Default::default();
    let mut cum = 0usize;
    let mut part = 0usize;
    for doc in shuffled {
        let len = doc.char_len();
        // Advance to the next split once adding this document would land
        // farther from the target boundary than stopping here.
        while part < 3 {
            let b = boundaries[part];
            let here = (cum as f64 - b).abs();
            let with_doc = ((cum + len) as f64 - b).abs();
            if with_doc <= here {
                break;
            }
            part += 1;
        }
        cum += len;
        parts[part].push(doc);
    }
    let [unlabeled, train, dev, test] = parts;
    Ok(CorpusSplits { unlabeled, train, dev, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str, segments: Vec<Segment>) -> MarkedDocument {
        MarkedDocument::new(id, text, segments).unwrap()
    }

    #[test]
    fn to_bio_block_example() {
        let d = doc(
            "d",
            "just\npublic ",
            vec![Segment::new(5, 12, SegmentLabel::Block)],
        );
        let seq = to_bio(&d);
        let expect = [
            "O", "O", "O", "O", "O", "B-BLOCK", "I-BLOCK", "I-BLOCK", "I-BLOCK", "I-BLOCK",
            "I-BLOCK", "I-BLOCK",
        ];
        let got: Vec<&str> = seq.tags.iter().map(|t| t.as_str()).collect();
        assert_eq!(got, expect);
        assert_eq!(seq.len(), d.char_len());
    }

    #[test]
    fn to_bio_inline_example() {
        let d = doc("d", "be Blah.A.Ho", vec![Segment::new(3, 9, SegmentLabel::Inline)]);
        let seq = to_bio(&d);
        let expect = [
            "O", "O", "O", "B-INLINE", "I-INLINE", "I-INLINE", "I-INLINE", "I-INLINE", "I-INLINE",
            "O", "O", "O",
        ];
        let got: Vec<&str> = seq.tags.iter().map(|t| t.as_str()).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn to_bio_empty_document() {
        let d = doc("d", "", vec![]);
        let seq = to_bio(&d);
        assert!(seq.is_empty());
    }

    #[test]
    fn to_bio_adjacent_segments_restart() {
        let d = doc(
            "d",
            "abcd",
            vec![
                Segment::new(0, 2, SegmentLabel::Block),
                Segment::new(2, 4, SegmentLabel::Block),
            ],
        );
        let seq = to_bio(&d);
        let got: Vec<&str> = seq.tags.iter().map(|t| t.as_str()).collect();
        assert_eq!(got, ["B-BLOCK", "I-BLOCK", "B-BLOCK", "I-BLOCK"]);
    }

    #[test]
    fn vocab_first_occurrence_order() {
        let v = build_vocab(&["ab", "ba"]).unwrap();
        assert_eq!(v.chars(), &['a', 'b']);
        assert_eq!(v.size(), 3);
        assert_eq!(v.unk_index(), 2);
        assert_eq!(v.index_of('a'), 0);
        assert_eq!(v.index_of('z'), 2);
    }

    #[test]
    fn vocab_single_text() {
        let v = build_vocab(&["a"]).unwrap();
        assert_eq!(v.size(), 2);
    }

    #[test]
    fn vocab_repetition_collapses() {
        let v = build_vocab(&["abcabcabc"]).unwrap();
        assert_eq!(v.size(), 4);
    }

    #[test]
    fn vocab_empty_corpus_errors() {
        assert!(matches!(build_vocab(&["", ""]), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn vocab_idempotent() {
        let texts = ["hello world", "second text"];
        let a = build_vocab(&texts).unwrap();
        let b = build_vocab(&texts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_equal_docs_match_ratios() {
        let docs: Vec<_> = (0..100).map(|i| doc(&format!("d{i}"), "0123456789", vec![])).collect();
        let s = split_corpus(docs, [0.4, 0.4, 0.1, 0.1], 7).unwrap();
        assert_eq!(s.unlabeled.len(), 40);
        assert_eq!(s.train.len(), 40);
        assert_eq!(s.dev.len(), 10);
        assert_eq!(s.test.len(), 10);
    }

    #[test]
    fn split_deterministic() {
        let make = || (0..20).map(|i| doc(&format!("d{i}"), &"x".repeat(i + 1), vec![])).collect();
        let a = split_corpus(make(), [0.5, 0.3, 0.1, 0.1], 3).unwrap();
        let b = split_corpus(make(), [0.5, 0.3, 0.1, 0.1], 3).unwrap();
        for (x, y) in a.splits().iter().zip(b.splits().iter()) {
            assert_eq!(x.1, y.1);
        }
    }

    #[test]
    fn split_too_few_docs() {
        let docs = vec![doc("a", "x", vec![]), doc("b", "y", vec![])];
        assert!(matches!(
            split_corpus(docs, [0.25, 0.25, 0.25, 0.25], 0),
            Err(CorpusError::InsufficientData { .. })
        ));
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let docs: Vec<_> = (0..4).map(|i| doc(&format!("d{i}"), "x", vec![])).collect();
        assert!(matches!(
            split_corpus(docs, [0.5, 0.5, 0.5, 0.5], 0),
            Err(CorpusError::BadRatios(_))
        ));
    }

    #[test]
    fn split_rejects_duplicate_ids() {
        let docs: Vec<_> = (0..4).map(|_| doc("same", "x", vec![])).collect();
        assert!(matches!(
            split_corpus(docs, [0.25, 0.25, 0.25, 0.25], 0),
            Err(CorpusError::DuplicateDocId(_))
        ));
    }

    #[test]
    fn labeled_sequence_rejects_orphan_inside() {
        let r = LabeledSequence::new(
            vec!['a', 'b'],
            vec![BioTag::Outside, BioTag::InsideBlock],
        );
        assert!(r.is_err());
        let ok = LabeledSequence::new(
            vec!['a', 'b'],
            vec![BioTag::BeginBlock, BioTag::InsideBlock],
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn document_invariants_enforced() {
        assert!(MarkedDocument::new("d", "abc", vec![Segment { start: 2, end: 2, label: SegmentLabel::Block }]).is_err());
        assert!(MarkedDocument::new("d", "abc", vec![Segment { start: 1, end: 9, label: SegmentLabel::Block }]).is_err());
        let overlapping = vec![
            Segment { start: 0, end: 2, label: SegmentLabel::Block },
            Segment { start: 1, end: 3, label: SegmentLabel::Inline },
        ];
        assert!(MarkedDocument::new("d", "abc", overlapping).is_err());
    }
}
