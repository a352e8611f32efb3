//! Synthetic mixed-domain corpus: English-like filler prose with embedded
//! code segments whose character statistics differ from the prose. Ground
//! truth segment spans are recorded exactly, so generated corpora double as
//! labeled data.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, MarkedDocument, Segment, SegmentLabel};
use crate::par;

/// A weighted distribution over characters.
#[derive(Debug, Clone, PartialEq)]
pub struct CharDistribution {
    chars: Vec<char>,
    weights: Vec<f64>,
}

impl CharDistribution {
    pub fn new(chars: Vec<char>, weights: Vec<f64>) -> Result<Self, CorpusError> {
        if chars.len() != weights.len() {
            return Err(CorpusError::Config(format!(
                "{} chars but {} weights",
                chars.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(CorpusError::Config("negative or non-finite weight".into()));
        }
        let live = chars
            .iter()
            .zip(&weights)
            .filter(|(_, w)| **w > 0.0)
            .count();
        if live < 2 {
            return Err(CorpusError::Config(format!(
                "degenerate distribution: {live} characters carry positive weight, need at least 2"
            )));
        }
        Ok(CharDistribution { chars, weights })
    }

    pub fn uniform(chars: &str) -> Result<Self, CorpusError> {
        let chars: Vec<char> = chars.chars().collect();
        let weights = vec![1.0; chars.len()];
        Self::new(chars, weights)
    }

    /// Rank-weighted distribution: the i-th character gets weight 1/(i+2),
    /// so earlier characters dominate the way frequent letters do in text.
    pub fn ranked(chars: &str) -> Result<Self, CorpusError> {
        let chars: Vec<char> = chars.chars().collect();
        let weights = (0..chars.len()).map(|i| 1.0 / (i as f64 + 2.0)).collect();
        Self::new(chars, weights)
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(self.weights.iter().copied()).expect("weights validated on construction")
    }
}

/// Configuration for [`generate_synthetic`].
///
/// `block_rate` and `inline_rate` are the per-document probabilities that a
/// document carries at least one segment of that kind. `noise_rate` is the
/// probability that a prose word is replaced by an unmarked code-like token
/// (irreducible ambiguity outside segments); `code_prose_mix` is the
/// probability that a token inside a code block is drawn from the prose
/// distribution (ambiguity inside segments). `quote_rate` is the probability
/// that an indented paragraph is an unmarked prose aside instead of a code
/// block, so indentation alone does not identify blocks.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub prose: CharDistribution,
    pub code: CharDistribution,
    pub block_rate: f64,
    pub inline_rate: f64,
    pub noise_rate: f64,
    pub code_prose_mix: f64,
    pub quote_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_docs: 100,
            prose: CharDistribution::ranked("etaoinsrhldcumfpgwybvkxjqz")
                .expect("default prose distribution is valid"),
            code: CharDistribution::ranked("().;=_{}[]adr0t1xnsef2b9+-*&%!|>\"'")
                .expect("default code distribution is valid"),
            block_rate: 0.5,
            inline_rate: 0.5,
            noise_rate: 0.05,
            code_prose_mix: 0.35,
            quote_rate: 0.0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), CorpusError> {
        for (name, rate) in [
            ("block_rate", self.block_rate),
            ("inline_rate", self.inline_rate),
            ("noise_rate", self.noise_rate),
            ("code_prose_mix", self.code_prose_mix),
            ("quote_rate", self.quote_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) || rate.is_nan() {
                return Err(CorpusError::Config(format!("{name} must lie in [0,1], got {rate}")));
            }
        }
        Ok(())
    }
}

// Word-length ranges (chars), inclusive. Code tokens inside blocks run long
// (full expressions); quoted snippets and unmarked noise stay short
// (identifiers), so run length separates the classes, not just character
// statistics.
const PROSE_WORD: (usize, usize) = (2, 8);
const CODE_TOKEN: (usize, usize) = (5, 9);
const NOISE_TOKEN: (usize, usize) = (2, 5);
const QUOTE_SNIPPET: (usize, usize) = (2, 4);
const INLINE_TOKEN: (usize, usize) = (6, 12);

/// Generate `config.n_docs` documents. Deterministic per seed, independent
/// of thread count: each document derives its own generator from a seed
/// drawn sequentially up front.
pub fn generate_synthetic(
    config: &SynthConfig,
    seed: u64,
) -> Result<Vec<MarkedDocument>, CorpusError> {
    config.validate()?;
    // Surface degenerate distributions before any sampling.
    let _ = (config.prose.sampler(), config.code.sampler());

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let doc_seeds: Vec<u64> = (0..config.n_docs).map(|_| master.gen()).collect();

    Ok(par::map_indices(config.n_docs, |i| {
        let rng = ChaCha8Rng::seed_from_u64(doc_seeds[i]);
        gen_doc(format!("synth-{i:05}"), rng, config)
    }))
}

struct DocWriter {
    text: String,
    chars: usize,
    segments: Vec<Segment>,
}

impl DocWriter {
    fn push_str(&mut self, s: &str) {
        self.text.push_str(s);
        self.chars += s.chars().count();
    }

    fn push_word(&mut self, rng: &mut ChaCha8Rng, dist: &CharDistribution, len: (usize, usize)) {
        let sampler = dist.sampler();
        let n = rng.gen_range(len.0..=len.1);
        for _ in 0..n {
            self.text.push(dist.chars[sampler.sample(rng)]);
        }
        self.chars += n;
    }
}

fn gen_doc(id: String, mut rng: ChaCha8Rng, config: &SynthConfig) -> MarkedDocument {
    let n_blocks = if rng.gen_bool(config.block_rate) { 1 + rng.gen_range(0..3) } else { 0 };
    let n_inlines = if rng.gen_bool(config.inline_rate) { 1 + rng.gen_range(0..3) } else { 0 };
    let n_paragraphs = rng.gen_range(2..=5);
    let sent_counts: Vec<usize> = (0..n_paragraphs).map(|_| rng.gen_range(2..=5)).collect();
    let total_sents: usize = sent_counts.iter().sum();

    let mut inlines_per_sent = vec![0usize; total_sents];
    for _ in 0..n_inlines {
        inlines_per_sent[rng.gen_range(0..total_sents)] += 1;
    }
    // One indented item per paragraph gap at most, so every item is flanked
    // by prose: choose distinct gaps by partial shuffle.
    let mut blocks_per_gap = vec![0usize; n_paragraphs];
    let mut gaps: Vec<usize> = (0..n_paragraphs).collect();
    for i in 0..n_blocks.min(n_paragraphs) {
        let j = rng.gen_range(i..n_paragraphs);
        gaps.swap(i, j);
        blocks_per_gap[gaps[i]] = 1;
    }

    let mut w = DocWriter { text: String::new(), chars: 0, segments: Vec::new() };
    let mut sent = 0usize;
    for p in 0..n_paragraphs {
        for s in 0..sent_counts[p] {
            let n_words = rng.gen_range(4..=9);
            let mut inline_at = vec![0usize; n_words];
            for _ in 0..inlines_per_sent[sent] {
                inline_at[rng.gen_range(0..n_words)] += 1;
            }
            for (word, &inlines_here) in inline_at.iter().enumerate() {
                for _ in 0..inlines_here {
                    let start = w.chars;
                    w.push_word(&mut rng, &config.code, INLINE_TOKEN);
                    w.segments.push(Segment::new(start, w.chars, SegmentLabel::Inline));
                    w.push_str(" ");
                }
                if rng.gen_bool(config.noise_rate) {
                    w.push_word(&mut rng, &config.code, NOISE_TOKEN);
                } else {
                    w.push_word(&mut rng, &config.prose, PROSE_WORD);
                }
                if word + 1 < n_words {
                    w.push_str(" ");
                }
            }
            w.push_str(if s + 1 < sent_counts[p] { ". " } else { ".\n" });
            sent += 1;
        }
        for b in 0..blocks_per_gap[p] {
            // Blank line between stacked items, so adjacent segments stay
            // textually distinguishable from continuation lines.
            if b > 0 {
                w.push_str("\n");
            }
            // An indented paragraph is either a code block or an unmarked
            // prose aside of the same shape; only the content differs.
            let is_quote = rng.gen_bool(config.quote_rate);
            let start = w.chars;
            for _ in 0..rng.gen_range(2..=6) {
                w.push_str("    ");
                let n_tokens = rng.gen_range(1..=4);
                for t in 0..n_tokens {
                    if is_quote {
                        // Quoted lines lead with prose and may cite short
                        // code identifiers further in; block lines open and
                        // close with code the way statements do, with prose
                        // names only mid-line. The class cue is the token
                        // distribution, and every token is an arbitrary
                        // string.
                        if t == 0 || rng.gen_bool(config.code_prose_mix) {
                            w.push_word(&mut rng, &config.prose, PROSE_WORD);
                        } else {
                            w.push_word(&mut rng, &config.code, QUOTE_SNIPPET);
                        }
                    } else if t > 0 && t + 1 < n_tokens && rng.gen_bool(config.code_prose_mix)
                    {
                        w.push_word(&mut rng, &config.prose, PROSE_WORD);
                    } else {
                        w.push_word(&mut rng, &config.code, CODE_TOKEN);
                    }
                    if t + 1 < n_tokens {
                        w.push_str(" ");
                    }
                }
                w.push_str("\n");
            }
            if !is_quote {
                w.segments.push(Segment::new(start, w.chars, SegmentLabel::Block));
            }
        }
    }

    MarkedDocument::new(id, w.text, w.segments).expect("generator emits valid documents")
}
