//! Character-level text segmentation toolkit.
//!
//! The pipeline trains a simple recurrent network (SRN) as a character
//! language model, records its hidden-layer activations as per-position text
//! embeddings, binarizes the most active units into indicator features, and
//! feeds those (next to plain character n-grams) into a linear-chain CRF that
//! detects and labels code segments in raw text.
//!
//! Modules follow the pipeline stages:
//!
//! * [`corpus`] — ingestion of marked-up documents, BIO conversion, vocabulary
//!   building, corpus splitting, and a synthetic corpus generator.
//! * [`srn`] — the recurrent character language model and its training loop.
//! * [`embed`] — hidden-state traces, top-K binarization, and cosine
//!   nearest-neighbor analysis.
//! * [`features`] — character n-gram templates and CRF-ready feature rows.
//! * [`crf`] — linear-chain CRF training (L-BFGS over exact forward-backward
//!   gradients) and Viterbi decoding.
//! * [`eval`] — segment extraction, segment-wise precision/recall/F1, and the
//!   learning-curve experiment harness.
//!
//! All stochastic components are seeded and deterministic; with the default
//! `parallel` feature the data-parallel loops run on rayon but reduce in
//! input order, so results are bit-identical regardless of worker count.

pub mod corpus;
pub mod crf;
pub mod embed;
pub mod eval;
pub mod features;
pub mod srn;

mod mat;
mod par;

pub use corpus::{BioTag, CharVocab, LabeledSequence, MarkedDocument, Segment, SegmentLabel};
pub use crf::{CrfModel, TrainOptions};
pub use eval::PrfReport;
pub use features::FeatureRow;
pub use srn::{SrnConfig, SrnModel};
