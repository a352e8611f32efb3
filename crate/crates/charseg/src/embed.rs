//! Text embeddings from the language model's hidden layer.
//!
//! A frozen SRN runs over text and the hidden activation vector at every
//! position is recorded as that position's embedding. The top-K most active
//! units binarize into indicator features for the labeler, and cosine
//! similarity over raw activations supports nearest-neighbor inspection of
//! what the states encode.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::srn::SrnModel;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("empty text: nothing to trace")]
    EmptyText,
    #[error("top-{k} requested but the hidden layer has only {hidden} units")]
    KTooLarge { k: usize, hidden: usize },
    #[error("dimension mismatch: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("bad neighbor query: {0}")]
    BadQuery(String),
    #[error("inconsistent trace: {0}")]
    BadTrace(String),
    #[error("bad trace file: {0}")]
    BadTraceFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-position hidden states of one text under a frozen model.
///
/// The state stored at position `t` is the one produced by consuming the
/// character at `t` — the state the network predicts the next character
/// from.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenTrace {
    chars: Vec<char>,
    states: Vec<Vec<f64>>,
}

impl HiddenTrace {
    /// Assemble a trace from raw parts (one state per character, all of one
    /// dimension).
    pub fn from_parts(chars: Vec<char>, states: Vec<Vec<f64>>) -> Result<Self, EmbedError> {
        if chars.len() != states.len() {
            return Err(EmbedError::BadTrace(format!(
                "{} chars but {} states",
                chars.len(),
                states.len()
            )));
        }
        if let Some(first) = states.first() {
            let dim = first.len();
            if states.iter().any(|s| s.len() != dim) {
                return Err(EmbedError::BadTrace("states of mixed dimension".into()));
            }
        }
        Ok(HiddenTrace { chars, states })
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t]
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }
}

/// Run the frozen model over `text` and record the hidden state at every
/// position. Characters outside the vocabulary map to UNK.
pub fn trace_hidden(model: &SrnModel, text: &str) -> Result<HiddenTrace, EmbedError> {
    let chars: Vec<char> = text.chars().collect();
    if chars.is_empty() {
        return Err(EmbedError::EmptyText);
    }
    let inputs = model.vocab().encode(text);
    let mut states = Vec::with_capacity(inputs.len());
    let mut state = model.initial_state();
    for &input in &inputs {
        let (next, _) = model
            .forward_step(&state, input)
            .expect("encoded indices lie in the vocabulary");
        states.push(next.s.clone());
        state = next;
    }
    Ok(HiddenTrace { chars, states })
}

/// Indicators for the K most active hidden units: entry k is true when the
/// k-th ranked activation exceeds 0.5.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SrnFeatureBlock {
    bits: Vec<bool>,
}

impl SrnFeatureBlock {
    pub fn k(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

/// Rank activations descending (ties: lowest unit index first) and emit one
/// indicator per rank: 1 iff that unit's activation is strictly above 0.5.
pub fn topk_binarize(state: &[f64], k: usize) -> Result<SrnFeatureBlock, EmbedError> {
    if k > state.len() {
        return Err(EmbedError::KTooLarge { k, hidden: state.len() });
    }
    let mut order: Vec<usize> = (0..state.len()).collect();
    order.sort_by(|&a, &b| {
        state[b].partial_cmp(&state[a]).expect("activations are ordered").then(a.cmp(&b))
    });
    let bits = order[..k].iter().map(|&j| state[j] > 0.5).collect();
    Ok(SrnFeatureBlock { bits })
}

/// Cosine of the angle between two vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch { a: a.len(), b: b.len() });
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// One retrieved position.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub position: usize,
    pub similarity: f64,
    /// Up to 32 characters of history ending at the position, newlines
    /// rendered as ¶.
    pub context: String,
}

/// A query position with its ranked neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborQuery {
    pub position: usize,
    pub context: String,
    pub neighbors: Vec<Neighbor>,
}

/// Display width of the trailing-context excerpt.
const CONTEXT_CHARS: usize = 32;

fn context_at(chars: &[char], pos: usize) -> String {
    let start = (pos + 1).saturating_sub(CONTEXT_CHARS);
    chars[start..=pos].iter().map(|&c| if c == '\n' { '¶' } else { c }).collect()
}

/// For every query position (each `stride` characters, starting at 0), find
/// the `n` most cosine-similar positions inside the search prefix, excluding
/// the query itself. Ties rank the earlier position first.
pub fn nearest_neighbors(
    trace: &HiddenTrace,
    stride: usize,
    search_prefix_len: usize,
    n: usize,
) -> Result<Vec<NeighborQuery>, EmbedError> {
    if stride == 0 || n == 0 {
        return Err(EmbedError::BadQuery("stride and result count must be positive".into()));
    }
    if search_prefix_len > trace.len() {
        return Err(EmbedError::BadQuery(format!(
            "search prefix of {search_prefix_len} exceeds the {}-position trace",
            trace.len()
        )));
    }
    if search_prefix_len < 2 {
        return Err(EmbedError::BadQuery(
            "search prefix must hold at least two positions".into(),
        ));
    }

    let mut queries = Vec::new();
    for q in (0..trace.len()).step_by(stride) {
        let mut ranked: Vec<(usize, f64)> = Vec::with_capacity(search_prefix_len);
        for cand in 0..search_prefix_len {
            if cand == q {
                continue;
            }
            ranked.push((cand, cosine(trace.state(q), trace.state(cand))?));
        }
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1).expect("similarities are ordered").then(a.0.cmp(&b.0))
        });
        let neighbors = ranked
            .into_iter()
            .take(n)
            .map(|(position, similarity)| Neighbor {
                position,
                similarity,
                context: context_at(trace.chars(), position),
            })
            .collect();
        queries.push(NeighborQuery {
            position: q,
            context: context_at(trace.chars(), q),
            neighbors,
        });
    }
    Ok(queries)
}

/// Plain-text report: one block per query, the query row followed by its
/// neighbor rows.
pub fn format_nn_report(queries: &[NeighborQuery]) -> String {
    let mut out = String::new();
    for (i, q) in queries.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        writeln!(out, "query @{:<8} {}", q.position, q.context).expect("writing to a String");
        for nb in &q.neighbors {
            writeln!(out, "  {:.6} @{:<8} {}", nb.similarity, nb.position, nb.context)
                .expect("writing to a String");
        }
    }
    out
}

const TRACE_MAGIC: &[u8; 7] = b"SRNLM1\n";

/// Write a trace as a binary file: the model-file header fields (magic, I,
/// J, truncation depth), a position count, then one J-vector of
/// little-endian doubles per position.
pub fn write_trace<W: Write>(
    w: &mut W,
    model: &SrnModel,
    trace: &HiddenTrace,
) -> Result<(), EmbedError> {
    w.write_all(TRACE_MAGIC)?;
    for dim in [model.input_size(), model.hidden_units(), model.config().bptt_steps] {
        let v = u32::try_from(dim)
            .map_err(|_| EmbedError::BadTrace(format!("dimension {dim} exceeds u32")))?;
        w.write_all(&v.to_le_bytes())?;
    }
    let count = u32::try_from(trace.len())
        .map_err(|_| EmbedError::BadTrace("too many positions for the file format".into()))?;
    w.write_all(&count.to_le_bytes())?;
    for state in trace.states() {
        if state.len() != model.hidden_units() {
            return Err(EmbedError::BadTrace("state dimension differs from model".into()));
        }
        for x in state {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_trace_file(
    path: impl AsRef<Path>,
    model: &SrnModel,
    trace: &HiddenTrace,
) -> Result<(), EmbedError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_trace(&mut w, model, trace)?;
    w.flush()?;
    Ok(())
}

/// Decoded contents of a trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceData {
    pub input_size: usize,
    pub hidden_units: usize,
    pub bptt_steps: usize,
    pub states: Vec<Vec<f64>>,
}

pub fn read_trace<R: Read>(mut r: R) -> Result<TraceData, EmbedError> {
    let mut magic = [0u8; 7];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != TRACE_MAGIC {
        return Err(EmbedError::BadTraceFile("wrong magic bytes".into()));
    }
    let input_size = read_u32(&mut r, "input size")? as usize;
    let hidden_units = read_u32(&mut r, "hidden size")? as usize;
    let bptt_steps = read_u32(&mut r, "truncation depth")? as usize;
    let count = read_u32(&mut r, "position count")? as usize;
    let mut states = Vec::with_capacity(count.min(1 << 20));
    let mut buf = [0u8; 8];
    for _ in 0..count {
        let mut state = Vec::with_capacity(hidden_units);
        for _ in 0..hidden_units {
            read_exact(&mut r, &mut buf, "state data")?;
            state.push(f64::from_le_bytes(buf));
        }
        states.push(state);
    }
    if r.read(&mut buf[..1])? != 0 {
        return Err(EmbedError::BadTraceFile("trailing data".into()));
    }
    Ok(TraceData { input_size, hidden_units, bptt_steps, states })
}

pub fn read_trace_file(path: impl AsRef<Path>) -> Result<TraceData, EmbedError> {
    read_trace(BufReader::new(File::open(path)?))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), EmbedError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            EmbedError::BadTraceFile(format!("file ends inside {what}"))
        } else {
            EmbedError::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32, EmbedError> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}
