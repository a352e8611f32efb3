//! Linear-chain conditional random field over BIO character tags.
//!
//! Potentials are unigram label-observation weights (one weight per feature
//! string per label) plus a dense 5×5 transition table. Inference is exact:
//! log-space forward–backward for the partition function and marginals,
//! Viterbi for decoding. Training maximizes the L2-regularized conditional
//! log-likelihood with a limited-memory quasi-Newton loop.

mod io;
mod lbfgs;
mod train;

pub use io::{load_crf, load_crf_file, save_crf, save_crf_file};
pub use train::{
    crf_train, crf_train_with_report, loglik_gradient, CrfGradient, CrfTrainReport, TrainOptions,
};

use indexmap::IndexMap;
use thiserror::Error;

use crate::corpus::{BioTag, BIO_TAGS};
use crate::features::FeatureRow;

/// Number of tag labels (the fixed BIO inventory).
pub const LABEL_COUNT: usize = 5;

const L: usize = LABEL_COUNT;

#[derive(Debug, Error)]
pub enum CrfError {
    #[error("sequence has {rows} feature rows but {tags} tags")]
    LengthMismatch { rows: usize, tags: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("training dataset holds no labeled rows")]
    EmptyDataset,
    #[error("unlabeled row at sequence {seq}, position {pos}")]
    UnlabeledRow { seq: usize, pos: usize },
    #[error("bad training options: {0}")]
    Config(String),
    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },
    #[error("bad model file: {0}")]
    BadModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Weights of a linear-chain CRF: per-(feature, label) observation weights
/// and a dense label-transition matrix. Label order is the fixed BIO order.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    obs: IndexMap<String, [f64; L]>,
    trans: [[f64; L]; L],
    l2_sigma: f64,
}

impl CrfModel {
    /// An empty model: no observation features, all transitions zero.
    pub fn new(l2_sigma: f64) -> Self {
        CrfModel { obs: IndexMap::new(), trans: [[0.0; L]; L], l2_sigma }
    }

    /// A zero-weight model whose observation table holds every feature
    /// string occurring in `dataset` (each bound to all five labels).
    pub fn from_dataset(dataset: &[Vec<FeatureRow>], l2_sigma: f64) -> Self {
        let mut model = Self::new(l2_sigma);
        for seq in dataset {
            for row in seq {
                for feat in &row.features {
                    if !model.obs.contains_key(feat) {
                        model.obs.insert(feat.clone(), [0.0; L]);
                    }
                }
            }
        }
        model
    }

    pub fn labels(&self) -> &'static [BioTag; L] {
        &BIO_TAGS
    }

    /// Number of observation feature strings in the model.
    pub fn n_features(&self) -> usize {
        self.obs.len()
    }

    /// Observation weight for `(feature, label)`; unknown features score 0.
    pub fn obs_weight(&self, feature: &str, label: BioTag) -> f64 {
        self.obs.get(feature).map_or(0.0, |w| w[label.index()])
    }

    /// Set an observation weight, inserting the feature if absent.
    pub fn set_obs_weight(&mut self, feature: &str, label: BioTag, weight: f64) {
        self.obs.entry(feature.to_owned()).or_insert([0.0; L])[label.index()] = weight;
    }

    pub fn trans_weight(&self, prev: BioTag, cur: BioTag) -> f64 {
        self.trans[prev.index()][cur.index()]
    }

    pub fn set_trans_weight(&mut self, prev: BioTag, cur: BioTag, weight: f64) {
        self.trans[prev.index()][cur.index()] = weight;
    }

    /// Observation features in model order with their per-label weights.
    pub fn features(&self) -> impl Iterator<Item = (&str, &[f64; L])> {
        self.obs.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn l2_sigma(&self) -> f64 {
        self.l2_sigma
    }

    pub(crate) fn from_parts(
        obs: IndexMap<String, [f64; L]>,
        trans: [[f64; L]; L],
        l2_sigma: f64,
    ) -> Self {
        CrfModel { obs, trans, l2_sigma }
    }

    pub(crate) fn obs_table(&self) -> &IndexMap<String, [f64; L]> {
        &self.obs
    }

    pub(crate) fn trans_table(&self) -> &[[f64; L]; L] {
        &self.trans
    }
}

/// Per-position per-label observation scores for one sequence.
#[derive(Debug, Clone)]
pub struct Lattice {
    node: Vec<[f64; L]>,
}

impl Lattice {
    /// Sum each position's active feature weights under every label.
    /// Feature strings absent from the model contribute zero.
    pub fn build(model: &CrfModel, rows: &[FeatureRow]) -> Self {
        let node = rows
            .iter()
            .map(|row| {
                let mut scores = [0.0; L];
                for feat in &row.features {
                    if let Some(w) = model.obs.get(feat) {
                        for (s, wy) in scores.iter_mut().zip(w) {
                            *s += wy;
                        }
                    }
                }
                scores
            })
            .collect();
        Lattice { node }
    }

    pub fn len(&self) -> usize {
        self.node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node.is_empty()
    }

    pub fn node_score(&self, t: usize, label: BioTag) -> f64 {
        self.node[t][label.index()]
    }

    pub(crate) fn scores(&self) -> &[[f64; L]] {
        &self.node
    }
}

/// Exact posterior quantities from forward–backward.
#[derive(Debug, Clone)]
pub struct Marginals {
    /// Log-partition function from the forward recursion.
    pub log_z: f64,
    /// The same quantity from the backward recursion (agreement is a
    /// correctness check, not a separate estimate).
    pub log_z_backward: f64,
    /// `node[t][y]` = P(label at t is y), one entry per position.
    pub node: Vec<[f64; L]>,
    /// `edge[t][a][b]` = P(label a at t and b at t+1), length T−1.
    pub edge: Vec<[[f64; L]; L]>,
}

fn log_sum_exp(xs: &[f64; L]) -> f64 {
    let m = xs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Joint score of `tags` for `rows` under the model: observation terms plus
/// transition terms.
pub fn score_sequence(
    model: &CrfModel,
    rows: &[FeatureRow],
    tags: &[BioTag],
) -> Result<f64, CrfError> {
    if rows.len() != tags.len() {
        return Err(CrfError::LengthMismatch { rows: rows.len(), tags: tags.len() });
    }
    let lattice = Lattice::build(model, rows);
    Ok(score_on_lattice(lattice.scores(), &model.trans, tags))
}

fn score_on_lattice(node: &[[f64; L]], trans: &[[f64; L]; L], tags: &[BioTag]) -> f64 {
    let mut score = 0.0;
    for (t, tag) in tags.iter().enumerate() {
        score += node[t][tag.index()];
        if t > 0 {
            score += trans[tags[t - 1].index()][tag.index()];
        }
    }
    score
}

/// Log-partition function and exact node/edge marginals for one sequence.
pub fn forward_backward(model: &CrfModel, rows: &[FeatureRow]) -> Result<Marginals, CrfError> {
    if rows.is_empty() {
        return Err(CrfError::EmptySequence);
    }
    let lattice = Lattice::build(model, rows);
    Ok(forward_backward_scores(lattice.scores(), &model.trans))
}

/// Forward–backward over precomputed node scores, in log space.
pub(crate) fn forward_backward_scores(node: &[[f64; L]], trans: &[[f64; L]; L]) -> Marginals {
    let t_len = node.len();
    debug_assert!(t_len > 0);

    let mut alpha = vec![[0.0f64; L]; t_len];
    alpha[0] = node[0];
    for t in 1..t_len {
        for y in 0..L {
            let mut terms = [0.0f64; L];
            for (x, term) in terms.iter_mut().enumerate() {
                *term = alpha[t - 1][x] + trans[x][y];
            }
            alpha[t][y] = node[t][y] + log_sum_exp(&terms);
        }
    }
    let log_z = log_sum_exp(&alpha[t_len - 1]);

    let mut beta = vec![[0.0f64; L]; t_len];
    for t in (0..t_len - 1).rev() {
        for x in 0..L {
            let mut terms = [0.0f64; L];
            for (y, term) in terms.iter_mut().enumerate() {
                *term = trans[x][y] + node[t + 1][y] + beta[t + 1][y];
            }
            beta[t][x] = log_sum_exp(&terms);
        }
    }
    let mut start = [0.0f64; L];
    for y in 0..L {
        start[y] = node[0][y] + beta[0][y];
    }
    let log_z_backward = log_sum_exp(&start);

    let mut node_marg = vec![[0.0f64; L]; t_len];
    for t in 0..t_len {
        for y in 0..L {
            node_marg[t][y] = (alpha[t][y] + beta[t][y] - log_z).exp();
        }
    }
    let mut edge_marg = vec![[[0.0f64; L]; L]; t_len - 1];
    for (t, edge) in edge_marg.iter_mut().enumerate() {
        for (a, row) in edge.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                *cell =
                    (alpha[t][a] + trans[a][b] + node[t + 1][b] + beta[t + 1][b] - log_z).exp();
            }
        }
    }

    Marginals { log_z, log_z_backward, node: node_marg, edge: edge_marg }
}

/// Highest-scoring tag sequence; ties resolve to the lowest label index at
/// every backpointer decision and at the final argmax.
pub fn viterbi_decode(model: &CrfModel, rows: &[FeatureRow]) -> Result<Vec<BioTag>, CrfError> {
    if rows.is_empty() {
        return Err(CrfError::EmptySequence);
    }
    let lattice = Lattice::build(model, rows);
    let path = viterbi_scores(lattice.scores(), &model.trans);
    Ok(path
        .into_iter()
        .map(|i| BioTag::from_index(i).expect("viterbi emits valid label indices"))
        .collect())
}

/// Max-product recursion over precomputed node scores.
pub(crate) fn viterbi_scores(node: &[[f64; L]], trans: &[[f64; L]; L]) -> Vec<usize> {
    let t_len = node.len();
    debug_assert!(t_len > 0);

    let mut delta = vec![[0.0f64; L]; t_len];
    let mut back = vec![[0usize; L]; t_len];
    delta[0] = node[0];
    for t in 1..t_len {
        for y in 0..L {
            let mut best_x = 0;
            let mut best = delta[t - 1][0] + trans[0][y];
            for x in 1..L {
                let cand = delta[t - 1][x] + trans[x][y];
                if cand > best {
                    best = cand;
                    best_x = x;
                }
            }
            delta[t][y] = node[t][y] + best;
            back[t][y] = best_x;
        }
    }

    let mut best_y = 0;
    for y in 1..L {
        if delta[t_len - 1][y] > delta[t_len - 1][best_y] {
            best_y = y;
        }
    }
    let mut path = vec![0usize; t_len];
    path[t_len - 1] = best_y;
    for t in (1..t_len).rev() {
        path[t - 1] = back[t][path[t]];
    }
    path
}

/// Tag a sequence with the model: Viterbi decoding, unknown features
/// ignored.
pub fn label(model: &CrfModel, rows: &[FeatureRow]) -> Result<Vec<BioTag>, CrfError> {
    viterbi_decode(model, rows)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::distributions::{Distribution, Uniform};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// A row whose single feature is its position's observation symbol.
    pub fn sym_rows(symbols: &[&str]) -> Vec<FeatureRow> {
        symbols
            .iter()
            .enumerate()
            .map(|(position, s)| FeatureRow {
                position,
                features: vec![format!("x={s}")],
                tag: None,
            })
            .collect()
    }

    /// Random model + rows with `n_syms` observation symbols and length `t`.
    pub fn random_fixture(seed: u64, t: usize, n_syms: usize) -> (CrfModel, Vec<FeatureRow>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(-2.0, 2.0);
        let mut model = CrfModel::new(1.0);
        for s in 0..n_syms {
            for tag in BIO_TAGS {
                model.set_obs_weight(&format!("x=s{s}"), tag, dist.sample(&mut rng));
            }
        }
        for a in BIO_TAGS {
            for b in BIO_TAGS {
                model.set_trans_weight(a, b, dist.sample(&mut rng));
            }
        }
        let syms: Vec<String> =
            (0..t).map(|i| format!("s{}", (i * 7 + seed as usize) % n_syms)).collect();
        let rows = sym_rows(&syms.iter().map(String::as_str).collect::<Vec<_>>());
        (model, rows)
    }

    /// All 5^T tag sequences.
    pub fn all_tag_seqs(t: usize) -> Vec<Vec<BioTag>> {
        let mut out = vec![Vec::new()];
        for _ in 0..t {
            let mut next = Vec::with_capacity(out.len() * L);
            for seq in &out {
                for tag in BIO_TAGS {
                    let mut s = seq.clone();
                    s.push(tag);
                    next.push(s);
                }
            }
            out = next;
        }
        out
    }
}
