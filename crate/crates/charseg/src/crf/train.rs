//! CRF training: L2-regularized maximum likelihood with exact gradients.

use std::collections::HashMap;

use indexmap::IndexMap;

use super::{
    forward_backward_scores, lbfgs, score_on_lattice, CrfError, CrfModel, Lattice, L,
};
use crate::corpus::BioTag;
use crate::features::FeatureRow;
use crate::par;

/// Hyperparameters for [`crf_train`].
#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    /// Gaussian prior width; weights are penalized by ‖w‖²/(2σ²).
    pub l2_sigma: f64,
    /// Cap on accepted optimizer steps.
    pub max_iterations: usize,
    /// Stop when the relative objective change falls below this.
    pub convergence_tol: f64,
    /// Recorded for reproducibility bookkeeping. The optimizer starts from
    /// zero weights and is deterministic, so the seed does not currently
    /// influence the result.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { l2_sigma: 1.0, max_iterations: 200, convergence_tol: 1e-6, seed: 1 }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<(), CrfError> {
        if !(self.l2_sigma > 0.0 && self.l2_sigma.is_finite()) {
            return Err(CrfError::Config(format!("l2_sigma must be positive, got {}", self.l2_sigma)));
        }
        if self.max_iterations == 0 {
            return Err(CrfError::Config("max_iterations must be positive".into()));
        }
        if !(self.convergence_tol > 0.0 && self.convergence_tol.is_finite()) {
            return Err(CrfError::Config(format!(
                "convergence_tol must be positive, got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

/// What happened during a training run.
#[derive(Debug, Clone)]
pub struct CrfTrainReport {
    /// Accepted optimizer steps taken.
    pub iterations: usize,
    /// Regularized negative log-likelihood at the initial point and after
    /// each accepted step. Non-increasing by the line-search contract.
    pub objectives: Vec<f64>,
    /// Whether the relative-change criterion fired before `max_iterations`.
    pub converged: bool,
}

/// Gradient of the regularized log-likelihood, shaped like the model.
#[derive(Debug, Clone)]
pub struct CrfGradient {
    obs: IndexMap<String, [f64; L]>,
    trans: [[f64; L]; L],
}

impl CrfGradient {
    pub fn obs(&self, feature: &str, label: BioTag) -> f64 {
        self.obs.get(feature).map_or(0.0, |g| g[label.index()])
    }

    pub fn trans(&self, prev: BioTag, cur: BioTag) -> f64 {
        self.trans[prev.index()][cur.index()]
    }

    pub fn max_abs(&self) -> f64 {
        let obs_max = self
            .obs
            .values()
            .flatten()
            .fold(0.0f64, |a, g| a.max(g.abs()));
        self.trans.iter().flatten().fold(obs_max, |a, g| a.max(g.abs()))
    }
}

/// Dataset re-encoded with interned feature ids and label indices.
struct Encoded {
    /// Feature string → id, in order of first occurrence.
    feats: IndexMap<String, u32>,
    seqs: Vec<EncodedSeq>,
}

struct EncodedSeq {
    rows: Vec<Vec<u32>>,
    gold: Vec<usize>,
}

impl Encoded {
    fn n_params(&self) -> usize {
        self.feats.len() * L + L * L
    }
}

fn obs_slot(feat: u32, label: usize) -> usize {
    feat as usize * L + label
}

fn trans_slot(n_feats: usize, prev: usize, cur: usize) -> usize {
    n_feats * L + prev * L + cur
}

fn encode(dataset: &[Vec<FeatureRow>]) -> Result<Encoded, CrfError> {
    let mut feats: IndexMap<String, u32> = IndexMap::new();
    let mut seqs = Vec::new();
    for (si, seq) in dataset.iter().enumerate() {
        if seq.is_empty() {
            continue;
        }
        let mut rows = Vec::with_capacity(seq.len());
        let mut gold = Vec::with_capacity(seq.len());
        for (pos, row) in seq.iter().enumerate() {
            let tag = row
                .tag
                .ok_or(CrfError::UnlabeledRow { seq: si, pos })?;
            gold.push(tag.index());
            let mut ids = Vec::with_capacity(row.features.len());
            for feat in &row.features {
                let next = feats.len() as u32;
                let id = *feats.entry(feat.clone()).or_insert(next);
                ids.push(id);
            }
            rows.push(ids);
        }
        seqs.push(EncodedSeq { rows, gold });
    }
    if seqs.is_empty() {
        return Err(CrfError::EmptyDataset);
    }
    Ok(Encoded { feats, seqs })
}

/// Sequences handed to the parallel gradient map in one batch; bounds the
/// number of sparse per-sequence gradients alive at once.
const GRAD_WINDOW: usize = 128;

/// Negative regularized log-likelihood and its gradient at `w`.
///
/// Per-sequence contributions are computed in parallel and folded into the
/// dense accumulator strictly in input order (sorted by slot within each
/// sequence), so the result is bit-stable for any worker count.
fn objective_grad(w: &[f64], enc: &Encoded) -> (f64, Vec<f64>) {
    let n_feats = enc.feats.len();
    let mut obj = 0.0;
    let mut grad = vec![0.0f64; w.len()];

    for window in enc.seqs.chunks(GRAD_WINDOW) {
        let parts = par::map_collect(window, |seq| seq_contribution(w, n_feats, seq));
        for (local_obj, sparse) in parts {
            obj += local_obj;
            for (slot, g) in sparse {
                grad[slot] += g;
            }
        }
    }
    (obj, grad)
}

/// One sequence's (logZ − gold score) and sparse (expected − empirical)
/// counts, slot-sorted.
fn seq_contribution(w: &[f64], n_feats: usize, seq: &EncodedSeq) -> (f64, Vec<(usize, f64)>) {
    let t_len = seq.rows.len();
    let mut node = vec![[0.0f64; L]; t_len];
    for (t, ids) in seq.rows.iter().enumerate() {
        for &f in ids {
            for y in 0..L {
                node[t][y] += w[obs_slot(f, y)];
            }
        }
    }
    let mut trans = [[0.0f64; L]; L];
    for (a, row) in trans.iter_mut().enumerate() {
        for (b, cell) in row.iter_mut().enumerate() {
            *cell = w[trans_slot(n_feats, a, b)];
        }
    }

    let m = forward_backward_scores(&node, &trans);

    let mut gold_score = 0.0;
    for (t, &g) in seq.gold.iter().enumerate() {
        gold_score += node[t][g];
        if t > 0 {
            gold_score += trans[seq.gold[t - 1]][g];
        }
    }

    let mut sparse: HashMap<usize, f64> = HashMap::new();
    for (t, ids) in seq.rows.iter().enumerate() {
        for &f in ids {
            for y in 0..L {
                *sparse.entry(obs_slot(f, y)).or_insert(0.0) += m.node[t][y];
            }
            *sparse.entry(obs_slot(f, seq.gold[t])).or_insert(0.0) -= 1.0;
        }
    }
    for t in 0..t_len.saturating_sub(1) {
        for a in 0..L {
            for b in 0..L {
                *sparse.entry(trans_slot(n_feats, a, b)).or_insert(0.0) += m.edge[t][a][b];
            }
        }
        *sparse.entry(trans_slot(n_feats, seq.gold[t], seq.gold[t + 1])).or_insert(0.0) -= 1.0;
    }
    let mut sparse: Vec<(usize, f64)> = sparse.into_iter().collect();
    sparse.sort_unstable_by_key(|&(slot, _)| slot);
    (m.log_z - gold_score, sparse)
}

/// Train a CRF on labeled feature rows. The feature set is every feature
/// string observed in the dataset (bound to all five labels) plus the full
/// transition table; optimization starts from zero weights.
pub fn crf_train(
    dataset: &[Vec<FeatureRow>],
    options: &TrainOptions,
) -> Result<CrfModel, CrfError> {
    crf_train_with_report(dataset, options).map(|(model, _)| model)
}

pub fn crf_train_with_report(
    dataset: &[Vec<FeatureRow>],
    options: &TrainOptions,
) -> Result<(CrfModel, CrfTrainReport), CrfError> {
    options.validate()?;
    let enc = encode(dataset)?;
    let sigma_sq = options.l2_sigma * options.l2_sigma;

    let outcome = lbfgs::minimize(
        vec![0.0; enc.n_params()],
        options.max_iterations,
        options.convergence_tol,
        |w| {
            let (mut obj, mut grad) = objective_grad(w, &enc);
            for (gi, wi) in grad.iter_mut().zip(w) {
                obj += wi * wi / (2.0 * sigma_sq);
                *gi += wi / sigma_sq;
            }
            (obj, grad)
        },
    )
    .map_err(|e| CrfError::Diverged { iteration: e.iteration, reason: e.reason })?;

    let mut obs = IndexMap::with_capacity(enc.feats.len());
    for (name, &id) in &enc.feats {
        let mut weights = [0.0; L];
        for (y, wy) in weights.iter_mut().enumerate() {
            *wy = outcome.x[obs_slot(id, y)];
        }
        obs.insert(name.clone(), weights);
    }
    let mut trans = [[0.0; L]; L];
    for (a, row) in trans.iter_mut().enumerate() {
        for (b, cell) in row.iter_mut().enumerate() {
            *cell = outcome.x[trans_slot(enc.feats.len(), a, b)];
        }
    }
    let report = CrfTrainReport {
        iterations: outcome.trace.len() - 1,
        objectives: outcome.trace,
        converged: outcome.converged,
    };
    Ok((CrfModel::from_parts(obs, trans, options.l2_sigma), report))
}

/// Regularized log-likelihood of `dataset` under `model`, and its gradient
/// with respect to the model's weights (higher is better; training
/// minimizes the negation). Dataset features absent from the model are
/// fixed at weight zero and carry no gradient entry.
pub fn loglik_gradient(
    model: &CrfModel,
    dataset: &[Vec<FeatureRow>],
) -> Result<(f64, CrfGradient), CrfError> {
    let mut obj = 0.0;
    let mut grad = CrfGradient {
        obs: model.obs_table().keys().map(|k| (k.clone(), [0.0; L])).collect(),
        trans: [[0.0; L]; L],
    };
    let mut seen_any = false;
    for (si, seq) in dataset.iter().enumerate() {
        if seq.is_empty() {
            continue;
        }
        seen_any = true;
        let mut gold = Vec::with_capacity(seq.len());
        for (pos, row) in seq.iter().enumerate() {
            gold.push(row.tag.ok_or(CrfError::UnlabeledRow { seq: si, pos })?);
        }
        let lattice = Lattice::build(model, seq);
        let m = forward_backward_scores(lattice.scores(), model.trans_table());
        obj += score_on_lattice(lattice.scores(), model.trans_table(), &gold) - m.log_z;

        for (t, row) in seq.iter().enumerate() {
            for feat in &row.features {
                let Some(g) = grad.obs.get_mut(feat) else { continue };
                g[gold[t].index()] += 1.0;
                for (gy, p) in g.iter_mut().zip(&m.node[t]) {
                    *gy -= p;
                }
            }
        }
        for t in 0..seq.len() - 1 {
            grad.trans[gold[t].index()][gold[t + 1].index()] += 1.0;
            for a in 0..L {
                for b in 0..L {
                    grad.trans[a][b] -= m.edge[t][a][b];
                }
            }
        }
    }
    if !seen_any {
        return Err(CrfError::EmptyDataset);
    }

    let sigma_sq = model.l2_sigma() * model.l2_sigma();
    for (name, g) in grad.obs.iter_mut() {
        let w = &model.obs_table()[name.as_str()];
        for (gy, wy) in g.iter_mut().zip(w) {
            obj -= wy * wy / (2.0 * sigma_sq);
            *gy -= wy / sigma_sq;
        }
    }
    for a in 0..L {
        for b in 0..L {
            let w = model.trans_table()[a][b];
            obj -= w * w / (2.0 * sigma_sq);
            grad.trans[a][b] -= w / sigma_sq;
        }
    }
    Ok((obj, grad))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::sym_rows;
    use super::super::{label, viterbi_decode};
    use super::*;
    use crate::corpus::BIO_TAGS;

    fn tag_rows(pairs: &[(&str, BioTag)]) -> Vec<FeatureRow> {
        pairs
            .iter()
            .enumerate()
            .map(|(position, (s, tag))| FeatureRow {
                position,
                features: vec![format!("x={s}")],
                tag: Some(*tag),
            })
            .collect()
    }

    /// Sequences a one-feature-per-position model separates: `a` is always
    /// O, `b` always B-BLOCK, with every needed transition attested.
    fn separable_dataset() -> Vec<Vec<FeatureRow>> {
        vec![
            tag_rows(&[
                ("a", BioTag::Outside),
                ("a", BioTag::Outside),
                ("b", BioTag::BeginBlock),
                ("a", BioTag::Outside),
                ("a", BioTag::Outside),
            ]),
            tag_rows(&[
                ("b", BioTag::BeginBlock),
                ("a", BioTag::Outside),
                ("a", BioTag::Outside),
                ("b", BioTag::BeginBlock),
            ]),
        ]
    }

    #[test]
    fn zero_model_gradient_is_empirical_minus_uniform() {
        // Two positions, distinct features, gold O then B-BLOCK. At zero
        // weights the marginals are uniform: node 1/5, edges 1/25.
        let dataset = vec![tag_rows(&[("a", BioTag::Outside), ("b", BioTag::BeginBlock)])];
        let model = CrfModel::from_dataset(&dataset, 1.0);
        let (obj, grad) = loglik_gradient(&model, &dataset).unwrap();
        assert!((obj - (-2.0 * 5.0f64.ln())).abs() < 1e-12);

        for tag in BIO_TAGS {
            let want_a = f64::from(tag == BioTag::Outside) - 0.2;
            let want_b = f64::from(tag == BioTag::BeginBlock) - 0.2;
            assert!((grad.obs("x=a", tag) - want_a).abs() < 1e-12);
            assert!((grad.obs("x=b", tag) - want_b).abs() < 1e-12);
        }
        for a in BIO_TAGS {
            for b in BIO_TAGS {
                let emp = f64::from(a == BioTag::Outside && b == BioTag::BeginBlock);
                assert!((grad.trans(a, b) - (emp - 0.04)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn finite_difference_gradient_check() {
        let dataset = vec![
            tag_rows(&[
                ("a", BioTag::Outside),
                ("b", BioTag::BeginBlock),
                ("b", BioTag::InsideBlock),
                ("a", BioTag::Outside),
            ]),
            tag_rows(&[("b", BioTag::BeginInline), ("a", BioTag::InsideInline)]),
        ];
        let mut model = CrfModel::from_dataset(&dataset, 1.3);
        // Non-trivial point: deterministic, irregular weights.
        let mut k = 0.0f64;
        for feat in ["x=a", "x=b"] {
            for tag in BIO_TAGS {
                model.set_obs_weight(feat, tag, (k * 0.7).sin());
                k += 1.0;
            }
        }
        for a in BIO_TAGS {
            for b in BIO_TAGS {
                model.set_trans_weight(a, b, (k * 0.3).cos() * 0.5);
                k += 1.0;
            }
        }

        let (_, grad) = loglik_gradient(&model, &dataset).unwrap();
        let eps = 1e-5;
        let check = |set: &mut dyn FnMut(&mut CrfModel, f64), analytic: f64| {
            let mut hi = model.clone();
            set(&mut hi, eps);
            let mut lo = model.clone();
            set(&mut lo, -eps);
            let (f_hi, _) = loglik_gradient(&hi, &dataset).unwrap();
            let (f_lo, _) = loglik_gradient(&lo, &dataset).unwrap();
            let fd = (f_hi - f_lo) / (2.0 * eps);
            let denom = (analytic.abs() + fd.abs()).max(1e-6);
            assert!(
                (analytic - fd).abs() / denom < 1e-4,
                "analytic {analytic} vs fd {fd}"
            );
        };
        for feat in ["x=a", "x=b"] {
            for tag in BIO_TAGS {
                let base = model.obs_weight(feat, tag);
                check(
                    &mut |m, d| m.set_obs_weight(feat, tag, base + d),
                    grad.obs(feat, tag),
                );
            }
        }
        for a in BIO_TAGS {
            for b in BIO_TAGS {
                let base = model.trans_weight(a, b);
                check(
                    &mut |m, d| m.set_trans_weight(a, b, base + d),
                    grad.trans(a, b),
                );
            }
        }
    }

    #[test]
    fn separable_toy_trains_to_exact_labels() {
        let dataset = separable_dataset();
        let options = TrainOptions::default();
        let (model, report) = crf_train_with_report(&dataset, &options).unwrap();
        assert!(report.converged);
        for w in report.objectives.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "objective increased: {:?}", report.objectives);
        }
        for seq in &dataset {
            let gold: Vec<BioTag> = seq.iter().map(|r| r.tag.unwrap()).collect();
            assert_eq!(viterbi_decode(&model, seq).unwrap(), gold);
        }
        // Unseen sequences follow the per-symbol rule.
        let unseen = sym_rows(&["a", "a", "a", "a", "a"]);
        assert_eq!(label(&model, &unseen).unwrap(), vec![BioTag::Outside; 5]);
        let mixed = sym_rows(&["b", "a"]);
        assert_eq!(
            label(&model, &mixed).unwrap(),
            vec![BioTag::BeginBlock, BioTag::Outside]
        );
    }

    #[test]
    fn gradient_norm_small_at_trained_optimum() {
        let dataset = separable_dataset();
        // Loose regularizer so the regularized optimum is near the
        // likelihood optimum; the gradient of the *regularized* objective
        // should vanish at the trained weights.
        let options = TrainOptions { convergence_tol: 1e-12, ..TrainOptions::default() };
        let model = crf_train(&dataset, &options).unwrap();
        let (_, grad) = loglik_gradient(&model, &dataset).unwrap();
        assert!(grad.max_abs() < 1e-4, "gradient max {}", grad.max_abs());
    }

    #[test]
    fn training_is_deterministic() {
        let dataset = separable_dataset();
        let options = TrainOptions::default();
        let a = crf_train(&dataset, &options).unwrap();
        let b = crf_train(&dataset, &options).unwrap();
        assert_eq!(a, b);
        let bits = |m: &CrfModel| -> Vec<u64> {
            let mut v: Vec<u64> = m
                .features()
                .flat_map(|(_, w)| w.iter().map(|x| x.to_bits()))
                .collect();
            v.extend(m.trans_table().iter().flatten().map(|x| x.to_bits()));
            v
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn train_rejects_bad_inputs() {
        let dataset = separable_dataset();
        assert!(matches!(
            crf_train(&[], &TrainOptions::default()),
            Err(CrfError::EmptyDataset)
        ));
        assert!(matches!(
            crf_train(&[Vec::new()], &TrainOptions::default()),
            Err(CrfError::EmptyDataset)
        ));
        let mut unlabeled = dataset.clone();
        unlabeled[1][2].tag = None;
        assert!(matches!(
            crf_train(&unlabeled, &TrainOptions::default()),
            Err(CrfError::UnlabeledRow { seq: 1, pos: 2 })
        ));
        let bad = TrainOptions { l2_sigma: 0.0, ..TrainOptions::default() };
        assert!(matches!(crf_train(&dataset, &bad), Err(CrfError::Config(_))));
        let bad = TrainOptions { max_iterations: 0, ..TrainOptions::default() };
        assert!(matches!(crf_train(&dataset, &bad), Err(CrfError::Config(_))));
        let bad = TrainOptions { convergence_tol: -1.0, ..TrainOptions::default() };
        assert!(matches!(crf_train(&dataset, &bad), Err(CrfError::Config(_))));
    }

    #[test]
    fn loglik_gradient_requires_labels() {
        let model = CrfModel::new(1.0);
        let rows = sym_rows(&["a"]);
        assert!(matches!(
            loglik_gradient(&model, &[rows]),
            Err(CrfError::UnlabeledRow { seq: 0, pos: 0 })
        ));
        assert!(matches!(loglik_gradient(&model, &[]), Err(CrfError::EmptyDataset)));
    }
}
