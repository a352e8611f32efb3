//! Online training of the character language model.
//!
//! One pass steps through every character of every document in order. Each
//! position's cross-entropy error is backpropagated through the last
//! `bptt_steps` hidden layers (kept in a short history window) and applied
//! immediately as a clipped stochastic gradient update. The learning rate
//! follows a halving schedule driven by validation entropy.

use std::collections::VecDeque;

use crate::corpus::build_vocab;
use crate::mat::Mat;

use super::{SrnConfig, SrnError, SrnModel, StateReset};

/// Per-component gradient clip applied before every update.
const CLIP: f64 = 15.0;

fn clip(g: f64) -> f64 {
    g.clamp(-CLIP, CLIP)
}

/// Why training stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Validation entropy stalled again after the learning rate began
    /// halving.
    Converged { iteration: usize },
    MaxIterations,
}

/// One pass over the training corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    /// Learning rate used during this pass.
    pub learning_rate: f64,
    /// Mean training cross-entropy, bits per character.
    pub train_entropy_bits: f64,
    /// Mean validation cross-entropy, bits per character.
    pub validation_entropy_bits: f64,
    /// Whether the halving schedule was active during this pass.
    pub halving: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub iterations: Vec<IterationReport>,
    pub stop: StopReason,
}

/// Train a language model on `texts`, with the vocabulary built from them.
pub fn train_lm<S: AsRef<str>, V: AsRef<str>>(
    texts: &[S],
    config: &SrnConfig,
    validation: &[V],
) -> Result<SrnModel, SrnError> {
    train_lm_with_report(texts, config, validation).map(|(model, _)| model)
}

/// [`train_lm`] plus the per-iteration schedule trace.
pub fn train_lm_with_report<S: AsRef<str>, V: AsRef<str>>(
    texts: &[S],
    config: &SrnConfig,
    validation: &[V],
) -> Result<(SrnModel, TrainReport), SrnError> {
    config.validate()?;
    let vocab = build_vocab(texts).map_err(|_| SrnError::EmptyCorpus("training corpus"))?;
    let train_docs: Vec<Vec<usize>> = texts
        .iter()
        .map(|t| vocab.encode(t.as_ref()))
        .filter(|d| !d.is_empty())
        .collect();
    let val_docs: Vec<Vec<usize>> = validation
        .iter()
        .map(|t| vocab.encode(t.as_ref()))
        .filter(|d| !d.is_empty())
        .collect();
    if val_docs.is_empty() {
        return Err(SrnError::EmptyCorpus("validation corpus"));
    }
    let train_chars: usize = train_docs.iter().map(Vec::len).sum();

    let mut model = SrnModel::new_random(vocab, config.clone())?;
    let mut lr = config.initial_learning_rate;
    let mut halving = false;
    let mut prev_val: Option<f64> = None;
    let mut iterations = Vec::new();
    let mut stop = StopReason::MaxIterations;

    for iteration in 1..=config.max_iterations {
        let train_nll = train_pass(&mut model, &train_docs, lr);
        let train_bits = train_nll / (train_chars as f64 * std::f64::consts::LN_2);
        let (val_nll, val_chars) = total_nll(&model, &val_docs);
        let val_bits = val_nll / (val_chars as f64 * std::f64::consts::LN_2);
        if !train_bits.is_finite() || !val_bits.is_finite() {
            return Err(SrnError::Diverged {
                iteration,
                reason: format!(
                    "train entropy {train_bits} bits, validation entropy {val_bits} bits"
                ),
            });
        }
        iterations.push(IterationReport {
            iteration,
            learning_rate: lr,
            train_entropy_bits: train_bits,
            validation_entropy_bits: val_bits,
            halving,
        });

        let improvement = match prev_val {
            None => f64::INFINITY,
            Some(p) if p > 1e-12 => (p - val_bits) / p,
            Some(_) => 0.0,
        };
        prev_val = Some(val_bits);
        let stalled = improvement < config.lr_halving_threshold;
        if stalled && halving {
            stop = StopReason::Converged { iteration };
            break;
        }
        if stalled {
            halving = true;
        }
        if halving {
            lr /= 2.0;
        }
    }

    Ok((model, TrainReport { iterations, stop }))
}

/// A recent forward step kept for truncated backpropagation.
struct Step {
    input: usize,
    /// Hidden state the step started from.
    prev: Vec<f64>,
    /// Hidden state it produced.
    state: Vec<f64>,
}

/// One updating pass over the corpus; returns the total cross-entropy in
/// nats, summed over every character.
fn train_pass(model: &mut SrnModel, docs: &[Vec<usize>], lr: f64) -> f64 {
    let i_size = model.input_size();
    let j_size = model.hidden_units();
    let bptt = model.config.bptt_steps;
    let per_document = model.config.state_reset == StateReset::PerDocument;

    let mut state = vec![0.5; j_size];
    let mut hist: VecDeque<Step> = VecDeque::with_capacity(bptt + 1);
    let mut y = vec![0.0; i_size];
    let mut d = vec![0.0; j_size];
    let mut da = vec![0.0; j_size];
    let mut gw = Mat::zeros(j_size, j_size);
    // Accumulated input-matrix columns for this position, keyed by column.
    let mut gu_cols: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut total_nll = 0.0;

    for doc in docs {
        if per_document {
            state.iter_mut().for_each(|s| *s = 0.5);
            hist.clear();
        }
        for t in 0..doc.len() {
            if t > 0 {
                // Consume the previous character.
                let input = doc[t - 1];
                let mut next = vec![0.0; j_size];
                model.step_state_into(&state, input, &mut next);
                hist.push_back(Step {
                    input,
                    prev: std::mem::replace(&mut state, next.clone()),
                    state: next,
                });
                if hist.len() > bptt {
                    hist.pop_front();
                }
            }

            model.output_into(&state, &mut y);
            let target = doc[t];
            total_nll -= y[target].ln();

            // dz = y − onehot(target), reusing the output buffer.
            y[target] -= 1.0;

            // d = Vᵀ·dz, read before the readout weights change.
            d.iter_mut().for_each(|x| *x = 0.0);
            model.v.tr_mul_vec_add(&y, &mut d);
            for k in 0..i_size {
                let dzk = y[k];
                for (vw, sj) in model.v.row_mut(k).iter_mut().zip(&state) {
                    *vw -= lr * clip(dzk * sj);
                }
            }

            if t == 0 {
                // Nothing was consumed yet: this term reaches only the
                // readout weights.
                continue;
            }

            gw.data_mut().iter_mut().for_each(|x| *x = 0.0);
            gu_cols.clear();
            for step in hist.iter().rev() {
                for ((dj, sj), out) in d.iter().zip(&step.state).zip(da.iter_mut()) {
                    *out = dj * sj * (1.0 - sj);
                }
                match gu_cols.iter_mut().find(|(c, _)| *c == step.input) {
                    Some((_, acc)) => {
                        for (a, v) in acc.iter_mut().zip(&da) {
                            *a += v;
                        }
                    }
                    None => gu_cols.push((step.input, da.clone())),
                }
                gw.add_outer(&da, &step.prev);
                d.iter_mut().for_each(|x| *x = 0.0);
                model.w.tr_mul_vec_add(&da, &mut d);
            }

            for (col, acc) in &gu_cols {
                for (j, a) in acc.iter().enumerate() {
                    model.u.row_mut(j)[*col] -= lr * clip(*a);
                }
            }
            for j in 0..j_size {
                for (wv, g) in model.w.row_mut(j).iter_mut().zip(gw.row(j)) {
                    *wv -= lr * clip(*g);
                }
            }
        }
    }
    total_nll
}

/// Total cross-entropy (nats) and character count of `docs` under the
/// frozen model, honoring the configured state-reset mode.
fn total_nll(model: &SrnModel, docs: &[Vec<usize>]) -> (f64, usize) {
    let j_size = model.hidden_units();
    let per_document = model.config.state_reset == StateReset::PerDocument;
    let mut state = vec![0.5; j_size];
    let mut next = vec![0.0; j_size];
    let mut y = vec![0.0; model.input_size()];
    let mut nll = 0.0;
    let mut chars = 0usize;
    for doc in docs {
        if doc.is_empty() {
            continue;
        }
        if per_document {
            state.iter_mut().for_each(|s| *s = 0.5);
        }
        for t in 0..doc.len() {
            if t > 0 {
                model.step_state_into(&state, doc[t - 1], &mut next);
                std::mem::swap(&mut state, &mut next);
            }
            model.output_into(&state, &mut y);
            nll -= y[doc[t]].ln();
        }
        chars += doc.len();
        if !per_document {
            // Consume the final character so the state carries over.
            model.step_state_into(&state, *doc.last().expect("nonempty"), &mut next);
            std::mem::swap(&mut state, &mut next);
        }
    }
    (nll, chars)
}

/// Perplexity of one text: exp of its mean per-character negative
/// log-likelihood.
pub fn perplexity(model: &SrnModel, text: &str) -> Result<f64, SrnError> {
    perplexity_many(model, &[text])
}

/// Pooled perplexity over several texts (state handling per the model's
/// reset mode).
pub fn perplexity_many<S: AsRef<str>>(model: &SrnModel, texts: &[S]) -> Result<f64, SrnError> {
    let docs: Vec<Vec<usize>> = texts.iter().map(|t| model.vocab.encode(t.as_ref())).collect();
    let (nll, chars) = total_nll(model, &docs);
    if chars == 0 {
        return Err(SrnError::EmptyCorpus("text"));
    }
    Ok((nll / chars as f64).exp())
}

/// Pooled cross-entropy in bits per character.
pub fn entropy_bits<S: AsRef<str>>(model: &SrnModel, texts: &[S]) -> Result<f64, SrnError> {
    let docs: Vec<Vec<usize>> = texts.iter().map(|t| model.vocab.encode(t.as_ref())).collect();
    let (nll, chars) = total_nll(model, &docs);
    if chars == 0 {
        return Err(SrnError::EmptyCorpus("text"));
    }
    Ok(nll / (chars as f64 * std::f64::consts::LN_2))
}
