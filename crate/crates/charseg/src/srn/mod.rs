//! The simple recurrent network (Elman network) character language model.
//!
//! One hidden layer of sigmoid units feeds back into itself: the state after
//! consuming a character is a function of that character's one-hot input and
//! the previous state, and a softmax readout over the state predicts the
//! next character. Training is stochastic gradient descent with truncated
//! backpropagation through time.

mod bptt;
mod io;
mod train;

pub use bptt::{bptt_gradient, SrnGradient};
pub use io::{load, load_file, save, save_file};
pub use train::{
    entropy_bits, perplexity, perplexity_many, train_lm, train_lm_with_report, IterationReport,
    StopReason, TrainReport,
};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::CharVocab;
use crate::mat::Mat;

#[derive(Debug, Error)]
pub enum SrnError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("input index {index} out of range for vocabulary of size {size}")]
    Vocabulary { index: usize, size: usize },
    #[error("window of length {0} is too short: need at least 2 characters")]
    WindowTooShort(usize),
    #[error("empty {0}: no characters to process")]
    EmptyCorpus(&'static str),
    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },
    #[error("bad model file: {0}")]
    BadModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Names the three weight matrices for indexed access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMatrix {
    /// U: input→hidden, J×I.
    Input,
    /// W: hidden→hidden, J×J.
    Recurrent,
    /// V: hidden→output, I×J.
    Output,
}

pub const WEIGHT_MATRICES: [WeightMatrix; 3] =
    [WeightMatrix::Input, WeightMatrix::Recurrent, WeightMatrix::Output];

/// When the hidden state rewinds to its initial value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateReset {
    /// Reset at every document boundary (default).
    PerDocument,
    /// Reset only at the start of a pass; state carries across documents.
    Continuous,
}

/// Hyperparameters for SRN training.
#[derive(Debug, Clone, PartialEq)]
pub struct SrnConfig {
    pub hidden_units: usize,
    /// How many hidden layers back an error signal travels before truncation.
    pub bptt_steps: usize,
    pub initial_learning_rate: f64,
    /// Relative validation-entropy improvement below which the learning rate
    /// starts halving.
    pub lr_halving_threshold: f64,
    pub max_iterations: usize,
    /// Weights start uniform in `[-init_scale, +init_scale]`.
    pub init_scale: f64,
    pub seed: u64,
    pub state_reset: StateReset,
}

impl Default for SrnConfig {
    fn default() -> Self {
        SrnConfig {
            hidden_units: 400,
            bptt_steps: 10,
            initial_learning_rate: 0.1,
            lr_halving_threshold: 0.003,
            max_iterations: 50,
            init_scale: 0.1,
            seed: 1,
            state_reset: StateReset::PerDocument,
        }
    }
}

impl SrnConfig {
    pub fn validate(&self) -> Result<(), SrnError> {
        let positive = [
            ("hidden_units", self.hidden_units as f64),
            ("bptt_steps", self.bptt_steps as f64),
            ("initial_learning_rate", self.initial_learning_rate),
            ("max_iterations", self.max_iterations as f64),
            ("init_scale", self.init_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SrnError::Config(format!("{name} must be strictly positive, got {v}")));
            }
        }
        if !(self.lr_halving_threshold >= 0.0) {
            return Err(SrnError::Config(format!(
                "lr_halving_threshold must be non-negative, got {}",
                self.lr_halving_threshold
            )));
        }
        Ok(())
    }
}

/// Hidden layer activations after `t` forward steps.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub s: Vec<f64>,
    pub t: usize,
}

/// Predicted distribution over the next character.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputDistribution {
    pub y: Vec<f64>,
}

/// The trained (or training) network: vocabulary plus the three weight
/// matrices. `u` maps one-hot inputs to the hidden layer (J×I), `w` is the
/// recurrent hidden→hidden map (J×J), `v` the hidden→output readout (I×J).
#[derive(Debug, Clone, PartialEq)]
pub struct SrnModel {
    vocab: CharVocab,
    u: Mat,
    w: Mat,
    v: Mat,
    config: SrnConfig,
}

/// Numerically stable logistic function.
pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Softmax with max-shift, so the largest exponent is exp(0).
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let mut y = z.to_vec();
    softmax_in_place(&mut y);
    y
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

impl SrnModel {
    /// Fresh model with weights drawn uniformly from
    /// `[-init_scale, +init_scale]` by a generator seeded from the config.
    pub fn new_random(vocab: CharVocab, config: SrnConfig) -> Result<Self, SrnError> {
        config.validate()?;
        let i = vocab.size();
        let j = config.hidden_units;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let dist = Uniform::new_inclusive(-config.init_scale, config.init_scale);
        let mut draw = |rows: usize, cols: usize| {
            Mat::from_fn(rows, cols, |_, _| dist.sample(&mut rng))
        };
        let u = draw(j, i);
        let w = draw(j, j);
        let v = draw(i, j);
        Ok(SrnModel { vocab, u, w, v, config })
    }

    pub(crate) fn from_parts(vocab: CharVocab, u: Mat, w: Mat, v: Mat, config: SrnConfig) -> Self {
        debug_assert_eq!(u.rows(), config.hidden_units);
        debug_assert_eq!(u.cols(), vocab.size());
        debug_assert_eq!(w.rows(), config.hidden_units);
        debug_assert_eq!(w.cols(), config.hidden_units);
        debug_assert_eq!(v.rows(), vocab.size());
        debug_assert_eq!(v.cols(), config.hidden_units);
        SrnModel { vocab, u, w, v, config }
    }

    pub fn vocab(&self) -> &CharVocab {
        &self.vocab
    }

    pub fn config(&self) -> &SrnConfig {
        &self.config
    }

    /// Input dimensionality: vocabulary size including UNK.
    pub fn input_size(&self) -> usize {
        self.vocab.size()
    }

    pub fn hidden_units(&self) -> usize {
        self.config.hidden_units
    }

    pub(crate) fn weights(&self) -> (&Mat, &Mat, &Mat) {
        (&self.u, &self.w, &self.v)
    }

    fn matrix(&self, m: WeightMatrix) -> &Mat {
        match m {
            WeightMatrix::Input => &self.u,
            WeightMatrix::Recurrent => &self.w,
            WeightMatrix::Output => &self.v,
        }
    }

    /// (rows, cols) of one weight matrix.
    pub fn weight_dims(&self, m: WeightMatrix) -> (usize, usize) {
        let mat = self.matrix(m);
        (mat.rows(), mat.cols())
    }

    pub fn weight(&self, m: WeightMatrix, row: usize, col: usize) -> f64 {
        self.matrix(m).get(row, col)
    }

    /// Overwrite a single weight. Intended for probing and ablation; the
    /// caller keeps weights finite.
    pub fn set_weight(&mut self, m: WeightMatrix, row: usize, col: usize, value: f64) {
        let mat = match m {
            WeightMatrix::Input => &mut self.u,
            WeightMatrix::Recurrent => &mut self.w,
            WeightMatrix::Output => &mut self.v,
        };
        mat.set(row, col, value);
    }

    /// The state before any input: all units at 0.5 (sigmoid of zero).
    pub fn initial_state(&self) -> HiddenState {
        HiddenState { s: vec![0.5; self.config.hidden_units], t: 0 }
    }

    /// New hidden state from consuming `input`, written into `out`.
    pub(crate) fn step_state_into(&self, prev: &[f64], input: usize, out: &mut [f64]) {
        self.w.mul_vec_into(prev, out);
        for (j, o) in out.iter_mut().enumerate() {
            *o = sigmoid(*o + self.u.get(j, input));
        }
    }

    /// Readout distribution for state `s`, written into `out`.
    pub(crate) fn output_into(&self, s: &[f64], out: &mut [f64]) {
        self.v.mul_vec_into(s, out);
        softmax_in_place(out);
    }

    /// One forward step: consume `input`, return the new state and the
    /// distribution over the next character.
    pub fn forward_step(
        &self,
        state: &HiddenState,
        input: usize,
    ) -> Result<(HiddenState, OutputDistribution), SrnError> {
        if input >= self.input_size() {
            return Err(SrnError::Vocabulary { index: input, size: self.input_size() });
        }
        let mut s = vec![0.0; self.config.hidden_units];
        self.step_state_into(&state.s, input, &mut s);
        let mut y = vec![0.0; self.input_size()];
        self.output_into(&s, &mut y);
        Ok((HiddenState { s, t: state.t + 1 }, OutputDistribution { y }))
    }
}
