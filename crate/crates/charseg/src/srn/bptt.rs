//! Exact gradients over an unrolled input window.
//!
//! Truncated backpropagation through time treats the recent window of
//! characters as a feedforward network with one hidden layer per step and
//! shared weights. [`bptt_gradient`] computes the exact gradient of the
//! summed next-character cross-entropy over such a window; truncation is the
//! window boundary itself.

use super::{HiddenState, SrnError, SrnModel, WeightMatrix};
use crate::mat::Mat;

/// Gradient of a loss with respect to the three weight matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SrnGradient {
    pub(crate) u: Mat,
    pub(crate) w: Mat,
    pub(crate) v: Mat,
}

impl SrnGradient {
    pub(crate) fn zeros(hidden: usize, input: usize) -> Self {
        SrnGradient {
            u: Mat::zeros(hidden, input),
            w: Mat::zeros(hidden, hidden),
            v: Mat::zeros(input, hidden),
        }
    }

    pub fn get(&self, m: WeightMatrix, row: usize, col: usize) -> f64 {
        match m {
            WeightMatrix::Input => self.u.get(row, col),
            WeightMatrix::Recurrent => self.w.get(row, col),
            WeightMatrix::Output => self.v.get(row, col),
        }
    }

    /// Largest absolute component across all three matrices.
    pub fn max_abs(&self) -> f64 {
        [&self.u, &self.w, &self.v]
            .iter()
            .flat_map(|m| m.data())
            .fold(0.0f64, |acc, x| acc.max(x.abs()))
    }
}

/// Exact gradient of `Σ_t −ln y_{window[t+1]}(t)` over the unrolled window,
/// starting from `initial`. `window[..n-1]` are the inputs, `window[1..]`
/// the prediction targets.
pub fn bptt_gradient(
    model: &SrnModel,
    window: &[usize],
    initial: &HiddenState,
) -> Result<SrnGradient, SrnError> {
    let n = window.len();
    if n < 2 {
        return Err(SrnError::WindowTooShort(n));
    }
    let i_size = model.input_size();
    let j_size = model.hidden_units();
    if let Some(&bad) = window.iter().find(|&&x| x >= i_size) {
        return Err(SrnError::Vocabulary { index: bad, size: i_size });
    }
    if initial.s.len() != j_size {
        return Err(SrnError::Config(format!(
            "initial state has {} units, model has {j_size}",
            initial.s.len()
        )));
    }

    let steps = n - 1;
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut prev: &[f64] = &initial.s;
    for t in 0..steps {
        let mut s = vec![0.0; j_size];
        model.step_state_into(prev, window[t], &mut s);
        let mut y = vec![0.0; i_size];
        model.output_into(&s, &mut y);
        states.push(s);
        outputs.push(y);
        prev = states.last().expect("just pushed");
    }

    let (_, w_mat, v_mat) = model.weights();
    let mut g = SrnGradient::zeros(j_size, i_size);
    // ∂L/∂s(t) arriving from step t+1 through the recurrent weights.
    let mut ds = vec![0.0; j_size];
    for t in (0..steps).rev() {
        let mut dz = outputs[t].clone();
        dz[window[t + 1]] -= 1.0;
        g.v.add_outer(&dz, &states[t]);

        let mut dst = std::mem::take(&mut ds);
        v_mat.tr_mul_vec_add(&dz, &mut dst);
        // Through the sigmoid: ∂L/∂a(t) = ∂L/∂s(t) · s(1−s).
        let da: Vec<f64> = dst
            .iter()
            .zip(&states[t])
            .map(|(d, s)| d * s * (1.0 - s))
            .collect();

        let u_col = window[t];
        for (j, &v) in da.iter().enumerate() {
            g.u.row_mut(j)[u_col] += v;
        }
        let prev_state = if t == 0 { &initial.s } else { &states[t - 1] };
        g.w.add_outer(&da, prev_state);

        ds = dst;
        ds.iter_mut().for_each(|x| *x = 0.0);
        w_mat.tr_mul_vec_add(&da, &mut ds);
    }
    Ok(g)
}
