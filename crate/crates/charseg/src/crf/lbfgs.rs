//! Limited-memory BFGS with Armijo backtracking, used by CRF training.
//!
//! Hand-rolled on purpose: the loop is ~100 lines, fully deterministic, and
//! being inside the crate keeps training bit-reproducible across platforms
//! without pulling in an optimization framework for one objective.

use std::collections::VecDeque;

/// History depth of the inverse-Hessian approximation.
const MEMORY: usize = 5;
/// Armijo sufficient-decrease constant.
const C1: f64 = 1e-4;
/// Line-search step shrink factor.
const SHRINK: f64 = 0.5;
/// Give up on a line search after this many shrinks.
const MAX_BACKTRACKS: usize = 50;

pub(crate) struct Outcome {
    pub x: Vec<f64>,
    /// Objective at each accepted iterate, starting with the initial point.
    pub trace: Vec<f64>,
    pub converged: bool,
}

pub(crate) struct DivergedAt {
    pub iteration: usize,
    pub reason: String,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-loop recursion: approximate −H·g from the recent (s, y) pairs.
fn direction(grad: &[f64], hist: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = grad.to_vec();
    let mut alphas = Vec::with_capacity(hist.len());
    for (s, y, rho) in hist.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = hist.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in hist.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    for qi in q.iter_mut() {
        *qi = -*qi;
    }
    q
}

/// Minimize `f` from `x0`. `f` returns the objective and its gradient.
/// Stops when the relative objective change drops below `tol`, after
/// `max_iterations` accepted steps, or when no descent step can be found.
pub(crate) fn minimize<F>(
    x0: Vec<f64>,
    max_iterations: usize,
    tol: f64,
    mut f: F,
) -> Result<Outcome, DivergedAt>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut fx, mut grad) = f(&x);
    if !fx.is_finite() {
        return Err(DivergedAt { iteration: 0, reason: "non-finite initial objective".into() });
    }
    let mut trace = vec![fx];
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();

    for iteration in 1..=max_iterations {
        if grad.iter().all(|g| g.abs() < 1e-12) {
            return Ok(Outcome { x, trace, converged: true });
        }
        let mut d = direction(&grad, &hist);
        let mut slope = dot(&grad, &d);
        if slope >= 0.0 {
            // Curvature information went stale; fall back to steepest descent.
            hist.clear();
            d = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &d);
        }

        let mut step = if hist.is_empty() {
            1.0 / (1.0 + dot(&grad, &grad).sqrt())
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (fc, gc) = f(&cand);
            if !fc.is_finite() {
                step *= SHRINK;
                continue;
            }
            if fc <= fx + C1 * step * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= SHRINK;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            // No step decreases the objective measurably: stop here.
            return Ok(Outcome { x, trace, converged: true });
        };
        if !g_new.iter().all(|g| g.is_finite()) {
            return Err(DivergedAt { iteration, reason: "non-finite gradient".into() });
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 {
            if hist.len() == MEMORY {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }

        let rel = (fx - f_new).abs() / fx.abs().max(1.0);
        x = x_new;
        fx = f_new;
        grad = g_new;
        trace.push(fx);
        if rel < tol {
            return Ok(Outcome { x, trace, converged: true });
        }
    }
    Ok(Outcome { x, trace, converged: false })
}
