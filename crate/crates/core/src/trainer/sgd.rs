//! Plain SGD with global-norm clipping.

use super::TrainError;
use crate::langmodel::{LmParams, Partition};
use crate::Real;

/// Which tensors an update touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    All,
    Only(Partition),
}

impl View {
    pub fn contains(self, p: Partition) -> bool {
        match self {
            View::All => true,
            View::Only(q) => p == q,
        }
    }
}

/// L2 norm of the gradient restricted to `view`.
pub fn grad_norm(grads: &LmParams, view: View) -> f64 {
    grads
        .tensors()
        .iter()
        .filter(|t| view.contains(t.partition))
        .map(|t| t.tensor.sum_sq())
        .sum::<f64>()
        .sqrt()
}

/// Clips the gradient of `view` to global norm `clip`, then applies
/// `p -= lr * g` to the tensors in `view` only. Returns the pre-clip norm.
pub fn sgd_step(
    params: &mut LmParams,
    grads: &LmParams,
    view: View,
    lr: f64,
    clip: Option<f64>,
) -> Result<f64, TrainError> {
    let norm = grad_norm(grads, view);
    if !norm.is_finite() {
        return Err(TrainError::NonFiniteGradient);
    }
    let scale = match clip {
        Some(c) if norm > c => c / norm,
        _ => 1.0,
    };
    let step = -(lr * scale) as Real;
    if step == 0.0 {
        return Ok(norm);
    }
    let gs = grads.tensors();
    for ((part, p), g) in params.tensors_mut().into_iter().zip(gs) {
        if view.contains(part) {
            p.axpy(step, g.tensor);
        }
    }
    Ok(norm)
}
