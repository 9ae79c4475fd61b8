//! Numerical substrate: dense matrices, activations, the LSTM cell, the
//! softmax cross-entropy layer and a finite-difference gradient oracle.

pub mod gradcheck;
pub mod loss;
pub mod lstm;
pub mod mat;
pub mod rng;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use loss::{softmax, softmax_xent};
pub use lstm::{lstm_cell_backward, lstm_cell_forward, CellCache, CellGrads, LstmCellWeights};
pub use mat::Mat;
pub use rng::{RngState, RngStream};

use crate::Real;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NeuralError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dim {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("target {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("cache does not match the weights it is used with")]
    CacheMismatch,
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), NeuralError> {
    if expected == got {
        Ok(())
    } else {
        Err(NeuralError::Dim { what, expected, got })
    }
}

#[inline]
pub fn logistic(x: Real) -> Real {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn tanh(x: Real) -> Real {
    x.tanh()
}
