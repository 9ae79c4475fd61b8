//! Structural transfer experiments for recurrent language models.
//!
//! A model is pretrained on a first corpus (L1), its recurrent weights are
//! frozen, its embedding layer is fine-tuned on a common second language
//! (L2), and L2 test perplexity measures how much useful structure the
//! frozen LSTM picked up. The crate contains everything needed for that
//! loop at desk scale:
//!
//! * [`corpusgen`]: random, Zipfian, nesting/flat parentheses and text corpora
//! * [`neuralcore`]: dense kernels, the LSTM cell, losses, gradient checking
//! * [`langmodel`]: the stacked LSTM language model and its parameter partition
//! * [`trainer`]: batched BPTT, SGD with a plateau schedule, perplexity
//! * [`tiltprotocol`]: pretrain / freeze / fine-tune trials and their statistics
//! * [`typostats`]: typological distances, correlation and report output
//!
//! Arithmetic runs in `f64` unless the `f32` feature is enabled. Gradient
//! verification and bit-exact determinism are only guaranteed in `f64`.

pub mod corpusgen;
pub mod langmodel;
pub mod neuralcore;
pub mod par;
pub mod tiltprotocol;
pub mod trainer;
pub mod typostats;

/// Scalar type used for parameters and activations.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
/// Scalar type used for parameters and activations.
#[cfg(feature = "f32")]
pub type Real = f32;

/// Byte width of [`Real`], recorded in checkpoints.
pub const REAL_BYTES: u8 = std::mem::size_of::<Real>() as u8;

pub use corpusgen::{Corpus, SourceKind, Vocab};
pub use langmodel::{LmConfig, LmParams, Partition};
pub use neuralcore::{Mat, RngStream};
pub use par::ExecMode;
pub use trainer::TrainConfig;
