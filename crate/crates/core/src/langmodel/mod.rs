//! Stacked LSTM language model with a tied decoder.
//!
//! Parameters are split into two partitions. `Embedding` holds the token
//! embedding (shared with the decoder when tied), the decoder bias and, when
//! untied, the decoder matrix. `Recurrent` holds every LSTM tensor. Transfer
//! experiments freeze `Recurrent` and fine-tune `Embedding`.

mod checkpoint;
mod forward;

pub use checkpoint::{
    read_checkpoint, read_checkpoint_from, tensor_by_name, write_checkpoint, write_checkpoint_to, Checkpoint, CheckpointError,
};
pub use forward::{backward, check_gradients, forward, forward_nll, loss_and_grad, ForwardCache, GradScope, Masks, Mode, State, Window};

use std::fmt;

use crate::neuralcore::{LstmCellWeights, Mat, NeuralError, RngStream};
use crate::Real;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("token id {id} out of range for vocabulary size {vocab}")]
    IdOutOfRange { id: u32, vocab: usize },
    #[error("window of {steps} steps exceeds bptt length {bptt}")]
    WindowTooLong { steps: usize, bptt: usize },
    #[error("state does not match the model: {0}")]
    StateMismatch(String),
    #[error("parameters do not match the config: {0}")]
    ParamMismatch(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// Architecture and regularization settings.
#[derive(Debug, Clone, PartialEq)]
pub struct LmConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    /// Whole-row embedding dropout.
    pub p_emb_drop: f64,
    /// DropConnect rate on every recurrent `W_hh`.
    pub p_weight_drop: f64,
    pub bptt_len: usize,
    pub tie_weights: bool,
}

impl LmConfig {
    /// 3 layers, 300-dim embeddings, 1,150 hidden units, dropout 0.65 / 0.3.
    pub fn full_scale(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 300,
            hidden_dim: 1150,
            layers: 3,
            p_emb_drop: 0.65,
            p_weight_drop: 0.3,
            bptt_len: 70,
            tie_weights: true,
        }
    }

    /// Desk-scale architecture: E = 32, H = 64, L = 2.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            embed_dim: 32,
            hidden_dim: 64,
            layers: 2,
            ..Self::full_scale(vocab_size)
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.vocab_size == 0 || self.embed_dim == 0 || self.hidden_dim == 0 || self.layers == 0 || self.bptt_len == 0 {
            return err("all dimensions must be positive");
        }
        for (name, p) in [("p_emb_drop", self.p_emb_drop), ("p_weight_drop", self.p_weight_drop)] {
            if !(0.0..1.0).contains(&p) {
                return Err(ModelError::Config(format!("{name} = {p} outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// `(input dim, hidden dim)` of layer `l`. With tied weights the last
    /// layer's hidden size is the embedding size so the decoder can reuse
    /// the embedding matrix.
    pub fn layer_dims(&self, l: usize) -> (usize, usize) {
        let input = if l == 0 { self.embed_dim } else { self.hidden_dim };
        let hidden = if l + 1 == self.layers && self.tie_weights {
            self.embed_dim
        } else {
            self.hidden_dim
        };
        (input, hidden)
    }

    /// Width of the representation fed to the decoder.
    pub fn top_dim(&self) -> usize {
        self.layer_dims(self.layers - 1).1
    }
}

/// Freeze boundary label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Partition {
    Embedding,
    Recurrent,
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partition::Embedding => "embedding",
            Partition::Recurrent => "recurrent",
        })
    }
}

/// All model tensors. Also used, with the same shapes, to hold gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LmParams {
    /// `V x E`; doubles as the decoder weight when tied.
    pub embedding: Mat,
    /// `V x top_dim`, present only when untied.
    pub decoder: Option<Mat>,
    /// `1 x V`
    pub decoder_bias: Mat,
    pub layers: Vec<LstmCellWeights>,
}

/// A tensor together with its name and partition.
#[derive(Debug, Clone, Copy)]
pub struct NamedTensor<'a> {
    pub name: &'static str,
    pub layer: Option<usize>,
    pub partition: Partition,
    pub tensor: &'a Mat,
}

impl NamedTensor<'_> {
    /// `embedding`, `decoder.bias`, `lstm.1.w_hh`, ...
    pub fn full_name(&self) -> String {
        match self.layer {
            Some(l) => format!("lstm.{l}.{}", self.name),
            None => self.name.to_string(),
        }
    }
}

impl LmParams {
    pub fn zeros(cfg: &LmConfig) -> Self {
        let v = cfg.vocab_size;
        Self {
            embedding: Mat::zeros(v, cfg.embed_dim),
            decoder: (!cfg.tie_weights).then(|| Mat::zeros(v, cfg.top_dim())),
            decoder_bias: Mat::zeros(1, v),
            layers: (0..cfg.layers)
                .map(|l| {
                    let (i, h) = cfg.layer_dims(l);
                    LstmCellWeights::zeros(i, h)
                })
                .collect(),
        }
    }

    /// Embedding (and untied decoder) ~ U(-0.1, 0.1); LSTM tensors ~
    /// U(-1/sqrt(H), 1/sqrt(H)) with H the layer's hidden size, plus 1 on the
    /// forget-gate bias; decoder bias 0. Draw order: embedding, decoder,
    /// then each layer's `w_ih`, `w_hh`, `b`.
    pub fn init(cfg: &LmConfig, rng: &mut RngStream) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut p = Self::zeros(cfg);
        fill_uniform(&mut p.embedding, 0.1, rng);
        if let Some(d) = p.decoder.as_mut() {
            fill_uniform(d, 0.1, rng);
        }
        for w in p.layers.iter_mut() {
            let h = w.hidden();
            let bound = 1.0 / (h as f64).sqrt();
            fill_uniform(&mut w.w_ih, bound, rng);
            fill_uniform(&mut w.w_hh, bound, rng);
            fill_uniform(&mut w.b, bound, rng);
            for j in h..2 * h {
                let v = w.b.get(0, j);
                w.b.set(0, j, v + 1.0);
            }
        }
        Ok(p)
    }

    /// Re-draws the embedding-side tensors only (decoder bias back to 0).
    pub fn reinit_embedding(&mut self, rng: &mut RngStream) {
        fill_uniform(&mut self.embedding, 0.1, rng);
        if let Some(d) = self.decoder.as_mut() {
            fill_uniform(d, 0.1, rng);
        }
        self.decoder_bias.fill(0.0);
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Mat| Mat::zeros(m.rows(), m.cols());
        Self {
            embedding: z(&self.embedding),
            decoder: self.decoder.as_ref().map(z),
            decoder_bias: z(&self.decoder_bias),
            layers: self
                .layers
                .iter()
                .map(|w| LstmCellWeights {
                    w_ih: z(&w.w_ih),
                    w_hh: z(&w.w_hh),
                    b: z(&w.b),
                })
                .collect(),
        }
    }

    /// Decoder weight: the embedding when tied.
    pub fn decoder_weight(&self) -> &Mat {
        self.decoder.as_ref().unwrap_or(&self.embedding)
    }

    /// Every tensor, embedding side first, in a fixed order.
    pub fn tensors(&self) -> Vec<NamedTensor<'_>> {
        let mut out = vec![NamedTensor {
            name: "embedding",
            layer: None,
            partition: Partition::Embedding,
            tensor: &self.embedding,
        }];
        if let Some(d) = &self.decoder {
            out.push(NamedTensor {
                name: "decoder.weight",
                layer: None,
                partition: Partition::Embedding,
                tensor: d,
            });
        }
        out.push(NamedTensor {
            name: "decoder.bias",
            layer: None,
            partition: Partition::Embedding,
            tensor: &self.decoder_bias,
        });
        for (l, w) in self.layers.iter().enumerate() {
            for (name, t) in [("w_ih", &w.w_ih), ("w_hh", &w.w_hh), ("bias", &w.b)] {
                out.push(NamedTensor {
                    name,
                    layer: Some(l),
                    partition: Partition::Recurrent,
                    tensor: t,
                });
            }
        }
        out
    }

    /// Mutable tensors with their partition, same order as [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(Partition, &mut Mat)> {
        let mut out: Vec<(Partition, &mut Mat)> = vec![(Partition::Embedding, &mut self.embedding)];
        if let Some(d) = self.decoder.as_mut() {
            out.push((Partition::Embedding, d));
        }
        out.push((Partition::Embedding, &mut self.decoder_bias));
        for w in self.layers.iter_mut() {
            out.push((Partition::Recurrent, &mut w.w_ih));
            out.push((Partition::Recurrent, &mut w.w_hh));
            out.push((Partition::Recurrent, &mut w.b));
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.tensor.as_slice().len()).sum()
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn axpy(&mut self, alpha: Real, other: &LmParams) {
        let src = other.tensors();
        for ((_, dst), s) in self.tensors_mut().into_iter().zip(src) {
            dst.axpy(alpha, s.tensor);
        }
    }

    /// Bitwise equality of every tensor in `partition`.
    pub fn partition_bit_eq(&self, other: &LmParams, partition: Partition) -> bool {
        let a = partition_parameters(self, partition);
        let b = partition_parameters(other, partition);
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.tensor.bit_eq(y.tensor))
    }

    /// Flattened copy of every value, in [`Self::tensors`] order.
    pub fn flatten(&self) -> Vec<Real> {
        self.tensors().iter().flat_map(|t| t.tensor.as_slice().iter().copied()).collect()
    }

    /// Inverse of [`Self::flatten`].
    pub fn unflatten_from(&mut self, values: &[Real]) {
        let mut off = 0;
        for (_, t) in self.tensors_mut() {
            let n = t.as_slice().len();
            t.as_mut_slice().copy_from_slice(&values[off..off + n]);
            off += n;
        }
        assert_eq!(off, values.len(), "flattened length mismatch");
    }

    pub fn check_config(&self, cfg: &LmConfig) -> Result<(), ModelError> {
        let expected = LmParams::zeros(cfg);
        let a = self.tensors();
        let b = expected.tensors();
        if a.len() != b.len() {
            return Err(ModelError::ParamMismatch(format!("{} tensors, config implies {}", a.len(), b.len())));
        }
        for (x, y) in a.iter().zip(&b) {
            if x.tensor.shape() != y.tensor.shape() {
                return Err(ModelError::ParamMismatch(format!(
                    "{} has shape {:?}, config implies {:?}",
                    x.full_name(),
                    x.tensor.shape(),
                    y.tensor.shape()
                )));
            }
        }
        Ok(())
    }
}

fn fill_uniform(m: &mut Mat, bound: f64, rng: &mut RngStream) {
    for v in m.as_mut_slice() {
        *v = rng.uniform_range(-bound, bound) as Real;
    }
}

/// The tensors carrying `label`.
pub fn partition_parameters(params: &LmParams, label: Partition) -> Vec<NamedTensor<'_>> {
    params.tensors().into_iter().filter(|t| t.partition == label).collect()
}
