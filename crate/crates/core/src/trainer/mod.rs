//! SGD training with a plateau learning-rate schedule, batched BPTT and
//! perplexity evaluation.

mod batch;
mod eval;
mod run;
mod schedule;
mod sgd;

pub use batch::{batchify, Batches};
pub use eval::{evaluate_perplexity, evaluate_tokens};
pub use run::{train_to_convergence, History, HistoryRow, StopReason, TrainOutcome, Trainer};
pub use schedule::{PlateauSchedule, ScheduleEvent};
pub use sgd::{grad_norm, sgd_step, View};

use crate::langmodel::{CheckpointError, ModelError};
use crate::par::ExecMode;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("corpus of {len} tokens is too short: need at least {needed}")]
    CorpusTooShort { len: usize, needed: usize },
    #[error("cannot evaluate on an empty corpus")]
    EmptyCorpus,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("non-finite {what} at epoch {epoch}")]
    NonFinite { what: &'static str, epoch: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    /// Consecutive non-improving evaluations before the rate is cut.
    pub plateau_patience: usize,
    pub lr_decay_factor: f64,
    pub max_reductions: u32,
    /// Relative validation improvement below which an epoch counts as a plateau.
    pub improvement_epsilon: f64,
    pub batch_size: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub max_epochs: usize,
    pub seed: u64,
    /// Number of stream groups each step is split into. Results depend on
    /// this number but not on `exec`.
    pub shards: usize,
    pub exec: ExecMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 30.0,
            plateau_patience: 1,
            lr_decay_factor: 4.0,
            max_reductions: 5,
            improvement_epsilon: 1e-3,
            batch_size: 20,
            grad_clip: Some(0.25),
            max_epochs: 100,
            seed: 0,
            shards: 1,
            exec: ExecMode::default(),
        }
    }
}

impl TrainConfig {
    /// Defaults for embedding-only fine-tuning: same schedule, `lr0 = 3`.
    pub fn finetune() -> Self {
        Self {
            lr0: 3.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(self.lr_decay_factor > 1.0) {
            return bad(format!("decay factor must exceed 1, got {}", self.lr_decay_factor));
        }
        if self.plateau_patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return bad("patience, batch size and max epochs must be positive".into());
        }
        if self.shards == 0 || self.shards > self.batch_size {
            return bad(format!("shards must be in 1..={}, got {}", self.batch_size, self.shards));
        }
        if !(self.improvement_epsilon >= 0.0) {
            return bad("improvement epsilon must be non-negative".into());
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad(format!("grad clip must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

/// Progress counters saved with checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub lr: f64,
    /// Completed epochs.
    pub epoch: usize,
    pub best_valid_ppl: f64,
    pub reductions_used: u32,
    pub bad_evals: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
        assert_eq!(TrainConfig::finetune().lr0, 3.0);
        let bad = TrainConfig {
            lr_decay_factor: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            shards: 21,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
