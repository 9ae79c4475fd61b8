//! The epoch loop.

use std::fmt::Write as _;
use std::path::Path;

use super::batch::{batchify, Batches};
use super::eval::evaluate_tokens;
use super::schedule::{PlateauSchedule, ScheduleEvent};
use super::sgd::{sgd_step, View};
use super::{TrainConfig, TrainError, TrainState};
use crate::corpusgen::Corpus;
use crate::langmodel::{
    backward, forward, write_checkpoint, Checkpoint, GradScope, LmConfig, LmParams, Masks, ModelError, State,
};
use crate::neuralcore::RngStream;
use crate::par::map_ordered;
use crate::Real;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_ppl: f64,
    pub valid_ppl: f64,
    /// Rate used during the epoch.
    pub lr: f64,
    /// Reductions applied before the epoch ran.
    pub reductions_used: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub rows: Vec<HistoryRow>,
}

impl History {
    pub const HEADER: &'static str = "epoch,train_ppl,valid_ppl,lr,reductions_used";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        s.push('\n');
        for r in &self.rows {
            // `{:?}` prints the shortest string that round-trips
            let _ = writeln!(
                s,
                "{},{:?},{:?},{:?},{}",
                r.epoch, r.train_ppl, r.valid_ppl, r.lr, r.reductions_used
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(Self::HEADER) {
            return Err("missing history header".into());
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || format!("history line {}: {line:?}", i + 2);
            if f.len() != 5 {
                return Err(bad());
            }
            rows.push(HistoryRow {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_ppl: f[1].parse().map_err(|_| bad())?,
                valid_ppl: f[2].parse().map_err(|_| bad())?,
                lr: f[3].parse().map_err(|_| bad())?,
                reductions_used: f[4].parse().map_err(|_| bad())?,
            });
        }
        Ok(Self { rows })
    }

    pub fn best_valid(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.valid_ppl).min_by(f64::total_cmp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Plateau reached with all reductions used.
    Converged,
    MaxEpochs,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation perplexity.
    pub params: LmParams,
    pub history: History,
    pub state: TrainState,
    pub stop: StopReason,
}

/// Resumable training run over fixed corpora.
pub struct Trainer {
    cfg: LmConfig,
    tc: TrainConfig,
    view: View,
    shards: Vec<Batches>,
    valid: Vec<u32>,
    params: LmParams,
    best: LmParams,
    schedule: PlateauSchedule,
    best_valid: f64,
    epoch: usize,
    history: History,
    rng: RngStream,
    done: Option<StopReason>,
}

impl Trainer {
    /// `view` selects the tensors that are trained; with
    /// `View::Only(Partition::Embedding)` the recurrent weights get no
    /// gradient at all.
    pub fn new(
        params: LmParams,
        cfg: &LmConfig,
        view: View,
        train: &Corpus,
        valid: &Corpus,
        tc: &TrainConfig,
    ) -> Result<Self, TrainError> {
        tc.validate()?;
        cfg.validate()?;
        params.check_config(cfg)?;
        for c in [train, valid] {
            if c.vocab_size() > cfg.vocab_size {
                return Err(ModelError::Config(format!(
                    "corpus vocabulary {} exceeds model vocabulary {}",
                    c.vocab_size(),
                    cfg.vocab_size
                ))
                .into());
            }
        }
        if valid.len() < 2 {
            return Err(TrainError::EmptyCorpus);
        }
        let batches = batchify(train.tokens(), tc.batch_size, cfg.bptt_len)?;
        Ok(Self {
            cfg: cfg.clone(),
            tc: tc.clone(),
            view,
            shards: batches.split(tc.shards),
            valid: valid.tokens().to_vec(),
            best: params.clone(),
            params,
            schedule: PlateauSchedule::new(
                tc.lr0,
                tc.lr_decay_factor,
                tc.plateau_patience,
                tc.max_reductions,
                tc.improvement_epsilon,
            ),
            best_valid: f64::INFINITY,
            epoch: 0,
            history: History::default(),
            rng: RngStream::derive("trainer", tc.seed),
            done: None,
        })
    }

    /// Rebuilds a trainer from [`Trainer::checkpoint`] output. The corpora
    /// and configs must be the ones the checkpoint was written with.
    pub fn resume(
        ck: Checkpoint,
        view: View,
        train: &Corpus,
        valid: &Corpus,
        tc: &TrainConfig,
    ) -> Result<Self, TrainError> {
        let mut t = Self::new(ck.params, &ck.config, view, train, valid, tc)?;
        let missing = |what: &str| TrainError::Config(format!("checkpoint lacks {what}"));
        let get = |name: &str| ck.scalars.iter().find(|(n, _)| n == name).map(|&(_, v)| v).ok_or_else(|| missing(name));
        t.epoch = get("epoch")? as usize;
        t.schedule.reductions = get("reductions_used")? as u32;
        t.schedule.bad_evals = get("bad_evals")? as usize;
        t.schedule.best = get("schedule_best")?;
        t.best_valid = get("best_valid_ppl")?;
        t.done = match get("done")? as u8 {
            1 => Some(StopReason::Converged),
            2 => Some(StopReason::MaxEpochs),
            _ => None,
        };
        t.rng = RngStream::from_state(ck.rng.ok_or_else(|| missing("rng state"))?);
        t.best = ck.best.ok_or_else(|| missing("best parameters"))?;
        t.history = History::from_csv(&ck.note).map_err(TrainError::Config)?;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.cfg.clone(), self.params.clone());
        ck.best = Some(self.best.clone());
        ck.rng = Some(self.rng.state());
        ck.scalars = vec![
            ("epoch".into(), self.epoch as f64),
            ("reductions_used".into(), self.schedule.reductions as f64),
            ("bad_evals".into(), self.schedule.bad_evals as f64),
            ("schedule_best".into(), self.schedule.best),
            ("best_valid_ppl".into(), self.best_valid),
            (
                "done".into(),
                match self.done {
                    None => 0.0,
                    Some(StopReason::Converged) => 1.0,
                    Some(StopReason::MaxEpochs) => 2.0,
                },
            ),
            ("lr".into(), self.schedule.lr()),
        ];
        ck.note = self.history.to_csv();
        ck
    }

    pub fn state(&self) -> TrainState {
        TrainState {
            lr: self.schedule.lr(),
            epoch: self.epoch,
            best_valid_ppl: self.best_valid,
            reductions_used: self.schedule.reductions,
            bad_evals: self.schedule.bad_evals,
        }
    }

    pub fn params(&self) -> &LmParams {
        &self.params
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn is_done(&self) -> bool {
        self.done.is_some()
    }

    fn scope(&self) -> GradScope {
        match self.view {
            View::All => GradScope::All,
            View::Only(_) => GradScope::EmbeddingOnly,
        }
    }

    /// One pass over the training streams; returns the training perplexity
    /// (with dropout active).
    fn train_epoch(&mut self) -> Result<f64, TrainError> {
        let cfg = &self.cfg;
        let scope = self.scope();
        let mut states: Vec<State> = self.shards.iter().map(|s| State::zeros(cfg, s.batch())).collect();
        let windows = self.shards[0].num_windows();
        let lr = self.schedule.lr();
        let (mut total_nll, mut total_n) = (0.0f64, 0usize);
        let ids: Vec<usize> = (0..self.shards.len()).collect();
        for i in 0..windows {
            let masks = Masks::sample(cfg, &mut self.rng);
            let params = &self.params;
            let shards = &self.shards;
            let states_ref = &states;
            let results = map_ordered(self.tc.exec, &ids, |&s| -> Result<_, ModelError> {
                let w = shards[s].window(i);
                let (nll, next, cache) = forward(params, cfg, &w, &states_ref[s], &masks)?;
                let mut g = params.zeros_like();
                backward(params, cfg, &cache, &masks, 1.0, scope, &mut g)?;
                Ok((nll, next, g, cache.rows()))
            });
            let mut grads: Option<LmParams> = None;
            let mut n = 0;
            for (s, r) in results.into_iter().enumerate() {
                let (nll, next, g, rows) = r?;
                total_nll += nll;
                n += rows;
                states[s] = next;
                match grads.as_mut() {
                    None => grads = Some(g),
                    Some(acc) => acc.axpy(1.0, &g),
                }
            }
            total_n += n;
            if !total_nll.is_finite() {
                return Err(TrainError::NonFinite {
                    what: "training loss",
                    epoch: self.epoch + 1,
                });
            }
            let mut grads = grads.expect("at least one shard");
            let inv = 1.0 / n as Real;
            for (_, t) in grads.tensors_mut() {
                t.scale(inv);
            }
            sgd_step(&mut self.params, &grads, self.view, lr, self.tc.grad_clip).map_err(|e| match e {
                TrainError::NonFiniteGradient => TrainError::NonFinite {
                    what: "gradient",
                    epoch: self.epoch + 1,
                },
                e => e,
            })?;
        }
        Ok((total_nll / total_n as f64).exp())
    }

    /// Trains one epoch, evaluates, and applies the schedule. Returns
    /// `Some(reason)` once training is finished.
    pub fn step_epoch(&mut self) -> Result<Option<StopReason>, TrainError> {
        if let Some(r) = self.done {
            return Ok(Some(r));
        }
        let lr = self.schedule.lr();
        let reductions = self.schedule.reductions;
        let train_ppl = self.train_epoch()?;
        self.epoch += 1;
        let (nll, n) = evaluate_tokens(&self.params, &self.cfg, &self.valid)?;
        let valid_ppl = (nll / n as f64).exp();
        if !valid_ppl.is_finite() {
            return Err(TrainError::NonFinite {
                what: "validation perplexity",
                epoch: self.epoch,
            });
        }
        self.history.rows.push(HistoryRow {
            epoch: self.epoch,
            train_ppl,
            valid_ppl,
            lr,
            reductions_used: reductions,
        });
        if valid_ppl < self.best_valid {
            self.best_valid = valid_ppl;
            self.best = self.params.clone();
        }
        if self.schedule.observe(valid_ppl) == ScheduleEvent::Stop {
            self.done = Some(StopReason::Converged);
        } else if self.epoch >= self.tc.max_epochs {
            self.done = Some(StopReason::MaxEpochs);
        }
        Ok(self.done)
    }

    /// Runs to completion, writing a checkpoint after every epoch when
    /// `checkpoint_path` is given.
    pub fn run(mut self, checkpoint_path: Option<&Path>) -> Result<TrainOutcome, TrainError> {
        let stop = loop {
            let done = self.step_epoch()?;
            if let Some(p) = checkpoint_path {
                write_checkpoint(p, &self.checkpoint())?;
            }
            if let Some(r) = done {
                break r;
            }
        };
        Ok(self.finish(stop))
    }

    fn finish(self, stop: StopReason) -> TrainOutcome {
        let state = self.state();
        TrainOutcome {
            params: self.best,
            history: self.history,
            state,
            stop,
        }
    }
}

/// Trains the tensors in `view` until the plateau schedule is exhausted or
/// the epoch cap is hit, and returns the best-validation parameters.
pub fn train_to_convergence(
    params: LmParams,
    cfg: &LmConfig,
    view: View,
    train: &Corpus,
    valid: &Corpus,
    tc: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    Trainer::new(params, cfg, view, train, valid, tc)?.run(None)
}
