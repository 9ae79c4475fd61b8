//! Pretrain on an L1, freeze the recurrent weights, fine-tune the embedding
//! side on the L2, and measure L2 test perplexity; repeated over L1s and
//! seeds.

mod stats;
mod store;

pub use stats::{aggregate, mean, sample_variance, t_quantile, welch_ttest, AggregateResult, StatsError, WelchResult};
pub use store::{unix_now, ResultsStore, TRIAL_HEADER};

use std::fmt::Write as _;
use std::io;

use rand::RngCore;

use crate::corpusgen::grammar::AgreementGrammar;
use crate::corpusgen::{
    ingest_text, remap_vocab, Corpus, CorpusError, GenSpec, IngestOptions, LengthDist, Permutation, UnigramDist,
    Vocab,
};
use crate::langmodel::{LmConfig, LmParams, ModelError, Partition};
use crate::neuralcore::RngStream;
use crate::par::{map_ordered, with_workers, ExecMode};
use crate::trainer::{evaluate_perplexity, train_to_convergence, TrainConfig, TrainError, TrainOutcome, View};

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error("recurrent tensors changed during fine-tuning: {0:?}")]
    FreezeViolation(Vec<String>),
    #[error("trial {l1_name}/{seed}: {source}")]
    Trial {
        l1_name: String,
        seed: u64,
        #[source]
        source: Box<ProtocolError>,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// What happens to the embedding side between pretraining and fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmbeddingPolicy {
    /// Fine-tune the L1 embedding in place.
    #[default]
    Keep,
    /// Draw a fresh embedding (and zero decoder bias) first.
    Reinit,
}

impl std::str::FromStr for EmbeddingPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "keep" => Ok(Self::Keep),
            "reinit" => Ok(Self::Reinit),
            _ => Err(format!("unknown embedding policy {s:?} (keep | reinit)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum L1Source {
    Generate { spec: GenSpec, length: usize },
    Corpus(Corpus),
}

#[derive(Debug, Clone, PartialEq)]
pub struct L1Spec {
    pub name: String,
    pub source: L1Source,
    /// Relabel the corpus through a random permutation so that its ids
    /// carry no alignment with the L2's. Off for corpora sampled from the
    /// L2 vocabulary itself.
    pub shuffle_vocab: bool,
}

impl L1Spec {
    /// A natural-language or other external corpus, relabeled so it shares
    /// no ids with the L2.
    pub fn corpus(name: impl Into<String>, corpus: Corpus) -> Self {
        Self {
            name: name.into(),
            source: L1Source::Corpus(corpus),
            shuffle_vocab: true,
        }
    }
}

/// L2 train / validation / test splits.
#[derive(Debug, Clone, PartialEq)]
pub struct L2Data {
    pub train: Corpus,
    pub valid: Corpus,
    pub test: Corpus,
}

impl L2Data {
    /// Text from the agreement grammar, ingested and cut into three
    /// contiguous, non-overlapping splits.
    pub fn from_grammar(train: usize, valid: usize, test: usize, seed: u64) -> Result<(Self, Vocab), CorpusError> {
        let total = train + valid + test;
        let text = AgreementGrammar::new().generate_text(total, seed);
        let (all, vocab) = ingest_text(text.as_bytes(), IngestOptions::new(usize::MAX), None)?;
        let t = all.slice(0, train);
        let v = all.slice(train, train + valid);
        let s = all.slice(train + valid, total);
        Ok((
            Self {
                train: t,
                valid: v,
                test: s,
            },
            vocab,
        ))
    }

    pub fn vocab_size(&self) -> usize {
        self.train.vocab_size()
    }

    /// Unigram distribution of the training split over `v` ids.
    pub fn unigram(&self, v: usize) -> Result<UnigramDist, CorpusError> {
        UnigramDist::from_corpus(&self.train.clone().widen_vocab(v)?)
    }
}

/// The four synthetic L1s: uniform and Zipfian random, nesting and flat
/// parentheses. Their tokens are L2 word ids (uniformly, or from the L2
/// unigram distribution), so they are not relabeled.
pub fn synthetic_l1s(l2: &L2Data, vocab_size: usize, length: usize) -> Result<Vec<L1Spec>, CorpusError> {
    let unigram = l2.unigram(vocab_size)?;
    let mk = |spec: GenSpec| L1Spec {
        name: spec.name().to_string(),
        source: L1Source::Generate { spec, length },
        shuffle_vocab: false,
    };
    Ok(vec![
        mk(GenSpec::Uniform { vocab_size }),
        mk(GenSpec::Zipf {
            unigram: unigram.clone(),
        }),
        mk(GenSpec::Nest {
            p_open: 0.4,
            unigram: unigram.clone(),
        }),
        mk(GenSpec::Flat {
            unigram,
            lengths: LengthDist::default_dependency_lengths(),
        }),
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Mixed into every derived random stream.
    pub id: String,
    pub l1s: Vec<L1Spec>,
    pub corpus_seed: u64,
    /// Tail fraction of each L1 corpus held out for validation.
    pub l1_valid_fraction: f64,
    pub l2: L2Data,
    pub lm: LmConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub seeds: Vec<u64>,
    pub embedding_policy: EmbeddingPolicy,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let err = |m: String| Err(ProtocolError::Spec(m));
        if self.seeds.is_empty() {
            return err("no seeds".into());
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.seeds.len() {
            return err("seeds must be distinct".into());
        }
        if self.l1s.is_empty() {
            return err("no L1s".into());
        }
        let mut names: Vec<&str> = self.l1s.iter().map(|l| l.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.l1s.len() {
            return err("L1 names must be distinct".into());
        }
        if let Some(bad) = self.l1s.iter().find(|l| {
            l.name.is_empty() || !l.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        }) {
            return err(format!("L1 name {:?} must be non-empty [A-Za-z0-9_-]", bad.name));
        }
        if !(self.l1_valid_fraction > 0.0 && self.l1_valid_fraction < 1.0) {
            return err(format!("l1_valid_fraction {} outside (0, 1)", self.l1_valid_fraction));
        }
        for (name, c) in [("train", &self.l2.train), ("valid", &self.l2.valid), ("test", &self.l2.test)] {
            if c.len() < 2 {
                return err(format!("L2 {name} split is empty"));
            }
            if c.vocab_size() > self.lm.vocab_size {
                return err(format!(
                    "L2 {name} vocabulary {} exceeds model vocabulary {}",
                    c.vocab_size(),
                    self.lm.vocab_size
                ));
            }
        }
        self.lm.validate()?;
        self.pretrain.validate()?;
        self.finetune.validate()?;
        Ok(())
    }

    fn trial_rng(&self, l1_name: &str, seed: u64) -> RngStream {
        RngStream::derive(&format!("{}/{}/{}", self.id, l1_name, seed), seed)
    }
}

/// An L1 corpus ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedL1 {
    pub name: String,
    pub train: Corpus,
    pub valid: Corpus,
}

/// Generates (or takes) the L1 corpus, widens it to the model vocabulary,
/// shuffles its ids if requested and splits off the validation tail.
pub fn prepare_l1(spec: &ExperimentSpec, l1: &L1Spec) -> Result<PreparedL1, ProtocolError> {
    let mut rng = RngStream::derive(&format!("{}/corpus/{}", spec.id, l1.name), spec.corpus_seed);
    let corpus = match &l1.source {
        L1Source::Generate { spec: g, length } => g.generate(*length, rng.next_u64())?.0,
        L1Source::Corpus(c) => c.clone(),
    };
    let v = spec.lm.vocab_size;
    if corpus.vocab_size() > v {
        return Err(ProtocolError::Spec(format!(
            "L1 {} vocabulary {} exceeds model vocabulary {v}",
            l1.name,
            corpus.vocab_size()
        )));
    }
    let mut corpus = corpus.widen_vocab(v)?;
    if l1.shuffle_vocab {
        corpus = remap_vocab(&corpus, &Permutation::random(v, &mut rng))?;
    }
    let n_valid = ((corpus.len() as f64) * spec.l1_valid_fraction).round() as usize;
    let (train, valid) = corpus.split_tail(n_valid);
    Ok(PreparedL1 {
        name: l1.name.clone(),
        train,
        valid,
    })
}

/// Full-parameter training on the L1.
pub fn pretrain_l1(spec: &ExperimentSpec, l1: &PreparedL1, seed: u64) -> Result<(LmParams, TrainOutcome), ProtocolError> {
    let rng = spec.trial_rng(&l1.name, seed);
    let init = LmParams::init(&spec.lm, &mut rng.fork("init"))?;
    let tc = TrainConfig {
        seed: rng.fork("pretrain").next_u64(),
        ..spec.pretrain.clone()
    };
    let out = train_to_convergence(init, &spec.lm, View::All, &l1.train, &l1.valid, &tc)?;
    Ok((out.params.clone(), out))
}

/// Embedding-side fine-tuning on the L2 with the recurrent partition frozen.
/// Fails if any recurrent tensor differs bitwise afterwards.
pub fn tilt_finetune(
    pretrained: &LmParams,
    spec: &ExperimentSpec,
    l1_name: &str,
    seed: u64,
) -> Result<(LmParams, TrainOutcome), ProtocolError> {
    let rng = spec.trial_rng(l1_name, seed);
    let mut start = pretrained.clone();
    if spec.embedding_policy == EmbeddingPolicy::Reinit {
        start.reinit_embedding(&mut rng.fork("reinit"));
    }
    let tc = TrainConfig {
        seed: rng.fork("finetune").next_u64(),
        ..spec.finetune.clone()
    };
    let out = train_to_convergence(
        start,
        &spec.lm,
        View::Only(Partition::Embedding),
        &spec.l2.train,
        &spec.l2.valid,
        &tc,
    )?;
    verify_freeze(pretrained, &out.params)?;
    Ok((out.params.clone(), out))
}

/// Names of recurrent tensors that are not bitwise equal.
pub fn verify_freeze(before: &LmParams, after: &LmParams) -> Result<(), ProtocolError> {
    let a = before.tensors();
    let b = after.tensors();
    let changed: Vec<String> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x.partition == Partition::Recurrent && !x.tensor.bit_eq(y.tensor))
        .map(|(x, _)| x.full_name())
        .collect();
    if changed.is_empty() && a.len() == b.len() {
        Ok(())
    } else {
        Err(ProtocolError::FreezeViolation(changed))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub l1_name: String,
    pub seed: u64,
    pub test_ppl: f64,
    /// Best L1 validation perplexity reached in pretraining.
    pub l1_valid_ppl: f64,
    /// Best L2 validation perplexity reached in fine-tuning.
    pub l2_valid_ppl: f64,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
}

pub const RESULTS_HEADER: &str = "l1_name,seed,test_ppl,l1_valid_ppl,l2_valid_ppl,pretrain_epochs,finetune_epochs";

impl TrialResult {
    fn csv_fields(&self) -> String {
        format!(
            "{},{},{:?},{:?},{:?},{},{}",
            self.l1_name,
            self.seed,
            self.test_ppl,
            self.l1_valid_ppl,
            self.l2_valid_ppl,
            self.pretrain_epochs,
            self.finetune_epochs
        )
    }

    /// Parses the leading result fields of a results or trial-file row.
    fn parse_fields(row: &str) -> Option<Self> {
        let f: Vec<&str> = row.split(',').collect();
        if f.len() < 7 {
            return None;
        }
        Some(Self {
            l1_name: f[0].to_string(),
            seed: f[1].parse().ok()?,
            test_ppl: f[2].parse().ok()?,
            l1_valid_ppl: f[3].parse().ok()?,
            l2_valid_ppl: f[4].parse().ok()?,
            pretrain_epochs: f[5].parse().ok()?,
            finetune_epochs: f[6].parse().ok()?,
        })
    }
}

/// One row per trial, without timestamps; identical runs give identical bytes.
pub fn results_csv(results: &[TrialResult]) -> String {
    let mut s = format!("{RESULTS_HEADER}\n");
    for r in results {
        s.push_str(&r.csv_fields());
        s.push('\n');
    }
    s
}

pub fn parse_results_csv(text: &str) -> Result<Vec<TrialResult>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(RESULTS_HEADER) {
        return Err("missing results header".into());
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| TrialResult::parse_fields(l).ok_or_else(|| format!("malformed row {l:?}")))
        .collect()
}

/// Pretrain, fine-tune and test one `(L1, seed)` pair.
pub fn run_trial(spec: &ExperimentSpec, l1: &PreparedL1, seed: u64) -> Result<TrialResult, ProtocolError> {
    let wrap = |e: ProtocolError| ProtocolError::Trial {
        l1_name: l1.name.clone(),
        seed,
        source: Box::new(e),
    };
    let (pre, pre_out) = pretrain_l1(spec, l1, seed).map_err(wrap)?;
    let (tuned, ft_out) = tilt_finetune(&pre, spec, &l1.name, seed).map_err(wrap)?;
    let test_ppl = evaluate_perplexity(&tuned, &spec.lm, &spec.l2.test).map_err(|e| wrap(e.into()))?;
    if !test_ppl.is_finite() {
        return Err(wrap(ProtocolError::Spec("non-finite test perplexity".into())));
    }
    Ok(TrialResult {
        l1_name: l1.name.clone(),
        seed,
        test_ppl,
        l1_valid_ppl: pre_out.state.best_valid_ppl,
        l2_valid_ppl: ft_out.state.best_valid_ppl,
        pretrain_epochs: pre_out.history.rows.len(),
        finetune_epochs: ft_out.history.rows.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub l1_name: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentOutcome {
    /// In spec order: L1s outer, seeds inner.
    pub results: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
    /// Trials taken from the store instead of being run.
    pub reused: usize,
}

/// Runs every `(L1, seed)` trial on a pool of `workers` threads. With a
/// store, finished trials are skipped and new ones saved as they complete;
/// failed trials are recorded and the rest proceed.
pub fn run_experiment(
    spec: &ExperimentSpec,
    store: Option<&ResultsStore>,
    workers: usize,
) -> Result<ExperimentOutcome, ProtocolError> {
    spec.validate()?;
    let prepared: Vec<PreparedL1> = spec.l1s.iter().map(|l| prepare_l1(spec, l)).collect::<Result<_, _>>()?;
    let mut jobs = Vec::new();
    for (i, l1) in spec.l1s.iter().enumerate() {
        for &seed in &spec.seeds {
            let done = match store {
                Some(s) => s.load(&l1.name, seed)?,
                None => None,
            };
            jobs.push((i, seed, done));
        }
    }
    let mode = if workers > 1 {
        ExecMode::Parallel
    } else {
        ExecMode::Sequential
    };
    let outcomes = with_workers(workers, || {
        map_ordered(mode, &jobs, |(i, seed, done)| -> Result<(Result<TrialResult, String>, bool), ProtocolError> {
            if let Some(r) = done {
                return Ok((Ok(r.clone()), true));
            }
            let started = unix_now();
            match run_trial(spec, &prepared[*i], *seed) {
                Ok(r) => {
                    if let Some(s) = store {
                        s.save(&r, started, unix_now())?;
                    }
                    Ok((Ok(r), false))
                }
                Err(e) => {
                    let msg = e.to_string();
                    if let Some(s) = store {
                        s.save_failure(&prepared[*i].name, *seed, &msg)?;
                    }
                    Ok((Err(msg), false))
                }
            }
        })
    });
    let mut out = ExperimentOutcome::default();
    for ((i, seed, _), o) in jobs.iter().zip(outcomes) {
        let (r, reused) = o?;
        out.reused += usize::from(reused);
        match r {
            Ok(r) => out.results.push(r),
            Err(error) => out.failures.push(TrialFailure {
                l1_name: spec.l1s[*i].name.clone(),
                seed: *seed,
                error,
            }),
        }
    }
    Ok(out)
}

/// Test-perplexity aggregates per L1, in order of first appearance.
pub fn aggregate_trials(results: &[TrialResult]) -> Result<Vec<AggregateResult>, ProtocolError> {
    let mut names: Vec<&str> = Vec::new();
    for r in results {
        if !names.contains(&r.l1_name.as_str()) {
            names.push(&r.l1_name);
        }
    }
    names
        .into_iter()
        .map(|n| {
            let v: Vec<f64> = results.iter().filter(|r| r.l1_name == n).map(|r| r.test_ppl).collect();
            Ok(aggregate(n, &v)?)
        })
        .collect()
}

/// `L1,mean,std` with two decimals.
pub fn aggregate_csv(aggs: &[AggregateResult]) -> String {
    let mut s = String::from("L1,mean,std\n");
    for a in aggs {
        let _ = writeln!(s, "{},{:.2},{:.2}", a.l1_name, a.mean, a.std);
    }
    s
}

/// Test perplexities of one L1, in result order.
pub fn ppl_of<'a>(results: &'a [TrialResult], l1_name: &'a str) -> impl Iterator<Item = f64> + 'a {
    results.iter().filter(move |r| r.l1_name == l1_name).map(|r| r.test_ppl)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(name: &str, seed: u64, ppl: f64) -> TrialResult {
        TrialResult {
            l1_name: name.into(),
            seed,
            test_ppl: ppl,
            l1_valid_ppl: 1.5,
            l2_valid_ppl: 2.25,
            pretrain_epochs: 3,
            finetune_epochs: 4,
        }
    }

    #[test]
    fn results_csv_round_trip() {
        let rs = vec![trial("nest", 1, 0.1 + 0.2), trial("zipf", 2, 493.15)];
        let csv = results_csv(&rs);
        assert_eq!(parse_results_csv(&csv).unwrap(), rs);
    }

    #[test]
    fn aggregate_groups_and_is_order_independent() {
        let mut rs = vec![trial("a", 1, 1.0), trial("b", 1, 10.0), trial("a", 2, 3.0), trial("b", 2, 14.0)];
        let ag = aggregate_trials(&rs).unwrap();
        assert_eq!(ag[0].l1_name, "a");
        assert_eq!(ag[0].mean, 2.0);
        rs.reverse();
        let ag2 = aggregate_trials(&rs).unwrap();
        assert_eq!(ag2[1].mean, ag[0].mean);
        assert_eq!(aggregate_csv(&ag), "L1,mean,std\na,2.00,1.41\nb,12.00,2.83\n");
    }

    #[test]
    fn store_round_trip_and_resume_markers() {
        let dir = tempfile::tempdir().unwrap();
        let store = ResultsStore::open(dir.path()).unwrap();
        assert_eq!(store.load("nest", 3).unwrap(), None);
        store.save_failure("nest", 3, "boom").unwrap();
        let r = trial("nest", 3, 171.25);
        store.save(&r, 10, 20).unwrap();
        assert_eq!(store.load("nest", 3).unwrap(), Some(r));
        assert!(!store.failure_path("nest", 3).exists());
        let text = std::fs::read_to_string(store.trial_path("nest", 3)).unwrap();
        assert!(text.ends_with(",10,20\n"));
    }

    #[test]
    fn freeze_check_names_changed_tensors() {
        let cfg = LmConfig::desk(10);
        let a = LmParams::init(&cfg, &mut RngStream::new(0)).unwrap();
        let mut b = a.clone();
        b.embedding.set(0, 0, 9.0);
        verify_freeze(&a, &b).unwrap();
        let v = b.layers[1].w_hh.get(0, 0);
        b.layers[1].w_hh.set(0, 0, crate::Real::from_bits(v.to_bits() ^ 1));
        match verify_freeze(&a, &b) {
            Err(ProtocolError::FreezeViolation(names)) => assert_eq!(names, vec!["lstm.1.w_hh".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spec_policy_parsing() {
        assert_eq!("reinit".parse::<EmbeddingPolicy>().unwrap(), EmbeddingPolicy::Reinit);
        assert!("other".parse::<EmbeddingPolicy>().is_err());
    }
}
