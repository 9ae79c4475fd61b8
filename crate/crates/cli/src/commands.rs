use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use toml::Value;

use tilt_core::corpusgen::grammar::AgreementGrammar;
use tilt_core::corpusgen::io::{read_corpus, read_length_hist, write_corpus, write_trace, write_vocab};
use tilt_core::corpusgen::{
    ingest_text, remap_vocab, validate_flat, validate_nesting, Corpus, GenSpec, IngestOptions, LengthDist, Permutation,
    UnigramDist, Vocab, UNK_TOKEN,
};
use tilt_core::langmodel::{read_checkpoint, write_checkpoint, Checkpoint, LmConfig, LmParams, Partition};
use tilt_core::tiltprotocol::{
    aggregate_csv, aggregate_trials, parse_results_csv, ppl_of, results_csv, run_experiment, synthetic_l1s,
    verify_freeze, welch_ttest, EmbeddingPolicy, ExperimentSpec, L1Spec, L2Data, ResultsStore,
};
use tilt_core::trainer::{evaluate_perplexity, Trainer, TrainConfig, TrainOutcome, View};
use tilt_core::typostats::{
    appendix_results, emit_report, spanish_distances, DistanceTable, FeatureTable, ReportEntry, ReportFormat, TrialPoint,
};
use tilt_core::{ExecMode, RngStream};

use crate::config::{env_overrides, path_flag, write_manifest, ConfigSources, Effective, RunConfig};
use crate::{CliError, Common};

type Res = Result<(), CliError>;

const SYNTHETIC_L1S: [&str; 4] = ["uniform", "zipf", "nest", "flat"];

fn resolve(common: &Common, flags: Vec<Option<(&'static str, Value)>>) -> Result<Effective, CliError> {
    let mut flags: Vec<_> = flags.into_iter().flatten().collect();
    if let Some(s) = common.seed {
        flags.push(("seed", Value::Integer(s as i64)));
    }
    ConfigSources {
        file: common.config.as_deref(),
        env: env_overrides(),
        sets: &common.sets,
        flags,
    }
    .resolve()
}

fn cfg_err(m: impl Into<String>) -> CliError {
    CliError::Config(m.into())
}

fn existing(p: &Option<PathBuf>, key: &str) -> Result<PathBuf, CliError> {
    let p = p.clone().ok_or_else(|| cfg_err(format!("missing required key `{key}`")))?;
    if !p.is_file() {
        return Err(cfg_err(format!("{key}: no such file {}", p.display())));
    }
    Ok(p)
}

fn output(p: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    let p = p.clone().ok_or_else(|| cfg_err("missing required key `out`"))?;
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() && !d.is_dir() => {
            Err(cfg_err(format!("output directory {} does not exist", d.display())))
        }
        _ => Ok(p),
    }
}

fn sidecar(p: &Path, ext: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn parse_in<T: std::str::FromStr<Err = String>>(v: &Option<String>, default: T) -> Result<T, CliError> {
    v.as_deref().map_or(Ok(default), |s| s.parse().map_err(cfg_err))
}

fn lm_config(c: &RunConfig, vocab_size: usize) -> Result<LmConfig, CliError> {
    let d = LmConfig::desk(vocab_size);
    let lm = LmConfig {
        vocab_size,
        embed_dim: c.embed_dim.unwrap_or(d.embed_dim),
        hidden_dim: c.hidden_dim.unwrap_or(d.hidden_dim),
        layers: c.layers.unwrap_or(d.layers),
        p_emb_drop: c.p_emb_drop.map_or(d.p_emb_drop, |p| p as _),
        p_weight_drop: c.p_weight_drop.map_or(d.p_weight_drop, |p| p as _),
        bptt_len: c.bptt_len.unwrap_or(d.bptt_len),
        tie_weights: c.tie_weights.unwrap_or(d.tie_weights),
    };
    lm.validate().map_err(|e| cfg_err(e.to_string()))?;
    Ok(lm)
}

fn train_config(c: &RunConfig, finetune: bool) -> Result<TrainConfig, CliError> {
    let d = if finetune {
        TrainConfig::finetune()
    } else {
        TrainConfig::default()
    };
    let (lr0, max_epochs) = if finetune {
        (c.finetune_lr0, c.finetune_max_epochs)
    } else {
        (c.lr0, c.max_epochs)
    };
    let tc = TrainConfig {
        lr0: lr0.unwrap_or(d.lr0),
        plateau_patience: c.plateau_patience.unwrap_or(d.plateau_patience),
        lr_decay_factor: c.lr_decay_factor.unwrap_or(d.lr_decay_factor),
        max_reductions: c.max_reductions.unwrap_or(d.max_reductions),
        improvement_epsilon: c.improvement_epsilon.unwrap_or(d.improvement_epsilon),
        batch_size: c.batch_size.unwrap_or(d.batch_size),
        grad_clip: match c.grad_clip {
            Some(g) if g == 0.0 => None,
            Some(g) => Some(g),
            None => d.grad_clip,
        },
        max_epochs: max_epochs.unwrap_or(d.max_epochs),
        seed: c.seed.unwrap_or(0),
        shards: c.shards.unwrap_or(d.shards),
        exec: parse_in(&c.exec, ExecMode::default())?,
    };
    tc.validate().map_err(|e| cfg_err(e.to_string()))?;
    Ok(tc)
}

fn load_corpus(p: &Path) -> anyhow::Result<Corpus> {
    read_corpus(p).with_context(|| format!("reading corpus {}", p.display()))
}

fn unigram_source(c: &RunConfig, kind: &str) -> Result<Option<UnigramDist>, CliError> {
    if let Some(p) = &c.unigram {
        let p = existing(&Some(p.clone()), "unigram")?;
        let mut corpus = load_corpus(&p)?;
        if let Some(v) = c.vocab_size {
            corpus = corpus.widen_vocab(v).map_err(|e| cfg_err(format!("unigram: {e}")))?;
        }
        return Ok(Some(UnigramDist::from_corpus(&corpus)?));
    }
    if let Some(s) = c.zipf_exponent {
        let v = c.require(&c.vocab_size, "vocab_size")?;
        return Ok(Some(UnigramDist::zipf(v, s).map_err(|e| cfg_err(e.to_string()))?));
    }
    if kind == "zipf" {
        return Err(cfg_err("zipf corpora need a unigram source: set `unigram` or `zipf_exponent`"));
    }
    Ok(None)
}

pub fn gen(common: &Common, kind: Option<String>, out: Option<PathBuf>) -> Res {
    let eff = resolve(
        common,
        vec![kind.map(|k| ("kind", Value::String(k))), path_flag("out", &out)],
    )?;
    let c = &eff.config;
    let kind = c.require(&c.kind, "kind")?;
    let out = output(&c.out)?;
    let seed = c.seed.unwrap_or(0);

    let (mut corpus, trace, mut vocab): (Corpus, _, Option<Vocab>) = match kind.as_str() {
        "uniform" | "zipf" | "nest" | "flat" => {
            let length = c.require(&c.length, "length")?;
            let unigram = match unigram_source(c, &kind)? {
                Some(u) => u,
                None => UnigramDist::uniform(c.require(&c.vocab_size, "vocab_size")?)
                    .map_err(|e| cfg_err(e.to_string()))?,
            };
            let spec = match kind.as_str() {
                "uniform" => GenSpec::Uniform {
                    vocab_size: unigram.len(),
                },
                "zipf" => GenSpec::Zipf { unigram },
                "nest" => GenSpec::Nest {
                    p_open: c.p_open.unwrap_or(0.4),
                    unigram,
                },
                _ => GenSpec::Flat {
                    unigram,
                    lengths: match &c.lengths {
                        Some(p) => read_length_hist(existing(&Some(p.clone()), "lengths")?)
                            .map_err(|e| cfg_err(format!("lengths: {e}")))?,
                        None => LengthDist::default_dependency_lengths(),
                    },
                },
            };
            let (corpus, trace) = spec.generate(length, seed).map_err(|e| cfg_err(e.to_string()))?;
            if let Some(t) = &trace {
                match spec {
                    GenSpec::Nest { .. } => validate_nesting(corpus.tokens(), t)?,
                    _ => validate_flat(corpus.tokens(), t)?,
                }
            }
            (corpus, trace, None)
        }
        "grammar" => {
            let length = c.require(&c.length, "length")?;
            // ids come from the fixed lexicon so separately generated splits agree
            let mut entries = AgreementGrammar::lexicon();
            let unk = entries.len() as u32;
            entries.push(UNK_TOKEN.to_string());
            let lexicon = Vocab::new(entries, unk)?;
            let text = AgreementGrammar::new().generate_text(length, seed);
            let (all, vocab) = ingest_text(text.as_bytes(), IngestOptions::new(usize::MAX), Some(&lexicon))?;
            (all.slice(0, length.min(all.len())), None, Some(vocab))
        }
        "text" => {
            let input = existing(&c.input, "input")?;
            let opts = IngestOptions {
                v_max: c.v_max.unwrap_or(usize::MAX),
                lowercase: c.lowercase.unwrap_or(false),
            };
            let f = fs::File::open(&input)?;
            let (corpus, vocab) = ingest_text(std::io::BufReader::new(f), opts, None)?;
            (corpus, None, Some(vocab))
        }
        other => {
            return Err(cfg_err(format!(
                "unknown kind {other:?} (uniform, zipf, nest, flat, grammar, text)"
            )))
        }
    };
    if let Some(v) = c.vocab_size {
        if v > corpus.vocab_size() && vocab.is_none() {
            corpus = corpus.widen_vocab(v)?;
        }
    }
    if c.shuffle_vocab.unwrap_or(false) {
        let perm = Permutation::random(corpus.vocab_size(), &mut RngStream::derive("gen/shuffle", seed));
        corpus = remap_vocab(&corpus, &perm)?;
        if let Some(v) = &vocab {
            let mut entries = vec![String::new(); v.size()];
            for (i, e) in v.entries().iter().enumerate() {
                entries[perm.apply(i as u32) as usize] = e.clone();
            }
            vocab = Some(Vocab::new(entries, perm.apply(v.unk_id()))?);
        }
    }

    write_corpus(&out, &corpus)?;
    if let Some(t) = &trace {
        write_trace(sidecar(&out, ".trace"), t)?;
    }
    if let Some(v) = &vocab {
        write_vocab(sidecar(&out, ".vocab"), v)?;
    }
    let mut prov = BTreeMap::new();
    prov.insert("tokens".into(), Value::Integer(corpus.len() as i64));
    prov.insert("vocab_size".into(), Value::Integer(corpus.vocab_size() as i64));
    write_manifest(&out, "gen", &eff, &prov)?;
    println!("{kind}: {} tokens, vocabulary {} -> {}", corpus.len(), corpus.vocab_size(), out.display());
    Ok(())
}

fn final_checkpoint(cfg: &LmConfig, out: &TrainOutcome) -> Checkpoint {
    let mut ck = Checkpoint::new(cfg.clone(), out.params.clone());
    ck.scalars = vec![
        ("best_valid_ppl".into(), out.state.best_valid_ppl),
        ("epochs".into(), out.history.rows.len() as f64),
    ];
    ck.note = out.history.to_csv();
    ck
}

/// Trains to completion, keeping a resumable `<out>.progress` checkpoint
/// that is removed once the final model is written.
fn train_resumable(
    start: LmParams,
    cfg: &LmConfig,
    view: View,
    train: &Corpus,
    valid: &Corpus,
    tc: &TrainConfig,
    out: &Path,
) -> anyhow::Result<TrainOutcome> {
    let progress = sidecar(out, ".progress");
    let trainer = if progress.is_file() {
        eprintln!("resuming from {}", progress.display());
        Trainer::resume(read_checkpoint(&progress)?, view, train, valid, tc)?
    } else {
        Trainer::new(start, cfg, view, train, valid, tc)?
    };
    let outcome = trainer.run(Some(&progress))?;
    Ok(outcome)
}

fn finish_training(out: &Path, cfg: &LmConfig, outcome: &TrainOutcome, eff: &Effective, command: &str) -> anyhow::Result<()> {
    write_checkpoint(out, &final_checkpoint(cfg, outcome))?;
    fs::write(sidecar(out, ".history.csv"), outcome.history.to_csv())?;
    let mut prov = BTreeMap::new();
    prov.insert("best_valid_ppl".into(), Value::Float(outcome.state.best_valid_ppl));
    prov.insert("epochs".into(), Value::Integer(outcome.history.rows.len() as i64));
    write_manifest(out, command, eff, &prov)?;
    let progress = sidecar(out, ".progress");
    if progress.exists() {
        fs::remove_file(progress)?;
    }
    println!(
        "{command}: {} epochs, best valid ppl {:.3} -> {}",
        outcome.history.rows.len(),
        outcome.state.best_valid_ppl,
        out.display()
    );
    Ok(())
}

pub fn pretrain(common: &Common, train: Option<PathBuf>, valid: Option<PathBuf>, out: Option<PathBuf>) -> Res {
    let eff = resolve(
        common,
        vec![path_flag("train", &train), path_flag("valid", &valid), path_flag("out", &out)],
    )?;
    let c = &eff.config;
    let (train, valid, out) = (existing(&c.train, "train")?, existing(&c.valid, "valid")?, output(&c.out)?);
    let tc = train_config(c, false)?;
    let train = load_corpus(&train)?;
    let valid = load_corpus(&valid)?;
    let v = c.vocab_size.unwrap_or(train.vocab_size().max(valid.vocab_size()));
    let lm = lm_config(c, v)?;
    let init = LmParams::init(&lm, &mut RngStream::derive("pretrain/init", tc.seed)).map_err(anyhow::Error::from)?;
    let outcome = train_resumable(init, &lm, View::All, &train, &valid, &tc, &out)?;
    finish_training(&out, &lm, &outcome, &eff, "pretrain")?;
    Ok(())
}

pub fn tilt(
    common: &Common,
    model: Option<PathBuf>,
    train: Option<PathBuf>,
    valid: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Res {
    let eff = resolve(
        common,
        vec![
            path_flag("model", &model),
            path_flag("train", &train),
            path_flag("valid", &valid),
            path_flag("out", &out),
        ],
    )?;
    let c = &eff.config;
    let (model, train, valid, out) = (
        existing(&c.model, "model")?,
        existing(&c.train, "train")?,
        existing(&c.valid, "valid")?,
        output(&c.out)?,
    );
    let tc = train_config(c, true)?;
    let policy: EmbeddingPolicy = parse_in(&c.embedding_policy, EmbeddingPolicy::Keep)?;
    let ck = read_checkpoint(&model).with_context(|| format!("reading model {}", model.display()))?;
    let train = load_corpus(&train)?;
    let valid = load_corpus(&valid)?;
    let pretrained = ck.params;
    let mut start = pretrained.clone();
    if policy == EmbeddingPolicy::Reinit {
        start.reinit_embedding(&mut RngStream::derive("tilt/reinit", tc.seed));
    }
    let outcome = train_resumable(start, &ck.config, View::Only(Partition::Embedding), &train, &valid, &tc, &out)?;
    verify_freeze(&pretrained, &outcome.params).context("refusing to write the fine-tuned model")?;
    finish_training(&out, &ck.config, &outcome, &eff, "tilt")?;
    Ok(())
}

pub fn eval(common: &Common, model: Option<PathBuf>, corpus: Option<PathBuf>) -> Res {
    let eff = resolve(common, vec![path_flag("model", &model), path_flag("corpus", &corpus)])?;
    let c = &eff.config;
    let (model, corpus) = (existing(&c.model, "model")?, existing(&c.corpus, "corpus")?);
    let ck = read_checkpoint(&model).with_context(|| format!("reading model {}", model.display()))?;
    let corpus = load_corpus(&corpus)?;
    if corpus.vocab_size() > ck.config.vocab_size {
        return Err(anyhow!(
            "dimension mismatch: corpus vocabulary {} exceeds model vocabulary {}",
            corpus.vocab_size(),
            ck.config.vocab_size
        )
        .into());
    }
    let ppl = evaluate_perplexity(&ck.params, &ck.config, &corpus)?;
    println!("perplexity {ppl:.6} over {} tokens", corpus.len());
    Ok(())
}

pub fn wals(common: &Common, features: Option<PathBuf>, languages: Vec<String>) -> Res {
    let eff = resolve(common, vec![path_flag("input", &features)])?;
    let c = &eff.config;
    match &c.input {
        None => {
            let fx = spanish_distances();
            let reference = fx
                .lookup(&fx.reference)
                .map(|e| e.name.clone())
                .unwrap_or_else(|| fx.reference.clone());
            let langs: Vec<String> = if languages.is_empty() {
                fx.entries.iter().filter(|e| !e.matches(&reference)).map(|e| e.name.clone()).collect()
            } else {
                languages
            };
            for l in &langs {
                let e = fx
                    .lookup(l)
                    .ok_or_else(|| anyhow!("{l:?} is not in the shipped distance table"))?;
                println!("{reference}\t{}\t{}\t{}", e.name, e.distance, e.shared);
            }
        }
        Some(p) => {
            let p = existing(&Some(p.clone()), "features")?;
            let table = FeatureTable::parse_tsv(&fs::read_to_string(&p)?)?;
            let names: Vec<String> = if languages.is_empty() {
                table.languages.clone()
            } else {
                languages
            };
            let langs: Vec<&str> = names.iter().map(String::as_str).collect();
            let d = DistanceTable::build(&table, &langs)?;
            for (i, a) in langs.iter().enumerate() {
                for b in &langs[i + 1..] {
                    println!("{a}\t{b}\t{}\t{}", d.get(a, b).unwrap_or(0), d.shared);
                }
            }
        }
    }
    Ok(())
}

pub fn report(
    common: &Common,
    results: Option<PathBuf>,
    out: Option<PathBuf>,
    non_linguistic: Vec<String>,
    format: &str,
    reference: bool,
) -> Res {
    let eff = resolve(common, vec![path_flag("results", &results), path_flag("out", &out)])?;
    let c = &eff.config;
    let out = c.require(&c.out, "out")?;
    let format = match format {
        "csv" => ReportFormat::Csv,
        "md" | "markdown" => ReportFormat::Markdown,
        f => return Err(cfg_err(format!("unknown report format {f:?} (csv, md)"))),
    };
    let fx = spanish_distances();
    let is_linguistic = |name: &str| {
        fx.lookup(name).is_some()
            && !SYNTHETIC_L1S.contains(&name)
            && !non_linguistic.iter().any(|n| n.eq_ignore_ascii_case(name))
    };
    let (entries, trials, significance) = if reference {
        let rows = appendix_results();
        let entries: Vec<ReportEntry> = rows.iter().map(ReportEntry::from_appendix).collect();
        (entries, vec![], None)
    } else {
        let path = existing(&c.results, "results")?;
        let rs = parse_results_csv(&fs::read_to_string(&path)?).map_err(|e| anyhow!("{}: {e}", path.display()))?;
        let aggs = aggregate_trials(&rs)?;
        let entries: Vec<ReportEntry> = aggs
            .iter()
            .map(|a| ReportEntry::from_aggregate(a, is_linguistic(&a.l1_name)))
            .collect();
        let trials: Vec<TrialPoint> = rs
            .iter()
            .filter(|r| is_linguistic(&r.l1_name))
            .map(|r| TrialPoint {
                l1: r.l1_name.clone(),
                ppl: r.test_ppl,
            })
            .collect();
        (entries, trials, Some(significance_vs_zipf(&rs, &aggs)))
    };
    let report = emit_report(&entries, &fx, &trials, format)?;
    fs::create_dir_all(&out)?;
    report.write_to(&out)?;
    if let Some(s) = significance {
        fs::write(out.join("significance.csv"), &s)?;
        print!("{s}");
    }
    write_manifest(&out.join("report"), "report", &eff, &BTreeMap::new())?;
    print!("{}", report.table);
    Ok(())
}

/// Welch tests of every L1 against the Zipfian baseline, when present.
fn significance_vs_zipf(
    rs: &[tilt_core::tiltprotocol::TrialResult],
    aggs: &[tilt_core::tiltprotocol::AggregateResult],
) -> String {
    let mut s = String::from("l1,baseline,mean,baseline_mean,t,df,p\n");
    let base: Vec<f64> = ppl_of(rs, "zipf").collect();
    let Some(b) = aggs.iter().find(|a| a.l1_name == "zipf") else {
        return s;
    };
    for a in aggs.iter().filter(|a| a.l1_name != "zipf") {
        let v: Vec<f64> = ppl_of(rs, &a.l1_name).collect();
        match welch_ttest(&v, &base) {
            Ok(w) => s.push_str(&format!("{},zipf,{},{},{},{},{}\n", a.l1_name, a.mean, b.mean, w.t, w.df, w.p)),
            Err(_) => s.push_str(&format!("{},zipf,{},{},NA,NA,NA\n", a.l1_name, a.mean, b.mean)),
        }
    }
    s
}

fn l2_data(c: &RunConfig) -> Result<L2Data, CliError> {
    if c.train.is_some() || c.valid.is_some() || c.test.is_some() {
        let (tr, va, te) = (existing(&c.train, "train")?, existing(&c.valid, "valid")?, existing(&c.test, "test")?);
        return Ok(L2Data {
            train: load_corpus(&tr)?,
            valid: load_corpus(&va)?,
            test: load_corpus(&te)?,
        });
    }
    let (l2, _) = L2Data::from_grammar(
        c.l2_train_tokens.unwrap_or(100_000),
        c.l2_valid_tokens.unwrap_or(10_000),
        c.l2_test_tokens.unwrap_or(10_000),
        c.l2_seed.unwrap_or(2024),
    )
    .map_err(|e| cfg_err(e.to_string()))?;
    Ok(l2)
}

/// Builds the grid from the configuration. `l1_kinds` entries are synthetic
/// kind names or `name=path` for a corpus file.
pub fn experiment_spec(c: &RunConfig) -> Result<ExperimentSpec, CliError> {
    let l2 = l2_data(c)?;
    let kinds = c
        .l1_kinds
        .clone()
        .unwrap_or_else(|| SYNTHETIC_L1S.iter().map(|s| s.to_string()).collect());
    let mut file_l1s = Vec::new();
    for k in &kinds {
        if let Some((name, path)) = k.split_once('=') {
            let p = existing(&Some(PathBuf::from(path)), "l1_kinds")?;
            file_l1s.push((name.to_string(), load_corpus(&p)?));
        } else if !SYNTHETIC_L1S.contains(&k.as_str()) {
            return Err(cfg_err(format!("unknown L1 kind {k:?}; use one of {SYNTHETIC_L1S:?} or name=path")));
        }
    }
    let max_file_v = file_l1s.iter().map(|(_, c)| c.vocab_size()).max().unwrap_or(0);
    let v = c.vocab_size.unwrap_or(l2.vocab_size().max(max_file_v));
    let synthetic = synthetic_l1s(&l2, v, c.l1_tokens.unwrap_or(200_000)).map_err(|e| cfg_err(e.to_string()))?;
    let mut l1s = Vec::new();
    for k in &kinds {
        match k.split_once('=') {
            Some((name, _)) => {
                let corpus = file_l1s.iter().find(|(n, _)| n == name).unwrap().1.clone();
                l1s.push(L1Spec {
                    shuffle_vocab: c.shuffle_vocab.unwrap_or(true),
                    ..L1Spec::corpus(name, corpus)
                });
            }
            None => l1s.push(synthetic.iter().find(|s| &s.name == k).unwrap().clone()),
        }
    }
    let seed = c.seed.unwrap_or(0);
    let spec = ExperimentSpec {
        id: c.experiment_id.clone().unwrap_or_else(|| "tilt".into()),
        l1s,
        corpus_seed: c.corpus_seed.unwrap_or(seed),
        l1_valid_fraction: c.l1_valid_fraction.unwrap_or(0.05),
        l2,
        lm: lm_config(c, v)?,
        pretrain: train_config(c, false)?,
        finetune: train_config(c, true)?,
        seeds: c.seeds.clone().unwrap_or_else(|| (1..=5).collect()),
        embedding_policy: parse_in(&c.embedding_policy, EmbeddingPolicy::Keep)?,
    };
    spec.validate().map_err(|e| cfg_err(e.to_string()))?;
    Ok(spec)
}

pub fn experiment(common: &Common, out: Option<PathBuf>, workers: Option<usize>) -> Res {
    let eff = resolve(
        common,
        vec![path_flag("out", &out), workers.map(|w| ("workers", Value::Integer(w as i64)))],
    )?;
    let c = &eff.config;
    let out = c.require(&c.out, "out")?;
    let workers = c.workers.unwrap_or(1);
    if workers == 0 {
        return Err(cfg_err("workers must be positive"));
    }
    let spec = experiment_spec(c)?;
    fs::create_dir_all(&out)?;
    let store = ResultsStore::open(out.join("trials"))?;
    let outcome = run_experiment(&spec, Some(&store), workers)?;
    fs::write(out.join("results.csv"), results_csv(&outcome.results))?;
    let mut complete = outcome.results.clone();
    complete.retain(|r| ppl_of(&outcome.results, &r.l1_name).count() >= 2);
    let aggs = aggregate_trials(&complete)?;
    fs::write(out.join("aggregates.csv"), aggregate_csv(&aggs))?;
    let mut prov = BTreeMap::new();
    prov.insert("trials".into(), Value::Integer(outcome.results.len() as i64));
    prov.insert("reused".into(), Value::Integer(outcome.reused as i64));
    write_manifest(&out.join("experiment"), "experiment", &eff, &prov)?;
    print!("{}", aggregate_csv(&aggs));
    println!(
        "{} trials ({} reused) -> {}",
        outcome.results.len(),
        outcome.reused,
        out.display()
    );
    if !outcome.failures.is_empty() {
        for f in &outcome.failures {
            eprintln!("trial {}/{} failed: {}", f.l1_name, f.seed, f.error);
        }
        bail_runtime(outcome.failures.len())?;
    }
    Ok(())
}

fn bail_runtime(n: usize) -> anyhow::Result<()> {
    bail!("{n} trial(s) failed")
}
