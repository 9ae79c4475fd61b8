#![cfg(not(feature = "f32"))]
//! Acceptance criteria. Every test writes a single `PASS`/`FAIL` line to
//! stderr, bypassing the harness capture, and fails with its criterion.
//!
//! The flagship grid (criteria 1, 2, 3 and 8) is run once and shared.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;

use tilt_core::corpusgen::{
    gen_flat_parens, gen_nesting_parens, infer_nesting_pairs, sample_unigram, validate_flat, validate_nesting,
    Corpus, LengthDist, NestGenConfig, SourceKind, UnigramDist,
};
use tilt_core::langmodel::{check_gradients, LmConfig, LmParams, Masks, Mode, Partition, State, Window};
use tilt_core::neuralcore::RngStream;
use tilt_core::tiltprotocol::{
    aggregate_trials, prepare_l1, pretrain_l1, results_csv, run_experiment, synthetic_l1s, tilt_finetune,
    welch_ttest, AggregateResult, EmbeddingPolicy, ExperimentSpec, L2Data, ProtocolError, TrialResult,
};
use tilt_core::trainer::{evaluate_perplexity, train_to_convergence, TrainConfig, View};
use tilt_core::typostats::{
    appendix_results, emit_report, pearson_r2, spanish_distances, ReportEntry, ReportFormat, ResultGroup,
};

fn verdict(id: u32, title: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "\n{tag} [{id}] {title}: {detail}");
    assert!(pass, "criterion {id} ({title}) failed: {detail}");
}

// Flagship grid.
const V: usize = 200;
const L1_TOKENS: usize = 200_000;
const L2_TRAIN: usize = 100_000;
const L2_VALID: usize = 10_000;
const L2_TEST: usize = 10_000;
const L2_SEED: u64 = 2024;
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const PRETRAIN_EPOCHS: usize = 16;
const FINETUNE_EPOCHS: usize = 4;
const PATIENCE: usize = 3;
const BATCH: usize = 10;
const P_EMB_DROP: f64 = 0.0;
const P_WEIGHT_DROP: f64 = 0.3;
const BUDGET: Duration = Duration::from_secs(45 * 60);
const ALPHA: f64 = 0.05;

fn flagship_spec() -> ExperimentSpec {
    let (l2, _) = L2Data::from_grammar(L2_TRAIN, L2_VALID, L2_TEST, L2_SEED).unwrap();
    ExperimentSpec {
        id: "acceptance".into(),
        l1s: synthetic_l1s(&l2, V, L1_TOKENS).unwrap(),
        corpus_seed: 7,
        l1_valid_fraction: 0.05,
        l2,
        lm: LmConfig {
            p_emb_drop: P_EMB_DROP as _,
            p_weight_drop: P_WEIGHT_DROP as _,
            ..LmConfig::desk(V)
        },
        pretrain: TrainConfig {
            max_epochs: PRETRAIN_EPOCHS,
            plateau_patience: PATIENCE,
            batch_size: BATCH,
            ..TrainConfig::default()
        },
        finetune: TrainConfig {
            max_epochs: FINETUNE_EPOCHS,
            plateau_patience: PATIENCE,
            batch_size: BATCH,
            ..TrainConfig::finetune()
        },
        seeds: SEEDS.to_vec(),
        embedding_policy: EmbeddingPolicy::Keep,
    }
}

struct Grid {
    spec: ExperimentSpec,
    results: Vec<TrialResult>,
    /// `(l1, seed, recurrent tensors compared, violation)` per trial.
    freeze: Vec<(String, u64, usize, Option<String>)>,
    failures: Vec<String>,
    elapsed: Duration,
}

fn run_grid() -> Grid {
    let spec = flagship_spec();
    let t0 = Instant::now();
    let mut results = Vec::new();
    let mut freeze = Vec::new();
    let mut failures = Vec::new();
    for l1 in &spec.l1s {
        let prepared = prepare_l1(&spec, l1).unwrap();
        for &seed in &spec.seeds {
            let (pre, pre_out) = match pretrain_l1(&spec, &prepared, seed) {
                Ok(x) => x,
                Err(e) => {
                    failures.push(format!("{}/{seed}: {e}", l1.name));
                    continue;
                }
            };
            let recurrent = pre.tensors().iter().filter(|t| t.partition == Partition::Recurrent).count();
            let (tuned, ft_out) = match tilt_finetune(&pre, &spec, &l1.name, seed) {
                Ok(x) => x,
                Err(ProtocolError::FreezeViolation(names)) => {
                    freeze.push((l1.name.clone(), seed, recurrent, Some(names.join(","))));
                    continue;
                }
                Err(e) => {
                    failures.push(format!("{}/{seed}: {e}", l1.name));
                    continue;
                }
            };
            // independent of the check inside tilt_finetune
            let changed: Vec<String> = pre
                .tensors()
                .iter()
                .zip(tuned.tensors())
                .filter(|(a, b)| a.partition == Partition::Recurrent && !a.tensor.bit_eq(b.tensor))
                .map(|(a, _)| a.full_name())
                .collect();
            freeze.push((
                l1.name.clone(),
                seed,
                recurrent,
                (!changed.is_empty()).then(|| changed.join(",")),
            ));
            let test_ppl = evaluate_perplexity(&tuned, &spec.lm, &spec.l2.test).unwrap();
            results.push(TrialResult {
                l1_name: l1.name.clone(),
                seed,
                test_ppl,
                l1_valid_ppl: pre_out.state.best_valid_ppl,
                l2_valid_ppl: ft_out.state.best_valid_ppl,
                pretrain_epochs: pre_out.history.rows.len(),
                finetune_epochs: ft_out.history.rows.len(),
            });
            let r = results.last().unwrap();
            let _ = writeln!(
                std::io::stderr(),
                "  trial {:8} seed {seed}: test ppl {:.3} (L1 valid {:.3}, L2 valid {:.3}, epochs {}/{}) at {:.0}s",
                r.l1_name,
                r.test_ppl,
                r.l1_valid_ppl,
                r.l2_valid_ppl,
                r.pretrain_epochs,
                r.finetune_epochs,
                t0.elapsed().as_secs_f64()
            );
        }
    }
    Grid {
        spec,
        results,
        freeze,
        failures,
        elapsed: t0.elapsed(),
    }
}

fn grid() -> &'static Grid {
    static GRID: OnceLock<Grid> = OnceLock::new();
    GRID.get_or_init(run_grid)
}

fn ppls(g: &Grid, name: &str) -> Vec<f64> {
    g.results.iter().filter(|r| r.l1_name == name).map(|r| r.test_ppl).collect()
}

fn agg<'a>(aggs: &'a [AggregateResult], name: &str) -> Option<&'a AggregateResult> {
    aggs.iter().find(|a| a.l1_name == name)
}

#[test]
fn criterion_1_transfer_ordering() {
    let g = grid();
    let aggs = aggregate_trials(&g.results).unwrap_or_default();
    let mut detail = String::new();
    for a in &aggs {
        detail += &format!("{} {:.2}±{:.2} ", a.l1_name, a.mean, a.ci95);
    }
    let zipf = ppls(g, "zipf");
    let mut pass = g.failures.is_empty() && g.results.len() == 4 * SEEDS.len();
    for name in ["nest", "flat"] {
        let x = ppls(g, name);
        match (welch_ttest(&x, &zipf), agg(&aggs, name), agg(&aggs, "zipf")) {
            (Ok(w), Some(a), Some(z)) => {
                detail += &format!("| {name}<zipf p={:.2e} ", w.p);
                pass &= a.mean < z.mean && w.p < ALPHA;
            }
            _ => pass = false,
        }
    }
    match (agg(&aggs, "uniform"), agg(&aggs, "zipf")) {
        (Some(u), Some(z)) => {
            detail += &format!("| uniform-zipf {:+.3} ", u.mean - z.mean);
            pass &= u.mean >= z.mean;
        }
        _ => pass = false,
    }
    detail += &format!("| {:.1} min (budget {} min)", g.elapsed.as_secs_f64() / 60.0, BUDGET.as_secs() / 60);
    pass &= g.elapsed < BUDGET;
    if !g.failures.is_empty() {
        detail += &format!(" | failures: {:?}", g.failures);
    }
    verdict(1, "ordering nest<zipf, flat<zipf (Welch p<0.05), uniform>=zipf", pass, &detail);
}

#[test]
fn criterion_2_parentheses_equivalence() {
    let g = grid();
    let aggs = aggregate_trials(&g.results).unwrap_or_default();
    let (pass, detail) = match (agg(&aggs, "nest"), agg(&aggs, "flat")) {
        (Some(n), Some(f)) => {
            let (nl, nh) = n.ci_bounds();
            let (fl, fh) = f.ci_bounds();
            (
                n.n == SEEDS.len() && f.n == SEEDS.len() && n.ci_overlaps(f),
                format!("nest [{nl:.2}, {nh:.2}] flat [{fl:.2}, {fh:.2}]"),
            )
        }
        _ => (false, "missing nest or flat trials".into()),
    };
    verdict(2, "nest/flat 95% CIs overlap over 5 seeds", pass, &detail);
}

#[test]
fn criterion_3_freeze_contract() {
    let g = grid();
    let bad: Vec<String> = g
        .freeze
        .iter()
        .filter_map(|(l, s, _, v)| v.as_ref().map(|v| format!("{l}/{s}: {v}")))
        .collect();
    let tensors: usize = g.freeze.iter().map(|f| f.2).sum();
    let pass = bad.is_empty() && g.freeze.len() == 4 * SEEDS.len() && g.freeze.iter().all(|f| f.2 > 0);
    let detail = format!(
        "{} trials, {tensors} recurrent tensors compared bitwise, {} violations {bad:?}",
        g.freeze.len(),
        bad.len()
    );
    verdict(3, "recurrent tensors bit-identical across fine-tuning", pass, &detail);
}

#[test]
fn criterion_8_determinism() {
    let g = grid();
    // a second, independent run of the first seed of every L1 through the
    // experiment runner must reproduce the grid's rows byte for byte
    let spec = ExperimentSpec {
        seeds: vec![SEEDS[0]],
        ..g.spec.clone()
    };
    let again = run_experiment(&spec, None, 1).unwrap();
    let first: Vec<TrialResult> = g.results.iter().filter(|r| r.seed == SEEDS[0]).cloned().collect();
    let (a, b) = (results_csv(&first), results_csv(&again.results));
    let pass = again.failures.is_empty() && first.len() == 4 && a == b;
    let detail = if a == b {
        format!("{} rows identical", first.len())
    } else {
        format!("first run:\n{a}second run:\n{b}")
    };
    verdict(8, "identical seeds give identical TrialResult CSV", pass, &detail);
}

#[test]
fn criterion_4_gradient_check() {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut pass = true;
    for tie in [true, false] {
        let cfg = LmConfig {
            vocab_size: 7,
            embed_dim: 4,
            hidden_dim: 5,
            layers: 2,
            p_emb_drop: 0.3,
            p_weight_drop: 0.4,
            bptt_len: 5,
            tie_weights: tie,
        };
        let mut rng = RngStream::new(31 + tie as u64);
        let params = LmParams::init(&cfg, &mut rng).unwrap();
        let batch = 2;
        let toks: Vec<u32> = (0..6 * batch).map(|_| rng.below(7) as u32).collect();
        let window = Window::new(&toks[..5 * batch], &toks[batch..5 * batch + batch], 5, batch);
        let mut state = State::zeros(&cfg, batch);
        for m in state.h.iter_mut().chain(state.c.iter_mut()) {
            m.as_mut_slice().iter_mut().for_each(|v| *v = rng.uniform_range(-0.5, 0.5));
        }
        let masks = Masks::for_mode(&cfg, Mode::Train, &mut rng);
        let r = check_gradients(&params, &cfg, &window, &state, &masks, 1e-5, 1e-4).unwrap();
        worst = worst.max(r.worst_rel_error);
        checked += r.checked;
        pass &= r.passed();
    }
    let elapsed = t0.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    let detail = format!(
        "{checked} coordinates, worst relative error {worst:.2e} (tol 1e-4), {:.2}s",
        elapsed.as_secs_f64()
    );
    verdict(4, "finite differences V7 E4 H5 L2 window 5, f64", pass, &detail);
}

#[test]
fn criterion_5_generators() {
    let n = 1_000_000;
    let mut notes = Vec::new();
    let mut pass = true;

    let unigram = UnigramDist::zipf(1000, 1.0).unwrap();
    let (nest, trace) = gen_nesting_parens(&NestGenConfig::new(0.4, n, unigram.clone()).unwrap(), 17).unwrap();
    // the trace is balanced and non-crossing, and a stack scan of the bare
    // tokens closes every opener
    let balanced = validate_nesting(nest.tokens(), &trace).is_ok() && infer_nesting_pairs(nest.tokens()).is_ok();
    notes.push(format!("nest balanced+projective {balanced}"));
    pass &= balanced;

    let mut is_open = vec![false; n];
    for &(o, _, _) in &trace.pairs {
        is_open[o as usize] = true;
    }
    let (mut depth, mut unforced, mut opens) = (0usize, 0u64, 0u64);
    for (t, &open) in is_open.iter().enumerate() {
        if depth > 0 && n - t > depth {
            unforced += 1;
            opens += open as u64;
        }
        if open {
            depth += 1;
        } else {
            depth -= 1;
        }
    }
    let rate = opens as f64 / unforced as f64;
    notes.push(format!("open rate {rate:.4}"));
    pass &= (rate - 0.4).abs() <= 0.002;

    let (flat, ftrace) = gen_flat_parens(&unigram, &LengthDist::default_dependency_lengths(), n, 18).unwrap();
    let rebuilt = ftrace.reconstruct(n);
    let exact = validate_flat(flat.tokens(), &ftrace).is_ok()
        && rebuilt.iter().zip(flat.tokens()).all(|(r, &t)| *r == Some(t));
    notes.push(format!("flat trace exact {exact}"));
    pass &= exact;

    let mut rng = RngStream::new(19);
    let mut counts = vec![0u64; 1000];
    for _ in 0..n {
        counts[sample_unigram(&unigram, &mut rng) as usize] += 1;
    }
    let fit: f64 = counts
        .iter()
        .zip(unigram.probs())
        .map(|(&c, p)| (c as f64 / n as f64 - p).abs())
        .sum();
    let floor = (2.0 / std::f64::consts::PI).sqrt()
        * unigram.probs().iter().map(|p| (p * (1.0 - p)).sqrt()).sum::<f64>()
        / (n as f64).sqrt();
    notes.push(format!("zipf(1000) L1 fit {fit:.4} (limit 0.01; sampling noise floor {floor:.4})"));
    pass &= fit < 0.01;
    verdict(5, "generator invariants at 10^6 tokens", pass, &notes.join(", "));
}

#[test]
fn criterion_6_statistics_fixtures() {
    let mut notes = Vec::new();
    let d = spanish_distances();
    let table1 = [
        ("it", 0),
        ("pt", 3),
        ("en", 4),
        ("ro", 5),
        ("ru", 9),
        ("de", 10),
        ("fi", 13),
        ("eu", 15),
        ("ko", 18),
        ("tr", 23),
        ("ja", 23),
    ];
    let distances_ok = table1.iter().all(|&(c, x)| d.distance("es", c) == Some(x));
    notes.push(format!("distances {distances_ok}"));

    let rows = appendix_results();
    let entries: Vec<ReportEntry> = rows.iter().map(ReportEntry::from_appendix).collect();
    let report = emit_report(&entries, &d, &[], ReportFormat::Csv).unwrap();
    let round_trip = rows
        .iter()
        .all(|r| report.table.contains(&format!("\n{},{},{}\n", r.l1, r.mean, r.std)))
        && report.table.contains("\nRandom Uniform,513.66,1.01\n");
    notes.push(format!("results table round-trip {round_trip}"));

    // scipy.stats.pearsonr(...).statistic ** 2 on the same seven points
    const R2_IE_ORACLE: f64 = 0.8565331890808096;
    let (mut x, mut y) = (vec![], vec![]);
    for r in rows.iter().filter(|r| r.group == ResultGroup::Language) {
        let e = d.lookup(&r.l1).unwrap();
        if e.is_indo_european() {
            x.push(e.distance as f64);
            y.push(r.mean_value());
        }
    }
    let r2 = pearson_r2(&x, &y).unwrap();
    let r2_ok = (r2 - R2_IE_ORACLE).abs() < 1e-9;
    notes.push(format!(
        "Indo-European r2 {r2:.10} vs oracle {R2_IE_ORACLE} (published 0.83, not gating)"
    ));
    verdict(6, "distance table, results table, r2 oracle", distances_ok && round_trip && r2_ok, &notes.join(", "));
}

#[test]
fn criterion_7_memorization() {
    // 1,000 tokens: a 25-token random phrase repeated 40 times
    let mut rng = RngStream::new(5);
    let phrase: Vec<u32> = (0..25).map(|_| rng.gen_range(0..50)).collect();
    let tokens: Vec<u32> = phrase.iter().copied().cycle().take(1000).collect();
    let train = Corpus::new(tokens.clone(), 50, SourceKind::Text, 0).unwrap();
    let valid = Corpus::new(tokens[..200].to_vec(), 50, SourceKind::Text, 0).unwrap();
    let cfg = LmConfig {
        p_emb_drop: 0.0,
        p_weight_drop: 0.0,
        bptt_len: 20,
        ..LmConfig::desk(50)
    };
    let tc = TrainConfig {
        batch_size: 4,
        max_epochs: 50,
        ..TrainConfig::default()
    };
    let params = LmParams::init(&cfg, &mut RngStream::new(6)).unwrap();
    let out = train_to_convergence(params, &cfg, View::All, &train, &valid, &tc).unwrap();
    let best = out
        .history
        .rows
        .iter()
        .map(|r| r.train_ppl)
        .fold(f64::INFINITY, f64::min);
    let reached = out.history.rows.iter().position(|r| r.train_ppl < 1.3).map(|i| i + 1);
    let detail = format!(
        "best train ppl {best:.4} over {} epochs, below 1.3 from epoch {reached:?}",
        out.history.rows.len()
    );
    verdict(7, "1k-token repeated sequence, train ppl < 1.3 within 50 epochs", reached.is_some(), &detail);
}
