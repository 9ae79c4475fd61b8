use tilt_core::corpusgen::{gen_random_corpus, Corpus, RandomKind, SourceKind, UnigramDist};
use tilt_core::langmodel::{LmConfig, Partition};
use tilt_core::tiltprotocol::{
    prepare_l1, pretrain_l1, run_experiment, synthetic_l1s, tilt_finetune, verify_freeze, EmbeddingPolicy,
    ExperimentSpec, L1Spec, L2Data, ProtocolError, ResultsStore,
};
use tilt_core::trainer::{evaluate_perplexity, TrainConfig, Trainer, View};

fn small_spec(l1_tokens: usize, seeds: Vec<u64>) -> ExperimentSpec {
    let (l2, _) = L2Data::from_grammar(6000, 1000, 1000, 11).unwrap();
    let v = l2.vocab_size();
    let tc = TrainConfig {
        batch_size: 8,
        max_epochs: 4,
        ..TrainConfig::default()
    };
    ExperimentSpec {
        id: "protocol-test".into(),
        l1s: synthetic_l1s(&l2, v, l1_tokens).unwrap(),
        corpus_seed: 3,
        l1_valid_fraction: 0.1,
        lm: LmConfig {
            embed_dim: 8,
            hidden_dim: 16,
            layers: 1,
            bptt_len: 12,
            p_emb_drop: 0.0,
            p_weight_drop: 0.0,
            ..LmConfig::desk(v)
        },
        l2,
        finetune: TrainConfig {
            max_epochs: 3,
            ..TrainConfig::finetune()
        },
        pretrain: tc,
        seeds,
        embedding_policy: EmbeddingPolicy::Keep,
    }
}

fn l1<'a>(spec: &'a ExperimentSpec, name: &str) -> &'a L1Spec {
    spec.l1s.iter().find(|l| l.name == name).unwrap()
}

#[test]
fn pretraining_learns_structure_but_not_noise() {
    let mut spec = small_spec(20_000, vec![1]);
    spec.pretrain.max_epochs = 10;
    let v = spec.lm.vocab_size as f64;
    let nest = prepare_l1(&spec, l1(&spec, "nest")).unwrap();
    let (_, out) = pretrain_l1(&spec, &nest, 1).unwrap();
    assert!(out.state.best_valid_ppl < v / 3.0, "nest {}", out.state.best_valid_ppl);

    // a small vocabulary keeps the uniform estimate tight at this corpus size
    spec.lm.vocab_size = 10;
    let noise = gen_random_corpus(RandomKind::Uniform, &UnigramDist::uniform(10).unwrap(), 20_000, 5).unwrap();
    spec.l1s = vec![L1Spec::corpus("uniform", noise)];
    let uni = prepare_l1(&spec, &spec.l1s[0]).unwrap();
    let (_, out) = pretrain_l1(&spec, &uni, 1).unwrap();
    let ppl = out.state.best_valid_ppl;
    assert!((ppl - 10.0).abs() / 10.0 < 0.05, "uniform {ppl}");
}

#[test]
fn seeds_change_parameters() {
    let spec = small_spec(5000, vec![1, 2]);
    let nest = prepare_l1(&spec, l1(&spec, "nest")).unwrap();
    let (a, _) = pretrain_l1(&spec, &nest, 1).unwrap();
    let (b, _) = pretrain_l1(&spec, &nest, 2).unwrap();
    assert!(a.tensors().iter().zip(b.tensors()).any(|(x, y)| !x.tensor.bit_eq(y.tensor)));
    let (a2, _) = pretrain_l1(&spec, &nest, 1).unwrap();
    assert!(a.partition_bit_eq(&a2, Partition::Recurrent) && a.partition_bit_eq(&a2, Partition::Embedding));
}

#[test]
fn finetuning_keeps_lstm_and_improves_l2() {
    for policy in [EmbeddingPolicy::Keep, EmbeddingPolicy::Reinit] {
        let mut spec = small_spec(8000, vec![1]);
        spec.embedding_policy = policy;
        let nest = prepare_l1(&spec, l1(&spec, "nest")).unwrap();
        let (pre, _) = pretrain_l1(&spec, &nest, 1).unwrap();
        let before = evaluate_perplexity(&pre, &spec.lm, &spec.l2.valid).unwrap();
        let (tuned, out) = tilt_finetune(&pre, &spec, "nest", 1).unwrap();
        verify_freeze(&pre, &tuned).unwrap();
        assert!(pre.partition_bit_eq(&tuned, Partition::Recurrent));
        let after = evaluate_perplexity(&tuned, &spec.lm, &spec.l2.valid).unwrap();
        assert!(after < before, "{policy:?}: {after} !< {before}");
        assert_eq!(out.state.best_valid_ppl, after);
    }
}

#[test]
fn one_finetune_epoch_moves_the_embedding() {
    let spec = small_spec(5000, vec![1]);
    let nest = prepare_l1(&spec, l1(&spec, "nest")).unwrap();
    let (pre, _) = pretrain_l1(&spec, &nest, 1).unwrap();
    let tc = TrainConfig {
        max_epochs: 1,
        ..spec.finetune.clone()
    };
    let mut t = Trainer::new(
        pre.clone(),
        &spec.lm,
        View::Only(Partition::Embedding),
        &spec.l2.train,
        &spec.l2.valid,
        &tc,
    )
    .unwrap();
    t.step_epoch().unwrap();
    let diff: f64 = pre
        .embedding
        .as_slice()
        .iter()
        .zip(t.params().embedding.as_slice())
        .map(|(a, b)| ((a - b) as f64).powi(2))
        .sum();
    assert!(diff > 0.0);
    verify_freeze(&pre, t.params()).unwrap();
}

#[test]
fn freeze_check_names_tampered_tensor() {
    let spec = small_spec(5000, vec![1]);
    let nest = prepare_l1(&spec, l1(&spec, "nest")).unwrap();
    let (pre, _) = pretrain_l1(&spec, &nest, 1).unwrap();
    let mut bad = pre.clone();
    let w = &mut bad.layers[0].w_hh;
    w.as_mut_slice()[3] = tilt_core::Real::from_bits(w.as_slice()[3].to_bits() ^ 1);
    match verify_freeze(&pre, &bad) {
        Err(ProtocolError::FreezeViolation(names)) => assert_eq!(names, vec!["lstm.0.w_hh".to_string()]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn grid_resumes_and_records_failures() {
    let dir = tempfile::tempdir().unwrap();
    let store = ResultsStore::open(dir.path()).unwrap();
    let mut spec = small_spec(3000, vec![1, 2, 3, 4, 5]);
    spec.pretrain.max_epochs = 1;
    spec.finetune.max_epochs = 1;
    spec.l1s.retain(|l| l.name == "nest");
    let v = spec.lm.vocab_size;
    let tiny = Corpus::new(vec![1, 2, 3, 4, 5, 6, 7, 8], v, SourceKind::Text, 0).unwrap();
    spec.l1s.push(L1Spec::corpus("tiny", tiny));

    let first = run_experiment(&spec, Some(&store), 1).unwrap();
    assert_eq!(first.results.len(), 5);
    let mut seeds: Vec<u64> = first.results.iter().map(|r| r.seed).collect();
    seeds.dedup();
    assert_eq!(seeds, vec![1, 2, 3, 4, 5]);
    assert_eq!(first.failures.len(), 5);
    assert!(first.failures.iter().all(|f| f.l1_name == "tiny"));
    assert!(store.failure_path("tiny", 1).exists());

    std::fs::remove_file(store.trial_path("nest", 3)).unwrap();
    spec.l1s.retain(|l| l.name == "nest");
    let second = run_experiment(&spec, Some(&store), 1).unwrap();
    assert_eq!(second.reused, 4);
    assert_eq!(second.results, first.results);
    assert!(store.trial_path("nest", 3).exists());
}
