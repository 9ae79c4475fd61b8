//! Runs the synthetic L1s against the grammar L2 and prints per-trial and
//! aggregate test perplexities.
//!
//! `cargo run --release --example desk_grid`, tuned through `GRID_*`
//! environment variables: `GRID_L1_TOKENS`, `GRID_PRETRAIN_EPOCHS`,
//! `GRID_FINETUNE_EPOCHS`, `GRID_SEEDS`, `GRID_WORKERS`, `GRID_L1S`
//! (comma-separated), `GRID_P_WEIGHT_DROP`, `GRID_P_EMB_DROP`,
//! `GRID_PATIENCE`, `GRID_LR0`, `GRID_FINETUNE_LR0`, `GRID_BATCH`,
//! `GRID_TIE`, `GRID_POLICY`.

use std::str::FromStr;
use std::time::Instant;

use tilt_core::langmodel::LmConfig;
use tilt_core::tiltprotocol::{
    aggregate_trials, ppl_of, run_experiment, synthetic_l1s, welch_ttest, EmbeddingPolicy, ExperimentSpec, L2Data,
};
use tilt_core::trainer::TrainConfig;

fn knob<T: FromStr>(name: &str, default: T) -> T {
    std::env::var(format!("GRID_{name}"))
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(default)
}

fn main() -> anyhow::Result<()> {
    let v = 200;
    let (l2, _) = L2Data::from_grammar(100_000, 10_000, 10_000, 2024)?;
    let only: Option<String> = std::env::var("GRID_L1S").ok();
    let d = LmConfig::desk(v);
    let lm = LmConfig {
        p_emb_drop: knob("P_EMB_DROP", d.p_emb_drop),
        p_weight_drop: knob("P_WEIGHT_DROP", d.p_weight_drop),
        tie_weights: knob("TIE", d.tie_weights),
        ..d
    };
    let pre = TrainConfig::default();
    let ft = TrainConfig::finetune();
    let spec = ExperimentSpec {
        id: "desk".into(),
        l1s: synthetic_l1s(&l2, v, knob("L1_TOKENS", 200_000))?
            .into_iter()
            .filter(|l| only.as_deref().map_or(true, |o| o.split(',').any(|n| n == l.name)))
            .collect(),
        corpus_seed: 7,
        l1_valid_fraction: 0.05,
        l2,
        lm,
        pretrain: TrainConfig {
            max_epochs: knob("PRETRAIN_EPOCHS", 8),
            plateau_patience: knob("PATIENCE", pre.plateau_patience),
            lr0: knob("LR0", pre.lr0),
            batch_size: knob("BATCH", pre.batch_size),
            ..pre
        },
        finetune: TrainConfig {
            max_epochs: knob("FINETUNE_EPOCHS", 8),
            plateau_patience: knob("PATIENCE", ft.plateau_patience),
            lr0: knob("FINETUNE_LR0", ft.lr0),
            batch_size: knob("BATCH", ft.batch_size),
            ..ft
        },
        seeds: (1..=knob("SEEDS", 5u64)).collect(),
        embedding_policy: knob::<String>("POLICY", "keep".into()).parse().unwrap_or(EmbeddingPolicy::Keep),
    };
    let t0 = Instant::now();
    let out = run_experiment(&spec, None, knob("WORKERS", 1))?;
    for r in &out.results {
        println!(
            "{:8} seed {} test {:8.3} l1_valid {:8.3} l2_valid {:8.3} epochs {}/{}",
            r.l1_name, r.seed, r.test_ppl, r.l1_valid_ppl, r.l2_valid_ppl, r.pretrain_epochs, r.finetune_epochs
        );
    }
    for f in &out.failures {
        println!("FAILED {} {}: {}", f.l1_name, f.seed, f.error);
    }
    for a in aggregate_trials(&out.results)? {
        println!("{:8} mean {:8.3} std {:6.3} ci95 {:6.3}", a.l1_name, a.mean, a.std, a.ci95);
    }
    let get = |n: &str| ppl_of(&out.results, n).collect::<Vec<_>>();
    for l1 in ["nest", "flat", "uniform"] {
        if let Ok(w) = welch_ttest(&get(l1), &get("zipf")) {
            println!("{l1} vs zipf: t {:.3} df {:.2} p {:.3e}", w.t, w.df, w.p);
        }
    }
    println!("elapsed {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
