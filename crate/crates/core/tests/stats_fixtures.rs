//! Reference tables, correlation and significance tests against values
//! frozen from an independent statistics package.

use proptest::prelude::*;

use tilt_core::tiltprotocol::{aggregate, welch_ttest};
use tilt_core::typostats::{
    appendix_results, emit_report, pearson_r2, shared_features, spanish_distances, wals_distance, DistanceTable,
    FeatureTable, ReportEntry, ReportFormat, ResultGroup,
};

/// Distances from Spanish as printed in the reference table.
const TABLE1: [(&str, u32); 12] = [
    ("es", 0),
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

#[test]
fn distance_fixture_reproduces_table() {
    let d = spanish_distances();
    for (code, dist) in TABLE1 {
        assert_eq!(d.distance("es", code), Some(dist), "{code}");
        assert_eq!(d.lookup(code).unwrap().shared, 49);
    }
}

#[test]
fn results_table_round_trips_verbatim() {
    let rows = appendix_results();
    let entries: Vec<ReportEntry> = rows.iter().map(ReportEntry::from_appendix).collect();
    let r = emit_report(&entries, &spanish_distances(), &[], ReportFormat::Csv).unwrap();
    let expected: String = std::iter::once("L1,mean,std".to_string())
        .chain(rows.iter().map(|x| format!("{},{},{}", x.l1, x.mean, x.std)))
        .map(|l| l + "\n")
        .collect();
    assert_eq!(r.table, expected);
    assert!(r.table.contains("Random Uniform,513.66,1.01\n"));
    assert!(r.table.contains("Portoguese,61.25,0.21\n"));
    // the aggregate of five values with that mean/std prints the same numbers
    let z = [-2.0, -1.0, 0.0, 1.0, 2.0].map(|k: f64| k / 1.5811388300841898);
    let a = aggregate("Random Uniform", &z.map(|v| 513.66 + 1.01 * v)).unwrap();
    assert_eq!(format!("{:.2},{:.2}", a.mean, a.std), "513.66,1.01");
}

fn language_means() -> Vec<(String, f64, u32, bool)> {
    let d = spanish_distances();
    appendix_results()
        .into_iter()
        .filter(|r| r.group == ResultGroup::Language)
        .map(|r| {
            let e = d.lookup(&r.l1).unwrap();
            (r.l1.clone(), r.mean_value(), e.distance, e.is_indo_european())
        })
        .collect()
}

#[test]
fn r2_matches_reference_oracle() {
    // scipy.stats.pearsonr(...).statistic ** 2 on the same points
    const IE: f64 = 0.8565331890808096;
    const ALL: f64 = 0.7896126001686459;
    let pts = language_means();
    let (xi, yi): (Vec<f64>, Vec<f64>) = pts.iter().filter(|p| p.3).map(|p| (p.2 as f64, p.1)).unzip();
    let (xa, ya): (Vec<f64>, Vec<f64>) = pts.iter().map(|p| (p.2 as f64, p.1)).unzip();
    assert_eq!(xi.len(), 7);
    assert_eq!(xa.len(), 12);
    let ie = pearson_r2(&xi, &yi).unwrap();
    let all = pearson_r2(&xa, &ya).unwrap();
    assert!((ie - IE).abs() < 1e-9, "{ie}");
    assert!((all - ALL).abs() < 1e-9, "{all}");
    // Reported figures are 0.83 and 0.78; computing over the published
    // means gives 0.857 and 0.790 (not asserted).
    println!("r2 over published means: indo-european {ie:.4} (reported 0.83), all {all:.4} (reported 0.78)");

    let entries: Vec<ReportEntry> = appendix_results().iter().map(ReportEntry::from_appendix).collect();
    let r = emit_report(&entries, &spanish_distances(), &[], ReportFormat::Csv).unwrap();
    assert!(r.r2.contains(&format!("indo_european,means,7,{ie}")));
    assert!(r.r2.contains(&format!("all,means,12,{all}")));
    assert_eq!(r.scatter.lines().count(), 13);
    let again = emit_report(&entries, &spanish_distances(), &[], ReportFormat::Csv).unwrap();
    assert_eq!(r, again);
}

#[test]
fn welch_on_synthesized_random_baselines() {
    // five values each with the published mean and std of the two random L1s;
    // scipy.stats.ttest_ind(zipf, uniform, equal_var=False)
    let z = [-2.0, -1.0, 0.0, 1.0, 2.0].map(|k: f64| k / 1.5811388300841898);
    let zipf = z.map(|v| 493.15 + 2.97 * v);
    let uniform = z.map(|v| 513.66 + 1.01 * v);
    let w = welch_ttest(&zipf, &uniform).unwrap();
    assert!((w.t - -14.619450415601165).abs() < 1e-8, "{}", w.t);
    assert!((w.df - 4.9129565311691685).abs() < 1e-8, "{}", w.df);
    assert!((w.p - 3.0802232256866714e-05).abs() < 1e-10, "{}", w.p);
    assert!(w.p < 0.05);
}

fn table_strategy() -> impl Strategy<Value = (usize, usize, Vec<Option<u8>>)> {
    (2usize..6, 1usize..10).prop_flat_map(|(l, f)| {
        (
            Just(l),
            Just(f),
            prop::collection::vec(prop::option::weighted(0.8, 0u8..3), l * f),
        )
    })
}

fn build(l: usize, f: usize, cells: &[Option<u8>]) -> FeatureTable {
    let mut text = String::from("lang");
    for j in 0..f {
        text += &format!("\tF{j}");
    }
    for i in 0..l {
        text += &format!("\nL{i}");
        for j in 0..f {
            match cells[i * f + j] {
                Some(v) => text += &format!("\tv{v}"),
                None => text += "\t-",
            }
        }
    }
    FeatureTable::parse_tsv(&text).unwrap()
}

proptest! {
    #[test]
    fn shared_features_is_set_intersection((l, f, cells) in table_strategy()) {
        let t = build(l, f, &cells);
        let names: Vec<String> = (0..l).map(|i| format!("L{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let got = shared_features(&t, &refs).unwrap();
        let mut expected = Vec::new();
        for j in 0..f {
            if (0..l).all(|i| cells[i * f + j].is_some()) {
                expected.push(format!("F{j}"));
            }
        }
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn distances_match_comparison_loop((l, f, cells) in table_strategy()) {
        let t = build(l, f, &cells);
        let names: Vec<String> = (0..l).map(|i| format!("L{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let shared = shared_features(&t, &refs).unwrap();
        let table = DistanceTable::build(&t, &refs).unwrap();
        for a in 0..l {
            prop_assert_eq!(table.get(refs[a], refs[a]), Some(0));
            for b in 0..l {
                let mut d = 0;
                for j in 0..f {
                    if shared.contains(&format!("F{j}")) && cells[a * f + j] != cells[b * f + j] {
                        d += 1;
                    }
                }
                prop_assert_eq!(wals_distance(&t, refs[a], refs[b], &shared).unwrap(), d);
                prop_assert_eq!(table.get(refs[a], refs[b]), table.get(refs[b], refs[a]));
                prop_assert!(table.get(refs[a], refs[b]).unwrap() as usize <= table.shared);
            }
        }
    }

    #[test]
    fn r2_affine_invariant(
        pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..30),
        a in prop_oneof![-10.0f64..-0.5, 0.5f64..10.0],
        b in -50.0f64..50.0,
        c in prop_oneof![-10.0f64..-0.5, 0.5f64..10.0],
        d in -50.0f64..50.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        if let Ok(r) = pearson_r2(&x, &y) {
            prop_assert!((0.0..=1.0).contains(&r));
            let x2: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let y2: Vec<f64> = y.iter().map(|v| c * v + d).collect();
            prop_assert!((pearson_r2(&x2, &y2).unwrap() - r).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregate_order_independent(mut xs in prop::collection::vec(1.0f64..1000.0, 2..12), seed in any::<u64>()) {
        let a = aggregate("x", &xs).unwrap();
        let n = xs.len();
        xs.rotate_left((seed % n as u64) as usize);
        xs.reverse();
        let b = aggregate("x", &xs).unwrap();
        prop_assert!((a.mean - b.mean).abs() <= 1e-12 * a.mean);
        prop_assert!((a.std - b.std).abs() <= 1e-9 * (1.0 + a.std));
    }
}
