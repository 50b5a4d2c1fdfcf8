mod common;

use common::*;
use spanlink::graph::bridge_global;
use spanlink::graph::{build_with_bridges, BridgeConfig, PoolingMode};
use spanlink::model::validate;
use spanlink::oracle::{oracle_bridges, oracle_row_violations};
use spanlink::synth::{gen_synthetic, SynthSpec};

#[test]
fn graphs_match_dense_oracle() {
    check_graph_oracle(200).unwrap();
}

#[test]
fn clusters_match_union_find() {
    check_cluster_oracle(200).unwrap();
}

#[test]
fn instances_exercise_bridges() {
    let (mut edges, mut bridged, mut multi_paragraph) = (0, 0, 0);
    for seed in 0..200 {
        let (case, spans) = small_instance(seed);
        multi_paragraph += usize::from(case.doc.n_paragraphs() > 1);
        let g = build_with_bridges(
            &case.dump,
            0,
            0,
            &case.doc,
            &spans,
            PoolingMode::Max,
            &BridgeConfig::default(),
        )
        .unwrap();
        edges += g.edges.len();
        bridged += g.bridged.len();
    }
    assert!(multi_paragraph > 100, "{multi_paragraph}");
    assert!(edges > 1000, "{edges}");
    assert!(bridged > 50, "{bridged}");
}

#[test]
fn bridge_edges_match_enumeration() {
    for seed in 0..100 {
        let (case, _) = small_instance(seed);
        for cfg in [
            BridgeConfig::default(),
            BridgeConfig {
                k: 1,
                l: 1,
                m: 1,
                ..BridgeConfig::default()
            },
        ] {
            let mut got: Vec<(usize, usize, f32)> =
                bridge_global(&case.dump, 0, 1, &case.doc, &cfg)
                    .unwrap()
                    .into_iter()
                    .map(|e| (e.src, e.dst, e.weight))
                    .collect();
            got.sort_by_key(|&(a, b, _)| (a, b));
            let want = oracle_bridges(&case.dense, &case.doc, 0, 1, &cfg);
            assert_eq!(got.len(), want.len(), "seed {seed}");
            for (g, w) in got.iter().zip(&want) {
                assert_eq!(
                    (g.0, g.1, g.2.to_bits()),
                    (w.0, w.1, w.2.to_bits()),
                    "seed {seed}"
                );
            }
        }
    }
}

#[test]
fn validation_agrees_with_full_row_sums() {
    for seed in 0..50 {
        let case = gen_synthetic(&SynthSpec {
            rng_seed: seed,
            ..SynthSpec::default()
        })
        .unwrap();
        let mut dump = case.dump.clone();
        let mut dense = case.dense.clone();
        // disturb a few rows so both passes have something to report
        for k in 0..(seed as usize % 4) {
            let src = (7 * k + seed as usize) % case.doc.n_tokens();
            let dst = src;
            let w = dense.get(0, 1, src, dst).unwrap() + 0.25;
            dense.set(0, 1, src, dst, Some(w));
            dump.set_weight(0, 1, src, dst, w).unwrap();
        }
        let key = |v: &spanlink::model::RowSumViolation| (v.layer, v.head, v.token);
        let got: Vec<_> = validate(&dump, &case.doc, 1e-4)
            .row_sum_violations
            .iter()
            .map(key)
            .collect();
        let want: Vec<_> = oracle_row_violations(&dense, 1e-4)
            .iter()
            .map(key)
            .collect();
        assert_eq!(got, want, "seed {seed}");
    }
}
