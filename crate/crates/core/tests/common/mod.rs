#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spanlink::answer::{build_template, connector_fill, satisfies_infill_contract};
use spanlink::collector::span_loss;
use spanlink::graph::{
    bridge_global, build_span_graph, build_with_bridges, geometric_bridge, BridgeConfig,
    MarkerRanking, PoolingMode, SpanGraph,
};
use spanlink::metrics::{bleu, rouge_l, score, token_f1};
use spanlink::model::{AttentionDump, Document, Span};
use spanlink::oracle::{oracle_clusters, oracle_span_graph};
use spanlink::pipeline::{run_pass, PassProfile};
use spanlink::synth::{crafted_corpus, gen_synthetic, SynthCase, SynthSpec};
use spanlink::walker::{collect_clusters, prune, walk, WalkConfig};

pub type Check = Result<(), String>;
pub type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !($cond as bool) {
            return Err(format!($($fmt)+));
        }
    };
}

/// Synthetic instance within 64 tokens, 4 paragraphs and 8 spans.
pub fn small_instance(seed: u64) -> (SynthCase, Vec<Span>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n_paragraphs = rng.gen_range(1..=4);
    let hi = 63 / n_paragraphs - 1;
    let spec = SynthSpec {
        n_paragraphs,
        tokens_per_paragraph: (3, hi.min(14)),
        window: rng.gen_range(1..=4),
        n_layers: 1,
        n_heads: 2,
        span_density: 1.0,
        rng_seed: seed,
    };
    let case = gen_synthetic(&spec).expect("valid spec");
    let spans = case.random_spans(8, seed);
    (case, spans)
}

fn random_bridge_config(rng: &mut ChaCha8Rng) -> BridgeConfig {
    BridgeConfig {
        k: rng.gen_range(1..=3),
        l: rng.gen_range(1..=3),
        m: rng.gen_range(1..=3),
        ranking: if rng.gen_bool(0.5) {
            MarkerRanking::TokenToMarker
        } else {
            MarkerRanking::MarkerToToken
        },
    }
}

type EdgeBits<'a> = (BTreeMap<(usize, usize), u32>, &'a BTreeSet<(usize, usize)>);

fn bits(graph: &SpanGraph) -> EdgeBits<'_> {
    (
        graph.edges.iter().map(|(&k, w)| (k, w.to_bits())).collect(),
        &graph.bridged,
    )
}

pub fn check_graph_oracle(instances: u64) -> Check {
    for seed in 0..instances {
        let (case, spans) = small_instance(seed);
        ensure!(
            case.doc.n_tokens() <= 64,
            "seed {seed}: {} tokens",
            case.doc.n_tokens()
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = random_bridge_config(&mut rng);
        for (layer, head) in case.dump.layer_heads() {
            for mode in PoolingMode::ALL {
                let plain = build_span_graph(&case.dump, layer, head, &spans, mode)
                    .map_err(|e| e.to_string())?;
                let want =
                    oracle_span_graph(&case.dense, &case.doc, layer, head, &spans, mode, None);
                ensure!(
                    bits(&plain) == bits(&want),
                    "seed {seed} {mode} plain graph differs"
                );

                let bridged =
                    build_with_bridges(&case.dump, layer, head, &case.doc, &spans, mode, &cfg)
                        .map_err(|e| e.to_string())?;
                let want = oracle_span_graph(
                    &case.dense,
                    &case.doc,
                    layer,
                    head,
                    &spans,
                    mode,
                    Some(&cfg),
                );
                ensure!(
                    bits(&bridged) == bits(&want),
                    "seed {seed} {mode} {cfg:?} bridged graph differs"
                );
            }
        }
    }
    Ok(())
}

pub fn random_graph(rng: &mut ChaCha8Rng) -> SpanGraph {
    let n = rng.gen_range(1..=10);
    let nodes: Vec<Span> = (0..n)
        .map(|i| Span {
            start: 4 * i + 1,
            end: 4 * i + 3,
            paragraph: 0,
        })
        .collect();
    let mut graph = SpanGraph::empty(0, 0, nodes);
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(0.35) {
                graph.edges.insert((i, j), rng.gen::<f32>());
            }
        }
    }
    graph
}

fn partition(graph: &SpanGraph, tau: f64) -> Vec<Vec<usize>> {
    let mut parts: Vec<Vec<usize>> = walk(&prune(graph, tau), false)
        .into_iter()
        .map(|c| c.nodes)
        .collect();
    parts.sort_by_key(|p| p[0]);
    parts
}

pub fn check_cluster_oracle(instances: u64) -> Check {
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = random_graph(&mut rng);
        let tau = rng.gen_range(0.0..0.9);
        let got = partition(&graph, tau);
        ensure!(
            got == oracle_clusters(&graph, tau),
            "seed {seed}: partition differs"
        );
        let finer = partition(&graph, tau + 0.1);
        for part in &finer {
            ensure!(
                got.iter()
                    .any(|coarse| part.iter().all(|x| coarse.contains(x))),
                "seed {seed}: {part:?} at tau+0.1 is not inside a cluster at tau"
            );
        }
    }
    Ok(())
}

/// "a single-layer forward recurrent neural network" next to "Long
/// Short-Term Memory", attention from the first span to the second.
pub fn max_pooling_fixture() -> (Document, AttentionDump, Vec<Span>) {
    let tokens: Vec<&str> =
        "a single-layer forward recurrent neural network called Long Short-Term Memory ."
            .split(' ')
            .collect();
    let doc = Document::from_paragraphs("lstm", &[tokens]).unwrap();
    let mut dump = AttentionDump::zeros_for(&doc, 1, 1, 10).unwrap();
    // rows: a, single-layer, forward, recurrent, neural, network
    // cols: Long, Short-Term, Memory
    let heat: [[f32; 3]; 6] = [
        [0.0021, 0.0004, 0.0003],
        [0.0187, 0.0052, 0.0049],
        [0.0305, 0.0117, 0.0090],
        [0.1342, 0.0631, 0.0528],
        [0.2250, 0.0874, 0.1106],
        [0.4762, 0.1418, 0.2075],
    ];
    for (r, row) in heat.iter().enumerate() {
        for (c, &w) in row.iter().enumerate() {
            dump.set_weight(0, 0, 1 + r, 8 + c, w).unwrap();
        }
    }
    let spans = vec![
        Span::new(&doc, 1, 7).unwrap(),
        Span::new(&doc, 8, 11).unwrap(),
    ];
    (doc, dump, spans)
}

pub fn check_max_pooling_fixture() -> Check {
    let (_, dump, spans) = max_pooling_fixture();
    let graph =
        build_span_graph(&dump, 0, 0, &spans, PoolingMode::Max).map_err(|e| e.to_string())?;
    let w = graph.weight(0, 1);
    ensure!(w == Some(0.4762f32), "edge weight {w:?}");
    let kept = prune(&graph, 0.45);
    ensure!(kept.weight(0, 1) == Some(0.4762f32), "edge pruned at 0.45");
    Ok(())
}

/// Five spans: contributions → network (0.53), network → LSTM (0.48), the
/// rest tied in with low weights.
pub fn chain_graph() -> SpanGraph {
    let nodes: Vec<Span> = (0..5)
        .map(|i| Span {
            start: 300 * i + 1,
            end: 300 * i + 4,
            paragraph: i,
        })
        .collect();
    let mut graph = SpanGraph::empty(0, 0, nodes);
    for (k, w) in [
        ((0, 1), 0.53f32),
        ((1, 2), 0.48),
        ((0, 3), 0.21),
        ((3, 4), 0.44),
        ((2, 4), 0.12),
        ((4, 0), 0.3),
        ((1, 3), 0.45),
    ] {
        graph.edges.insert(k, w);
    }
    graph
}

pub fn check_chain_fixture() -> Check {
    let graph = chain_graph();
    let kept = prune(&graph, 0.45);
    let survivors: Vec<_> = kept.edges.keys().copied().collect();
    ensure!(
        survivors == vec![(0, 1), (1, 2)],
        "surviving edges {survivors:?}"
    );
    let clusters = collect_clusters(std::slice::from_ref(&graph), &WalkConfig::default())
        .map_err(|e| e.to_string())?;
    let multi: Vec<_> = clusters.iter().filter(|c| c.is_multi_span()).collect();
    ensure!(multi.len() == 1, "{} multi-span clusters", multi.len());
    ensure!(
        multi[0].nodes == vec![0, 1, 2],
        "cluster {:?}",
        multi[0].nodes
    );
    for c in &clusters {
        if c.nodes.contains(&3) || c.nodes.contains(&4) {
            ensure!(c.nodes.len() == 1, "low-weight span linked: {:?}", c.nodes);
        }
    }
    Ok(())
}

pub fn check_span_loss() -> Check {
    let e = (-1.0f64).exp();
    let a = span_loss(&[e, e]).map_err(|x| x.to_string())?;
    ensure!((a - 1.0).abs() < 1e-9, "span_loss([1/e, 1/e]) = {a}");
    let b = span_loss(&[1.0, 1.0, 1.0]).map_err(|x| x.to_string())?;
    ensure!(b == 0.0, "span_loss([1,1,1]) = {b}");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..1000 {
        let len = rng.gen_range(1..=12);
        let probs: Vec<f64> = (0..len).map(|_| rng.gen_range(0.01..=1.0)).collect();
        let mut lower = probs.clone();
        let i = rng.gen_range(0..len);
        lower[i] *= rng.gen_range(0.05..0.95);
        let (l0, l1) = (span_loss(&probs).unwrap(), span_loss(&lower).unwrap());
        ensure!(l1 > l0, "case {case}: {l1} !> {l0}");
    }
    Ok(())
}

pub fn check_geometric_bridge() -> Check {
    ensure!(geometric_bridge(1.0, 1.0, 1.0) == 1.0, "g(1,1,1)");
    let half = geometric_bridge(0.125, 1.0, 1.0);
    ensure!((half - 0.5).abs() < 1e-9, "g(0.125,1,1) = {half}");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let t: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let g = geometric_bridge(t[0], t[1], t[2]);
        let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = t.iter().copied().fold(0.0, f64::max);
        ensure!(lo <= g + 1e-15 && g <= hi + 1e-15, "{t:?} -> {g}");
    }
    Ok(())
}

/// Bridges never replace a local entry: every bridge token pair that has a
/// local weight keeps it, and span pairs fully covered by local entries
/// pool identically with and without bridges.
pub fn check_bridge_non_overwrite(instances: u64) -> Check {
    for seed in 0..instances {
        let (case, spans) = small_instance(seed);
        let cfg = BridgeConfig::default();
        for (layer, head) in case.dump.layer_heads() {
            let edges = bridge_global(&case.dump, layer, head, &case.doc, &cfg)
                .map_err(|e| e.to_string())?;
            let covered = |a: &Span, b: &Span| {
                a.range().all(|m| {
                    b.range().all(|n| {
                        case.dump
                            .attention_weight(layer, head, m, n)
                            .unwrap()
                            .is_some()
                    })
                })
            };
            for mode in PoolingMode::ALL {
                let plain = build_span_graph(&case.dump, layer, head, &spans, mode).unwrap();
                let bridged =
                    build_with_bridges(&case.dump, layer, head, &case.doc, &spans, mode, &cfg)
                        .unwrap();
                for (i, a) in spans.iter().enumerate() {
                    for (j, b) in spans.iter().enumerate() {
                        if i != j && covered(a, b) {
                            ensure!(
                                plain.weight(i, j) == bridged.weight(i, j)
                                    && !bridged.is_bridged(i, j),
                                "seed {seed}: locally covered pair ({i},{j}) changed by bridges"
                            );
                        }
                    }
                }
            }
            ensure!(
                edges.iter().all(|e| e.weight >= 0.0),
                "seed {seed}: negative bridge weight"
            );
        }
    }
    Ok(())
}

pub fn contributions_doc() -> (Document, Vec<Span>) {
    let paras: Vec<Vec<&str>> = [
        "The main contributions of this paper are listed .",
        "We use a single-layer forward recurrent neural network here .",
        "It encodes sentence information well .",
    ]
    .iter()
    .map(|p| p.split(' ').collect())
    .collect();
    let doc = Document::from_paragraphs("contributions", &paras).unwrap();
    let spans = vec![
        Span::new(&doc, 1, 4).unwrap(),
        Span::new(&doc, 13, 19).unwrap(),
        Span::new(&doc, 24, 26).unwrap(),
    ];
    (doc, spans)
}

pub fn check_template_fixture() -> Check {
    let (doc, spans) = contributions_doc();
    let template = build_template(&doc, &spans).map_err(|e| e.to_string())?;
    let want = "The main contributions <mask> a single-layer forward recurrent neural network <mask> sentence information";
    ensure!(
        template.render() == want,
        "template {:?}",
        template.render()
    );
    let filled = connector_fill(&template);
    ensure!(
        satisfies_infill_contract(&template, &filled),
        "connector fill {filled:?}"
    );
    Ok(())
}

pub fn check_crafted_stats() -> Check {
    let out = run_pass(&PassProfile::pass_two(), &crafted_corpus()).map_err(|e| e.to_string())?;
    let s = &out.summary.stats;
    ensure!(
        (s.overall, s.with_global, s.multi_span) == (5, 2, 3),
        "stats ({}, {}, {})",
        s.overall,
        s.with_global,
        s.multi_span
    );
    Ok(())
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_spanlink")
}

pub fn spanlink(args: &[&str]) -> Result<String, String> {
    let out = Command::new(bin())
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "spanlink {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

pub fn check_emit_determinism(work: &Path) -> Check {
    let corpus = work.join("corpus");
    let corpus_s = corpus.to_str().unwrap();
    spanlink(&["synth", "--out", corpus_s, "--n-docs", "3", "--seed", "17"])?;
    let mut outputs = Vec::new();
    for workers in ["1", "4"] {
        let out = work.join(format!("dataset-{workers}.jsonl"));
        spanlink(&[
            "emit",
            "--corpus",
            corpus_s,
            "--seed",
            "5",
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
        ])?;
        outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    ensure!(!outputs[0].is_empty(), "empty dataset");
    ensure!(
        outputs[0] == outputs[1],
        "serial and 4-worker datasets differ"
    );
    Ok(())
}

pub const BLEU4_CAT_MAT: f64 = 0.5789300674674098;

pub fn check_metrics() -> Check {
    let same = score("the quick brown fox jumps", "the quick brown fox jumps");
    ensure!(
        [same.f1, same.bleu1, same.bleu4, same.rouge_l] == [1.0; 4],
        "identity {same:?}"
    );
    let apart = score("alpha beta gamma", "delta epsilon zeta");
    ensure!(
        [apart.f1, apart.bleu1, apart.bleu4, apart.rouge_l] == [0.0; 4],
        "disjoint {apart:?}"
    );
    let f1 = token_f1("a b c", "a b d");
    ensure!((f1 - 2.0 / 3.0).abs() < 1e-6, "f1 {f1}");
    let b = bleu("the cat sat on mat", "the cat sat on the mat", 4);
    ensure!((b - BLEU4_CAT_MAT).abs() < 1e-6, "bleu-4 {b}");
    let r = rouge_l("a b c d", "a c d");
    ensure!((r - 6.0 / 7.0).abs() < 1e-6, "rouge-l {r}");
    Ok(())
}
