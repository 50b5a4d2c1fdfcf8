mod common;

use common::*;
use spanlink::answer::{build_template, external_fill, MASK_TOKEN};
use spanlink::graph::{build_span_graph, build_with_bridges, BridgeConfig, PoolingMode};
use spanlink::model::{AttentionDump, Document, Span};
use spanlink::Result;

#[test]
fn max_pooling_fixture() {
    check_max_pooling_fixture().unwrap();
}

#[test]
fn max_pooling_fixture_other_modes_stay_below_max() {
    let (_, dump, spans) = common::max_pooling_fixture();
    let w = |mode| {
        build_span_graph(&dump, 0, 0, &spans, mode)
            .unwrap()
            .weight(0, 1)
            .unwrap()
    };
    assert!(w(PoolingMode::Min) < w(PoolingMode::Mean));
    assert!(w(PoolingMode::Mean) < w(PoolingMode::Max));
    assert!(w(PoolingMode::Mean) < 0.45);
}

#[test]
fn chain_fixture() {
    check_chain_fixture().unwrap();
}

#[test]
fn template_fixture() {
    check_template_fixture().unwrap();
}

#[test]
fn reverse_order_spans_give_same_template() {
    let (doc, mut spans) = contributions_doc();
    let forward = build_template(&doc, &spans).unwrap();
    spans.reverse();
    assert_eq!(build_template(&doc, &spans).unwrap(), forward);
}

#[test]
fn infiller_reproduces_aggregated_answer() {
    let (doc, spans) = contributions_doc();
    let template = build_template(&doc, &spans).unwrap();
    let mut infiller = |req: &str| -> Result<String> {
        Ok(req
            .replacen(MASK_TOKEN, "were to develop", 1)
            .replacen(MASK_TOKEN, "for", 1))
    };
    let out = external_fill(&template, &mut infiller);
    assert!(!out.fallback);
    assert_eq!(
        out.answer,
        "The main contributions were to develop a single-layer forward recurrent neural network for sentence information"
    );
}

#[test]
fn cross_paragraph_bridge_edge() {
    let words = |s: &str| s.split(' ').map(str::to_string).collect::<Vec<_>>();
    let doc = Document::from_paragraphs("bridge", &[words("p q r s t u ."), words("v w x y z .")])
        .unwrap();
    let mut dump = AttentionDump::zeros_for(&doc, 1, 1, 1).unwrap();
    // token 2 -> its marker 0, marker 0 -> marker 8, marker 8 -> token 10
    dump.set_weight(0, 0, 2, 0, 0.8).unwrap();
    dump.set_weight(0, 0, 0, 8, 0.9).unwrap();
    dump.set_weight(0, 0, 8, 10, 0.7).unwrap();
    let spans = vec![
        Span::new(&doc, 2, 3).unwrap(),
        Span::new(&doc, 10, 11).unwrap(),
    ];
    let g = build_with_bridges(
        &dump,
        0,
        0,
        &doc,
        &spans,
        PoolingMode::Max,
        &BridgeConfig::default(),
    )
    .unwrap();
    let expected = (0.8f64 * 0.9 * 0.7).cbrt() as f32;
    assert_eq!(g.weight(0, 1), Some(expected));
    assert!((f64::from(expected) - 0.7958).abs() < 1e-4);
    assert!(g.is_bridged(0, 1));
    assert_eq!(
        build_span_graph(&dump, 0, 0, &spans, PoolingMode::Max)
            .unwrap()
            .weight(0, 1),
        None
    );
}
