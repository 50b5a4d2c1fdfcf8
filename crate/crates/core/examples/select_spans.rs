//! Greedy salient-span selection over a small constituency forest.

use std::collections::HashMap;

use spanlink::collector::{select_in_order, span_loss};
use spanlink::{Document, ParseNode, SelectConfig, Span};

fn main() -> spanlink::Result<()> {
    let words: Vec<&str> = "we propose a long short-term memory sentence encoder ."
        .split(' ')
        .collect();
    let doc = Document::from_paragraphs("select", &[words])?;
    let node = |s, e, label, children| ParseNode {
        span: Span::new(&doc, s, e).unwrap(),
        label: String::from(label),
        children,
    };
    let leaf = |s, e| ParseNode::leaf(Span::new(&doc, s, e).unwrap(), "NP");

    let np = node(3, 9, "NP", vec![leaf(3, 7), leaf(7, 9)]);
    let forest = vec![node(
        1,
        10,
        "S",
        vec![leaf(1, 2), node(2, 9, "VP", vec![leaf(2, 3), np])],
    )];

    let mut scores = HashMap::new();
    for (span, probs) in [
        ((1, 10), vec![0.6; 9]),
        ((1, 2), vec![0.9]),
        ((2, 9), vec![0.5; 7]),
        ((2, 3), vec![0.8]),
        ((3, 9), vec![0.4; 6]),
        ((3, 7), vec![0.3, 0.5, 0.2, 0.4]),
        ((7, 9), vec![0.1, 0.3]),
    ] {
        scores.insert(span, span_loss(&probs)?);
    }

    for pick in select_in_order(&doc, &forest, &scores, &SelectConfig::default())? {
        println!("{:>6.3}  {}", pick.loss, doc.render(pick.span.range()));
    }
    Ok(())
}
