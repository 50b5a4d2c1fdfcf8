//! Span graph edges under max, min and mean pooling.

use spanlink::graph::{build_span_graph, PoolingMode};
use spanlink::{AttentionDump, Document, Span};

fn main() -> spanlink::Result<()> {
    let words: Vec<&str> = "a recurrent network called Long Short-Term Memory"
        .split(' ')
        .collect();
    let doc = Document::from_paragraphs("pool", &[words])?;
    let mut dump = AttentionDump::zeros_for(&doc, 1, 1, 8)?;
    for (src, dst, w) in [(2, 5, 0.21), (2, 6, 0.04), (3, 5, 0.4762), (3, 7, 0.12)] {
        dump.set_weight(0, 0, src, dst, w)?;
    }
    let spans = [Span::new(&doc, 1, 4)?, Span::new(&doc, 5, 8)?];

    for mode in PoolingMode::ALL {
        let graph = build_span_graph(&dump, 0, 0, &spans, mode)?;
        println!(
            "{mode:<4}  forward {:?}  backward {:?}",
            graph.weight(0, 1),
            graph.weight(1, 0)
        );
    }
    Ok(())
}
