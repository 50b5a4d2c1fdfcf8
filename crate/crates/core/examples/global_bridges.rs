//! Spans in different paragraphs, too far apart for the local window,
//! connected through their paragraph markers.

use spanlink::graph::{
    bridge_global, build_span_graph, build_with_bridges, BridgeConfig, PoolingMode,
};
use spanlink::{AttentionDump, Document, Span};

fn main() -> spanlink::Result<()> {
    let doc = Document::from_paragraphs(
        "bridges",
        &[
            vec!["the", "main", "contributions", "are", "listed", "."],
            vec!["we", "use", "a", "recurrent", "network", "."],
        ],
    )?;
    let mut dump = AttentionDump::zeros_for(&doc, 1, 1, 2)?;
    dump.set_weight(0, 0, 3, 0, 0.8)?; // "contributions" -> its marker
    dump.set_weight(0, 0, 0, 7, 0.9)?; // marker -> marker
    dump.set_weight(0, 0, 7, 11, 0.7)?; // marker -> "network"

    let cfg = BridgeConfig::default();
    for edge in bridge_global(&dump, 0, 0, &doc, &cfg)? {
        if edge.weight > 0.0 {
            println!(
                "{} -> {}  g = {:.4}  hops {:?}",
                doc.tokens()[edge.src],
                doc.tokens()[edge.dst],
                edge.weight,
                edge.hops
            );
        }
    }

    let spans = [Span::new(&doc, 2, 4)?, Span::new(&doc, 10, 12)?];
    let local = build_span_graph(&dump, 0, 0, &spans, PoolingMode::Max)?;
    let bridged = build_with_bridges(&dump, 0, 0, &doc, &spans, PoolingMode::Max, &cfg)?;
    println!("local only:   {:?}", local.weight(0, 1));
    println!(
        "with bridges: {:?} (bridged: {})",
        bridged.weight(0, 1),
        bridged.is_bridged(0, 1)
    );
    Ok(())
}
