//! Prune a span graph at tau and walk it into clusters.

use spanlink::walker::{collect_clusters, prune, walk};
use spanlink::{Span, SpanGraph, WalkConfig};

fn main() -> spanlink::Result<()> {
    let names = [
        "main contributions",
        "recurrent network",
        "LSTM",
        "dataset",
        "baseline",
    ];
    let nodes = (0..names.len())
        .map(|i| Span {
            start: 100 * i + 1,
            end: 100 * i + 3,
            paragraph: i,
        })
        .collect();
    let mut graph = SpanGraph::empty(0, 0, nodes);
    for (edge, w) in [
        ((0, 1), 0.53),
        ((1, 2), 0.48),
        ((2, 3), 0.2),
        ((3, 4), 0.31),
        ((4, 0), 0.45),
    ] {
        graph.edges.insert(edge, w);
    }

    let cfg = WalkConfig::default();
    let kept = prune(&graph, cfg.tau);
    println!(
        "{} of {} edges above tau = {}",
        kept.edges.len(),
        graph.edges.len(),
        cfg.tau
    );

    for directed in [false, true] {
        println!("directed = {directed}");
        for cluster in walk(&kept, directed) {
            let members: Vec<_> = cluster.nodes.iter().map(|&i| names[i]).collect();
            println!("  {members:?}");
        }
    }

    let sampled = collect_clusters(
        &[graph],
        &WalkConfig {
            sample_limit: 2,
            ..cfg
        },
    )?;
    println!("kept {} clusters after sampling", sampled.len());
    Ok(())
}
