//! Brute-force reference constructions over dense attention.
//!
//! Nothing here shares code with the production graph builder or walker.
//! They exist to be compared against, on inputs small enough for
//! quadratic loops.

use std::collections::{BTreeMap, BTreeSet};

use crate::graph::{BridgeConfig, MarkerRanking, PoolingMode, SpanGraph};
use crate::model::{Document, RowSumViolation, Span};
use crate::synth::DenseAttention;

/// Bridge token edges by enumerating every (token, marker, marker, token)
/// combination and keeping the ones whose parts rank inside their top-k.
pub fn oracle_bridges(
    dense: &DenseAttention,
    doc: &Document,
    layer: usize,
    head: usize,
    cfg: &BridgeConfig,
) -> Vec<(usize, usize, f32)> {
    let w = |a: usize, b: usize| dense.get(layer, head, a, b).unwrap_or(0.0);
    let markers: Vec<usize> = doc.global_positions().to_vec();
    let paragraph_tokens = |marker: usize| -> Vec<usize> {
        let p = doc.paragraph_of(marker);
        let r = doc.paragraph_range(p);
        (r.start..r.end)
            .filter(|&t| !markers.contains(&t))
            .collect()
    };
    // rank of `item` among `pool` when sorted by descending score, ties low index first
    let rank = |pool: &[usize], item: usize, score: &dyn Fn(usize) -> f32| -> usize {
        pool.iter()
            .filter(|&&o| {
                let (so, si) = (score(o), score(item));
                so > si || (so == si && o < item)
            })
            .count()
    };

    let mut out = Vec::new();
    if markers.len() < 2 {
        return out;
    }
    for &si in &markers {
        let src_pool = paragraph_tokens(si);
        let marker_pool: Vec<usize> = markers.iter().copied().filter(|&m| m != si).collect();
        for &sj in &marker_pool {
            if rank(&marker_pool, sj, &|m| w(si, m)) >= cfg.l {
                continue;
            }
            let dst_pool = paragraph_tokens(sj);
            for &ti in &src_pool {
                let src_score = |t: usize| match cfg.ranking {
                    MarkerRanking::TokenToMarker => w(t, si),
                    MarkerRanking::MarkerToToken => w(si, t),
                };
                if rank(&src_pool, ti, &src_score) >= cfg.k {
                    continue;
                }
                for &tj in &dst_pool {
                    if rank(&dst_pool, tj, &|t| w(sj, t)) >= cfg.m {
                        continue;
                    }
                    let product =
                        f64::from(w(ti, si)) * f64::from(w(si, sj)) * f64::from(w(sj, tj));
                    out.push((ti, tj, product.cbrt() as f32));
                }
            }
        }
    }
    out.sort_by_key(|&(a, b, _)| (a, b));
    out
}

/// Span graph by a double loop over every token pair of every span pair,
/// optionally after writing bridge weights into the empty cells of a dense
/// copy.
pub fn oracle_span_graph(
    dense: &DenseAttention,
    doc: &Document,
    layer: usize,
    head: usize,
    spans: &[Span],
    mode: PoolingMode,
    bridges: Option<&BridgeConfig>,
) -> SpanGraph {
    let n = dense.n_tokens;
    // (weight, came from a bridge)
    let mut cells: Vec<Option<(f32, bool)>> = (0..n * n)
        .map(|k| dense.get(layer, head, k / n, k % n).map(|v| (v, false)))
        .collect();
    if let Some(cfg) = bridges {
        let in_span = |t: usize| spans.iter().any(|s| s.start <= t && t < s.end);
        for (ti, tj, g) in oracle_bridges(dense, doc, layer, head, cfg) {
            if in_span(ti) && in_span(tj) && cells[ti * n + tj].is_none() {
                cells[ti * n + tj] = Some((g, true));
            }
        }
    }

    let mut edges = BTreeMap::new();
    let mut bridged = BTreeSet::new();
    for (i, a) in spans.iter().enumerate() {
        for (j, b) in spans.iter().enumerate() {
            if i == j {
                continue;
            }
            let mut entries = Vec::new();
            for m in a.start..a.end {
                for k in b.start..b.end {
                    if let Some(e) = cells[m * n + k] {
                        entries.push(e);
                    }
                }
            }
            if entries.is_empty() {
                continue;
            }
            let (value, from_bridge) = match mode {
                PoolingMode::Max | PoolingMode::Min => {
                    let mut best = entries[0].0;
                    for &(v, _) in &entries {
                        let take = if mode == PoolingMode::Max {
                            v > best
                        } else {
                            v < best
                        };
                        if take {
                            best = v;
                        }
                    }
                    let local_hit = entries.iter().any(|&(v, b)| !b && v == best);
                    (best, !local_hit)
                }
                PoolingMode::Mean => {
                    let mut total = 0.0f64;
                    for &(v, _) in &entries {
                        total += f64::from(v);
                    }
                    (
                        (total / entries.len() as f64) as f32,
                        entries.iter().any(|&(_, b)| b),
                    )
                }
            };
            edges.insert((i, j), value);
            if from_bridge {
                bridged.insert((i, j));
            }
        }
    }
    SpanGraph {
        layer,
        head,
        nodes: spans.to_vec(),
        edges,
        bridged,
    }
}

/// Partition of graph nodes into components of the symmetrized edges above
/// `tau`, via union-find. Each part is sorted; parts are ordered by their
/// smallest member.
pub fn oracle_clusters(graph: &SpanGraph, tau: f64) -> Vec<Vec<usize>> {
    let n = graph.nodes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for (&(i, j), &w) in &graph.edges {
        if f64::from(w) > tau {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for x in 0..n {
        let r = find(&mut parent, x);
        groups.entry(r).or_default().push(x);
    }
    let mut parts: Vec<Vec<usize>> = groups.into_values().collect();
    parts.sort_by_key(|p| p[0]);
    parts
}

/// Rows whose present dense entries do not sum to 1 within `tolerance`.
pub fn oracle_row_violations(dense: &DenseAttention, tolerance: f64) -> Vec<RowSumViolation> {
    let mut out = Vec::new();
    for layer in 0..dense.n_layers {
        for head in 0..dense.n_heads {
            for token in 0..dense.n_tokens {
                let sum: f64 = (0..dense.n_tokens)
                    .filter_map(|d| dense.get(layer, head, token, d))
                    .map(f64::from)
                    .sum();
                if (sum - 1.0).abs() > tolerance {
                    out.push(RowSumViolation {
                        layer,
                        head,
                        token,
                        sum,
                    });
                }
            }
        }
    }
    out
}
