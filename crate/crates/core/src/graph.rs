//! Span graphs pooled from token-level attention.
//!
//! An edge from span `i` to span `j` exists when some token of `i` has an
//! attention entry towards some token of `j`; its weight pools those
//! entries. Spans in distant paragraphs share no local entries, so the
//! global markers act as bridges: token → own marker → other marker →
//! token, scored as the geometric mean of the three hops.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttentionDump, Document, HeadView, Span};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingMode {
    #[default]
    Max,
    Min,
    Mean,
}

impl PoolingMode {
    pub const ALL: [PoolingMode; 3] = [PoolingMode::Max, PoolingMode::Min, PoolingMode::Mean];
}

impl FromStr for PoolingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(PoolingMode::Max),
            "min" => Ok(PoolingMode::Min),
            "mean" => Ok(PoolingMode::Mean),
            other => Err(Error::Config(format!("unknown pooling mode `{other}`"))),
        }
    }
}

impl fmt::Display for PoolingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolingMode::Max => "max",
            PoolingMode::Min => "min",
            PoolingMode::Mean => "mean",
        })
    }
}

/// Which direction of token/marker attention ranks the source tokens of a
/// bridge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerRanking {
    /// Rank paragraph tokens by their attention to the marker.
    #[default]
    TokenToMarker,
    /// Rank by the marker's attention to the token.
    MarkerToToken,
}

impl FromStr for MarkerRanking {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "token_to_marker" => Ok(MarkerRanking::TokenToMarker),
            "marker_to_token" => Ok(MarkerRanking::MarkerToToken),
            other => Err(Error::Config(format!("unknown marker ranking `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeConfig {
    /// Source-paragraph tokens per bridge.
    pub k: usize,
    /// Target markers per source marker.
    pub l: usize,
    /// Target-paragraph tokens per target marker.
    pub m: usize,
    pub ranking: MarkerRanking,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        BridgeConfig {
            k: 3,
            l: 3,
            m: 3,
            ranking: MarkerRanking::TokenToMarker,
        }
    }
}

impl BridgeConfig {
    pub fn check(&self) -> Result<()> {
        if self.k == 0 || self.l == 0 || self.m == 0 {
            return Err(Error::Config(
                "bridge counts k, l, m must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Weighted directed graph over spans for one (layer, head).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanGraph {
    pub layer: usize,
    pub head: usize,
    pub nodes: Vec<Span>,
    pub edges: BTreeMap<(usize, usize), f32>,
    /// Edges whose pooled value came from a bridged token entry.
    pub bridged: BTreeSet<(usize, usize)>,
}

impl SpanGraph {
    pub fn empty(layer: usize, head: usize, nodes: Vec<Span>) -> Self {
        SpanGraph {
            layer,
            head,
            nodes,
            edges: BTreeMap::new(),
            bridged: BTreeSet::new(),
        }
    }

    pub fn weight(&self, from: usize, to: usize) -> Option<f32> {
        self.edges.get(&(from, to)).copied()
    }

    pub fn is_bridged(&self, from: usize, to: usize) -> bool {
        self.bridged.contains(&(from, to))
    }

    /// One line per edge: layer, head, source span, target span, weight,
    /// and whether a bridge produced it.
    pub fn write_records<W: Write>(&self, doc_id: &str, mut out: W) -> Result<()> {
        for (&(i, j), &w) in &self.edges {
            let rec = GraphEdgeRecord {
                doc_id: doc_id.to_string(),
                layer: self.layer,
                head: self.head,
                src: [self.nodes[i].start, self.nodes[i].end],
                dst: [self.nodes[j].start, self.nodes[j].end],
                weight: w,
                bridged: self.is_bridged(i, j),
            };
            writeln!(out, "{}", serde_json::to_string(&rec)?)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphEdgeRecord {
    pub doc_id: String,
    pub layer: usize,
    pub head: usize,
    pub src: [usize; 2],
    pub dst: [usize; 2],
    pub weight: f32,
    pub bridged: bool,
}

/// Synthetic token edge produced by a marker bridge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BridgeEdge {
    pub src: usize,
    pub dst: usize,
    pub weight: f32,
    /// token → own marker, marker → marker, marker → token.
    pub hops: [f32; 3],
}

/// Geometric mean of the three hop weights of a bridge.
pub fn geometric_bridge(to_marker: f64, across: f64, from_marker: f64) -> f64 {
    (to_marker * across * from_marker).cbrt()
}

fn top_by<F: Fn(usize) -> f32>(candidates: &[usize], count: usize, score: F) -> Vec<usize> {
    let mut scored: Vec<(f32, usize)> = candidates.iter().map(|&t| (score(t), t)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(count).map(|(_, t)| t).collect()
}

/// Bridged token edges for one (layer, head).
///
/// A document with fewer than two marked paragraphs yields no edges.
pub fn bridge_global(
    dump: &AttentionDump,
    layer: usize,
    head: usize,
    doc: &Document,
    cfg: &BridgeConfig,
) -> Result<Vec<BridgeEdge>> {
    cfg.check()?;
    dump.check_against(doc)?;
    let view = dump.head(layer, head)?;
    Ok(bridges_for_view(&view, doc, cfg))
}

fn bridges_for_view(view: &HeadView<'_>, doc: &Document, cfg: &BridgeConfig) -> Vec<BridgeEdge> {
    let marked: Vec<(usize, usize)> = (0..doc.n_paragraphs())
        .filter_map(|p| doc.marker_of(p).map(|m| (p, m)))
        .collect();
    if marked.len() < 2 {
        return Vec::new();
    }
    let members: Vec<Vec<usize>> = marked
        .iter()
        .map(|&(p, _)| {
            doc.paragraph_range(p)
                .filter(|&t| !doc.is_global(t))
                .collect()
        })
        .collect();
    let weight = |a: usize, b: usize| {
        view.weight(a, b)
            .expect("marker rows and columns are dense")
    };

    let mut out = Vec::new();
    for (src_idx, &(_, src_marker)) in marked.iter().enumerate() {
        let sources = top_by(&members[src_idx], cfg.k, |t| match cfg.ranking {
            MarkerRanking::TokenToMarker => weight(t, src_marker),
            MarkerRanking::MarkerToToken => weight(src_marker, t),
        });
        let others: Vec<usize> = (0..marked.len()).filter(|&j| j != src_idx).collect();
        let targets = top_by(&others, cfg.l, |j| weight(src_marker, marked[j].1));
        for dst_idx in targets {
            let dst_marker = marked[dst_idx].1;
            let across = weight(src_marker, dst_marker);
            let dests = top_by(&members[dst_idx], cfg.m, |t| weight(dst_marker, t));
            for &src in &sources {
                let to_marker = weight(src, src_marker);
                for &dst in &dests {
                    let from_marker = weight(dst_marker, dst);
                    let g = geometric_bridge(
                        f64::from(to_marker),
                        f64::from(across),
                        f64::from(from_marker),
                    );
                    out.push(BridgeEdge {
                        src,
                        dst,
                        weight: g as f32,
                        hops: [to_marker, across, from_marker],
                    });
                }
            }
        }
    }
    out
}

/// Span graph over local attention only.
pub fn build_span_graph(
    dump: &AttentionDump,
    layer: usize,
    head: usize,
    spans: &[Span],
    mode: PoolingMode,
) -> Result<SpanGraph> {
    let view = dump.head(layer, head)?;
    check_spans(spans, dump.n_tokens())?;
    Ok(pool(&view, layer, head, spans, mode, &HashMap::new()))
}

/// Span graph over local attention plus marker bridges. A bridge only
/// fills a token pair that has no local entry.
#[allow(clippy::too_many_arguments)]
pub fn build_with_bridges(
    dump: &AttentionDump,
    layer: usize,
    head: usize,
    doc: &Document,
    spans: &[Span],
    mode: PoolingMode,
    cfg: &BridgeConfig,
) -> Result<SpanGraph> {
    let bridges = bridge_global(dump, layer, head, doc, cfg)?;
    let view = dump.head(layer, head)?;
    check_spans(spans, dump.n_tokens())?;

    let mut in_span = vec![false; dump.n_tokens()];
    for s in spans {
        in_span[s.range()].fill(true);
    }
    let mut fill = HashMap::new();
    for b in bridges {
        if in_span[b.src] && in_span[b.dst] && view.weight(b.src, b.dst).is_none() {
            fill.insert((b.src, b.dst), b.weight);
        }
    }
    Ok(pool(&view, layer, head, spans, mode, &fill))
}

fn check_spans(spans: &[Span], n_tokens: usize) -> Result<()> {
    match spans.iter().find(|s| s.is_empty() || s.end > n_tokens) {
        Some(s) => Err(Error::OutOfRange(format!(
            "span [{}, {}) invalid for {n_tokens} tokens",
            s.start, s.end
        ))),
        None => Ok(()),
    }
}

#[derive(Default)]
struct Pool {
    count: usize,
    sum: f64,
    best_local: Option<f32>,
    best_bridge: Option<f32>,
    any_bridge: bool,
}

impl Pool {
    fn push(&mut self, w: f32, bridged: bool, mode: PoolingMode) {
        self.count += 1;
        self.sum += f64::from(w);
        let better = |cur: Option<f32>| match (cur, mode) {
            (None, _) => true,
            (Some(c), PoolingMode::Min) => w < c,
            (Some(c), _) => w > c,
        };
        if bridged {
            self.any_bridge = true;
            if better(self.best_bridge) {
                self.best_bridge = Some(w);
            }
        } else if better(self.best_local) {
            self.best_local = Some(w);
        }
    }

    fn finish(&self, mode: PoolingMode) -> Option<(f32, bool)> {
        if self.count == 0 {
            return None;
        }
        match mode {
            PoolingMode::Mean => Some(((self.sum / self.count as f64) as f32, self.any_bridge)),
            PoolingMode::Max | PoolingMode::Min => match (self.best_local, self.best_bridge) {
                (Some(l), None) => Some((l, false)),
                (None, Some(b)) => Some((b, true)),
                (Some(l), Some(b)) => {
                    let bridge_wins = if mode == PoolingMode::Max {
                        b > l
                    } else {
                        b < l
                    };
                    Some(if bridge_wins { (b, true) } else { (l, false) })
                }
                (None, None) => unreachable!("count > 0"),
            },
        }
    }
}

fn pool(
    view: &HeadView<'_>,
    layer: usize,
    head: usize,
    spans: &[Span],
    mode: PoolingMode,
    bridges: &HashMap<(usize, usize), f32>,
) -> SpanGraph {
    let w = view.window();
    let mut graph = SpanGraph::empty(layer, head, spans.to_vec());

    // Span pairs that receive at least one bridged token entry.
    let mut token_spans: HashMap<usize, Vec<usize>> = HashMap::new();
    if !bridges.is_empty() {
        for (i, s) in spans.iter().enumerate() {
            for t in s.range() {
                token_spans.entry(t).or_default().push(i);
            }
        }
    }
    let mut bridged_pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for &(src, dst) in bridges.keys() {
        for &i in token_spans.get(&src).into_iter().flatten() {
            for &j in token_spans.get(&dst).into_iter().flatten() {
                bridged_pairs.insert((i, j));
            }
        }
    }

    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by_key(|&i| (spans[i].start, spans[i].end));
    let starts: Vec<usize> = order.iter().map(|&i| spans[i].start).collect();
    let max_len = spans.iter().map(Span::len).max().unwrap_or(0);

    let mut pairs: BTreeSet<(usize, usize)> = bridged_pairs;
    for (i, si) in spans.iter().enumerate() {
        let lo = si.start.saturating_sub(w + max_len);
        let hi = si.end - 1 + w;
        let first = starts.partition_point(|&s| s < lo);
        for &j in &order[first..] {
            let sj = spans[j];
            if sj.start > hi {
                break;
            }
            if j != i && sj.end + w > si.start {
                pairs.insert((i, j));
            }
        }
    }

    for (i, j) in pairs {
        if i == j {
            continue;
        }
        let mut acc = Pool::default();
        for m in spans[i].range() {
            for n in spans[j].range() {
                if let Some(v) = view.weight(m, n) {
                    acc.push(v, false, mode);
                } else if let Some(&v) = bridges.get(&(m, n)) {
                    acc.push(v, true, mode);
                }
            }
        }
        if let Some((weight, bridged)) = acc.finish(mode) {
            graph.edges.insert((i, j), weight);
            if bridged {
                graph.bridged.insert((i, j));
            }
        }
    }
    graph
}
