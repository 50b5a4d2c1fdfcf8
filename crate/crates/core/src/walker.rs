//! Threshold pruning and depth-first walking of span graphs.

use std::collections::HashSet;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SpanGraph;
use crate::model::Span;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Edges must weigh strictly more than this to survive pruning.
    pub tau: f64,
    pub directed: bool,
    pub max_cluster_spans: usize,
    /// Per-document cap on emitted clusters.
    pub sample_limit: usize,
    pub rng_seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            tau: 0.45,
            directed: false,
            max_cluster_spans: 8,
            sample_limit: 32,
            rng_seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau {} outside [0, 1]", self.tau)));
        }
        if self.max_cluster_spans == 0 || self.sample_limit == 0 {
            return Err(Error::Config("cluster caps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathEdge {
    pub from: usize,
    pub to: usize,
    pub weight: f32,
}

/// A set of linked spans found by walking one (layer, head) graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Graph node indices, in document order of their spans.
    pub nodes: Vec<usize>,
    pub spans: Vec<Span>,
    pub layer: usize,
    pub head: usize,
    pub used_bridge: bool,
    /// Retained edges walked inside the cluster.
    pub path_edges: Vec<PathEdge>,
}

impl Cluster {
    pub fn is_multi_span(&self) -> bool {
        self.spans.len() >= 2
    }
}

/// Keeps exactly the edges heavier than `tau`.
pub fn prune(graph: &SpanGraph, tau: f64) -> SpanGraph {
    let edges: std::collections::BTreeMap<_, _> = graph
        .edges
        .iter()
        .filter(|(_, &w)| f64::from(w) > tau)
        .map(|(&k, &w)| (k, w))
        .collect();
    let bridged = graph
        .bridged
        .iter()
        .filter(|k| edges.contains_key(k))
        .copied()
        .collect();
    SpanGraph {
        layer: graph.layer,
        head: graph.head,
        nodes: graph.nodes.clone(),
        edges,
        bridged,
    }
}

/// Depth-first walk of an already pruned graph.
///
/// Undirected mode returns connected components of the symmetrized edge
/// set. Directed mode returns the reachable set of every seed node, with
/// repeated sets dropped. Isolated nodes come back as singletons.
pub fn walk(graph: &SpanGraph, directed: bool) -> Vec<Cluster> {
    let n = graph.nodes.len();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j) in graph.edges.keys() {
        if i == j {
            continue;
        }
        adjacency[i].push(j);
        if !directed {
            adjacency[j].push(i);
        }
    }

    let mut clusters = Vec::new();
    if directed {
        let mut seen_sets: HashSet<Vec<usize>> = HashSet::new();
        for seed in 0..n {
            let mut visited = vec![false; n];
            let members = dfs(seed, &adjacency, &mut visited);
            let cluster = make_cluster(graph, members);
            if seen_sets.insert(cluster.nodes.clone()) {
                clusters.push(cluster);
            }
        }
    } else {
        let mut visited = vec![false; n];
        for seed in 0..n {
            if !visited[seed] {
                let members = dfs(seed, &adjacency, &mut visited);
                clusters.push(make_cluster(graph, members));
            }
        }
    }
    clusters
}

fn dfs(seed: usize, adjacency: &[Vec<usize>], visited: &mut [bool]) -> Vec<usize> {
    let mut stack = vec![seed];
    let mut members = Vec::new();
    visited[seed] = true;
    while let Some(node) = stack.pop() {
        members.push(node);
        for &next in adjacency[node].iter().rev() {
            if !visited[next] {
                visited[next] = true;
                stack.push(next);
            }
        }
    }
    members
}

fn make_cluster(graph: &SpanGraph, mut members: Vec<usize>) -> Cluster {
    members.sort_by_key(|&i| (graph.nodes[i].start, graph.nodes[i].end, i));
    let mut inside = vec![false; graph.nodes.len()];
    for &m in &members {
        inside[m] = true;
    }
    let path_edges: Vec<PathEdge> = graph
        .edges
        .iter()
        .filter(|(&(i, j), _)| i != j && inside[i] && inside[j])
        .map(|(&(from, to), &weight)| PathEdge { from, to, weight })
        .collect();
    let used_bridge = path_edges.iter().any(|e| graph.is_bridged(e.from, e.to));
    Cluster {
        spans: members.iter().map(|&i| graph.nodes[i]).collect(),
        nodes: members,
        layer: graph.layer,
        head: graph.head,
        used_bridge,
        path_edges,
    }
}

/// Prunes and walks every graph, drops oversized clusters, removes
/// duplicate span sets (first occurrence in (layer, head) order wins), and
/// samples down to `sample_limit` with the configured seed.
pub fn collect_clusters(graphs: &[SpanGraph], cfg: &WalkConfig) -> Result<Vec<Cluster>> {
    collect_impl(graphs, cfg, true)
}

/// Same as [`collect_clusters`] without fanning out across threads.
pub fn collect_clusters_serial(graphs: &[SpanGraph], cfg: &WalkConfig) -> Result<Vec<Cluster>> {
    collect_impl(graphs, cfg, false)
}

fn collect_impl(graphs: &[SpanGraph], cfg: &WalkConfig, parallel: bool) -> Result<Vec<Cluster>> {
    cfg.check()?;
    if let Some(first) = graphs.first() {
        if graphs.iter().any(|g| g.nodes != first.nodes) {
            return Err(Error::InconsistentNodes);
        }
    }
    let mut ordered: Vec<&SpanGraph> = graphs.iter().collect();
    ordered.sort_by_key(|g| (g.layer, g.head));

    let run = |g: &&SpanGraph| walk(&prune(g, cfg.tau), cfg.directed);
    let per_graph: Vec<Vec<Cluster>> = if parallel {
        ordered.par_iter().map(run).collect()
    } else {
        ordered.iter().map(run).collect()
    };

    let mut seen: HashSet<Vec<Span>> = HashSet::new();
    let mut kept: Vec<Cluster> = per_graph
        .into_iter()
        .flatten()
        .filter(|c| c.spans.len() <= cfg.max_cluster_spans)
        .filter(|c| seen.insert(c.spans.clone()))
        .collect();

    if kept.len() > cfg.sample_limit {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let mut picks = rand::seq::index::sample(&mut rng, kept.len(), cfg.sample_limit).into_vec();
        picks.sort_unstable();
        let mut slots: Vec<Option<Cluster>> = kept.into_iter().map(Some).collect();
        kept = picks.into_iter().filter_map(|i| slots[i].take()).collect();
    }
    Ok(kept)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterEdgeRecord {
    pub src: [usize; 2],
    pub dst: [usize; 2],
    pub weight: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub doc_id: String,
    pub layer: usize,
    pub head: usize,
    pub spans: Vec<[usize; 2]>,
    pub edges: Vec<ClusterEdgeRecord>,
    pub used_bridge: bool,
}

impl ClusterRecord {
    pub fn new(doc_id: &str, cluster: &Cluster, nodes: &[Span]) -> Self {
        ClusterRecord {
            doc_id: doc_id.to_string(),
            layer: cluster.layer,
            head: cluster.head,
            spans: cluster.spans.iter().map(|s| [s.start, s.end]).collect(),
            edges: cluster
                .path_edges
                .iter()
                .map(|e| ClusterEdgeRecord {
                    src: [nodes[e.from].start, nodes[e.from].end],
                    dst: [nodes[e.to].start, nodes[e.to].end],
                    weight: e.weight,
                })
                .collect(),
            used_bridge: cluster.used_bridge,
        }
    }
}

pub fn write_cluster_records<W: Write>(
    mut out: W,
    doc_id: &str,
    clusters: &[Cluster],
    nodes: &[Span],
) -> Result<()> {
    for c in clusters {
        writeln!(
            out,
            "{}",
            serde_json::to_string(&ClusterRecord::new(doc_id, c, nodes))?
        )?;
    }
    Ok(())
}
