//! Candidate span selection over constituency parses.
//!
//! Every constituent is a candidate answer span. Each candidate carries a
//! reconstruction loss: the mean negative log-probability a masked-span
//! model assigns to the gold tokens when the span is blanked out. Spans
//! that are hard to reconstruct carry more information, so selection is
//! greedy on loss, and a selected span knocks out its ancestors and
//! descendants.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Document, Span};

/// A constituent and its children.
#[derive(Clone, Debug, PartialEq)]
pub struct ParseNode {
    pub span: Span,
    pub label: String,
    pub children: Vec<ParseNode>,
}

impl ParseNode {
    pub fn leaf(span: Span, label: impl Into<String>) -> Self {
        ParseNode {
            span,
            label: label.into(),
            children: Vec::new(),
        }
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, out: &mut Vec<&'a ParseNode>) {
        out.push(self);
        for child in &self.children {
            child.walk(out);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSpan {
    pub span: Span,
    pub loss: f64,
    pub token_count: usize,
}

/// Mean negative log-likelihood of the gold tokens of a span.
pub fn span_loss(token_probs: &[f64]) -> Result<f64> {
    if token_probs.is_empty() {
        return Err(Error::EmptyProbabilities);
    }
    let mut total = 0.0;
    for &p in token_probs {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidProbability(p));
        }
        total -= p.ln();
    }
    Ok(total / token_probs.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectConfig {
    /// Constituents longer than this are never candidates.
    pub max_span_tokens: usize,
    /// Stop once the best remaining loss is not above this value.
    pub loss_floor: Option<f64>,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            max_span_tokens: 16,
            loss_floor: None,
        }
    }
}

pub type SpanScores = HashMap<(usize, usize), f64>;

struct FlatNode {
    span: Span,
    parent: Option<usize>,
    // exclusive end of this node's subtree in pre-order
    subtree_end: usize,
}

fn flatten(forest: &[ParseNode]) -> Vec<FlatNode> {
    fn visit(node: &ParseNode, parent: Option<usize>, out: &mut Vec<FlatNode>) {
        let me = out.len();
        out.push(FlatNode {
            span: node.span,
            parent,
            subtree_end: 0,
        });
        for child in &node.children {
            visit(child, Some(me), out);
        }
        out[me].subtree_end = out.len();
    }
    let mut out = Vec::new();
    for root in forest {
        visit(root, None, &mut out);
    }
    out
}

fn is_punctuation(token: &str) -> bool {
    !token.is_empty()
        && token
            .chars()
            .all(|c| !c.is_alphanumeric() && !c.is_whitespace())
}

/// Greedy selection in pick order: highest loss first, ties by earliest
/// start then shorter span.
pub fn select_in_order(
    doc: &Document,
    forest: &[ParseNode],
    scores: &SpanScores,
    cfg: &SelectConfig,
) -> Result<Vec<ScoredSpan>> {
    let nodes = flatten(forest);
    let mut candidates = Vec::new();
    for (i, node) in nodes.iter().enumerate() {
        let span = node.span;
        if span.len() > cfg.max_span_tokens
            || span.range().all(|t| is_punctuation(&doc.tokens()[t]))
        {
            continue;
        }
        let loss = *scores
            .get(&(span.start, span.end))
            .ok_or(Error::MissingScore {
                start: span.start,
                end: span.end,
            })?;
        if loss.is_nan() || loss < 0.0 {
            return Err(Error::Malformed(format!(
                "loss {loss} for span [{}, {}) is not a nonnegative number",
                span.start, span.end
            )));
        }
        candidates.push((i, loss));
    }
    candidates.sort_by(|&(a, la), &(b, lb)| {
        lb.partial_cmp(&la)
            .unwrap_or(Ordering::Equal)
            .then(nodes[a].span.start.cmp(&nodes[b].span.start))
            .then(nodes[a].span.len().cmp(&nodes[b].span.len()))
            .then(a.cmp(&b))
    });

    let mut excluded = vec![false; nodes.len()];
    let mut picked = Vec::new();
    for (i, loss) in candidates {
        if excluded[i] {
            continue;
        }
        if cfg.loss_floor.is_some_and(|floor| loss <= floor) {
            break;
        }
        let span = nodes[i].span;
        picked.push(ScoredSpan {
            span,
            loss,
            token_count: span.len(),
        });
        excluded[i..nodes[i].subtree_end].fill(true);
        let mut up = nodes[i].parent;
        while let Some(p) = up {
            excluded[p] = true;
            up = nodes[p].parent;
        }
    }
    Ok(picked)
}

/// Selected spans sorted by start offset.
pub fn select_spans(
    doc: &Document,
    forest: &[ParseNode],
    scores: &SpanScores,
    cfg: &SelectConfig,
) -> Result<Vec<Span>> {
    let mut spans: Vec<Span> = select_in_order(doc, forest, scores, cfg)?
        .into_iter()
        .map(|s| s.span)
        .collect();
    spans.sort();
    Ok(spans)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawNode {
    pub start: usize,
    pub end: usize,
    pub label: String,
    #[serde(default)]
    pub children: Vec<RawNode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawScore {
    pub start: usize,
    pub end: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawProbs {
    pub start: usize,
    pub end: usize,
    pub probs: Vec<f64>,
}

/// One line of the parse/score file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParseRecord {
    pub doc_id: String,
    pub forest: Vec<RawNode>,
    #[serde(default)]
    pub scores: Vec<RawScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub token_probs: Vec<RawProbs>,
}

impl ParseRecord {
    /// Resolves the record against its document. Per-token probability
    /// lists, when present, override the stored loss for their span.
    pub fn resolve(&self, doc: &Document) -> Result<(Vec<ParseNode>, SpanScores)> {
        fn convert(doc: &Document, raw: &RawNode) -> Result<ParseNode> {
            let span = Span::new(doc, raw.start, raw.end)?;
            let mut children = Vec::with_capacity(raw.children.len());
            let mut cursor = span.start;
            for c in &raw.children {
                if c.start < cursor || c.end > span.end {
                    return Err(Error::Malformed(format!(
                        "child [{}, {}) not ordered/contained in [{}, {})",
                        c.start, c.end, span.start, span.end
                    )));
                }
                cursor = c.end;
                children.push(convert(doc, c)?);
            }
            Ok(ParseNode {
                span,
                label: raw.label.clone(),
                children,
            })
        }
        if self.doc_id != doc.doc_id() {
            return Err(Error::Malformed(format!(
                "parse record `{}` paired with document `{}`",
                self.doc_id,
                doc.doc_id()
            )));
        }
        let forest = self
            .forest
            .iter()
            .map(|n| convert(doc, n))
            .collect::<Result<Vec<_>>>()?;
        let mut scores: SpanScores = self
            .scores
            .iter()
            .map(|s| ((s.start, s.end), s.loss))
            .collect();
        for p in &self.token_probs {
            if p.probs.len() != p.end.saturating_sub(p.start) {
                return Err(Error::Malformed(format!(
                    "span [{}, {}) has {} token probabilities",
                    p.start,
                    p.end,
                    p.probs.len()
                )));
            }
            scores.insert((p.start, p.end), span_loss(&p.probs)?);
        }
        Ok((forest, scores))
    }

    pub fn from_node(node: &ParseNode) -> RawNode {
        RawNode {
            start: node.span.start,
            end: node.span.end,
            label: node.label.clone(),
            children: node.children.iter().map(Self::from_node).collect(),
        }
    }
}

pub fn read_parse_records<R: BufRead>(reader: R) -> Result<Vec<ParseRecord>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
