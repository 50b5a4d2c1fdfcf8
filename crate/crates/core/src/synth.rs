//! Seeded synthetic corpora: documents, attention dumps with a dense
//! mirror, parse forests and losses.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::collector::{ParseNode, ParseRecord, RawScore, SpanScores};
use crate::error::{Error, Result};
use crate::model::{AttentionDump, Document, Span, GLOBAL_MARKER};
use crate::pipeline::DocInput;

const VOCAB: [&str; 24] = [
    "model",
    "attention",
    "graph",
    "span",
    "token",
    "layer",
    "paper",
    "method",
    "network",
    "sentence",
    "encoder",
    "answer",
    "question",
    "long",
    "document",
    "memory",
    "neural",
    "results",
    "data",
    "training",
    "we",
    "propose",
    "uses",
    "links",
];
const LABELS: [&str; 4] = ["NP", "VP", "PP", "S"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_paragraphs: usize,
    /// Inclusive range of tokens per paragraph, marker excluded.
    pub tokens_per_paragraph: (usize, usize),
    pub window: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Probability that a sentence receives a parse tree.
    pub span_density: f64,
    pub rng_seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_paragraphs: 3,
            tokens_per_paragraph: (6, 12),
            window: 2,
            n_layers: 2,
            n_heads: 2,
            span_density: 1.0,
            rng_seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn check(&self) -> Result<()> {
        let (lo, hi) = self.tokens_per_paragraph;
        if self.n_paragraphs == 0
            || lo == 0
            || lo > hi
            || self.window == 0
            || self.n_layers == 0
            || self.n_heads == 0
        {
            return Err(Error::Config(format!("invalid synthetic spec {self:?}")));
        }
        if !(0.0..=1.0).contains(&self.span_density) {
            return Err(Error::Config("span_density must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Full `n × n` attention per (layer, head); `None` marks pairs outside the
/// band and global pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseAttention {
    pub n_layers: usize,
    pub n_heads: usize,
    pub n_tokens: usize,
    matrices: Vec<Vec<Option<f32>>>,
}

impl DenseAttention {
    pub fn new(n_layers: usize, n_heads: usize, n_tokens: usize) -> Self {
        DenseAttention {
            n_layers,
            n_heads,
            n_tokens,
            matrices: vec![vec![None; n_tokens * n_tokens]; n_layers * n_heads],
        }
    }

    pub fn get(&self, layer: usize, head: usize, src: usize, dst: usize) -> Option<f32> {
        self.matrices[layer * self.n_heads + head][src * self.n_tokens + dst]
    }

    pub fn set(&mut self, layer: usize, head: usize, src: usize, dst: usize, w: Option<f32>) {
        self.matrices[layer * self.n_heads + head][src * self.n_tokens + dst] = w;
    }
}

/// One generated document with everything the pipeline consumes.
#[derive(Clone, Debug)]
pub struct SynthCase {
    pub doc: Document,
    pub dump: AttentionDump,
    pub dense: DenseAttention,
    pub forest: Vec<ParseNode>,
    pub scores: SpanScores,
}

impl SynthCase {
    pub fn to_input(&self) -> DocInput {
        DocInput {
            doc: self.doc.clone(),
            dump: self.dump.clone(),
            parse: self.parse_record(),
        }
    }

    pub fn parse_record(&self) -> ParseRecord {
        let mut scores: Vec<RawScore> = self
            .scores
            .iter()
            .map(|(&(start, end), &loss)| RawScore { start, end, loss })
            .collect();
        scores.sort_by_key(|s| (s.start, s.end));
        ParseRecord {
            doc_id: self.doc.doc_id().to_string(),
            forest: self.forest.iter().map(ParseRecord::from_node).collect(),
            scores,
            token_probs: Vec::new(),
        }
    }

    /// Up to `max` disjoint spans drawn from the forest nodes.
    pub fn random_spans(&self, max: usize, seed: u64) -> Vec<Span> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pool = Vec::new();
        for root in &self.forest {
            let mut nodes = Vec::new();
            root.walk(&mut nodes);
            pool.extend(nodes.into_iter().map(|n| n.span));
        }
        let mut chosen: Vec<Span> = Vec::new();
        while !pool.is_empty() && chosen.len() < max {
            let s = pool.swap_remove(rng.gen_range(0..pool.len()));
            if chosen.iter().all(|c| !c.overlaps(&s)) {
                chosen.push(s);
            }
        }
        chosen.sort();
        chosen
    }
}

pub fn gen_synthetic(spec: &SynthSpec) -> Result<SynthCase> {
    gen_named(spec, &format!("synth-{}", spec.rng_seed))
}

/// Corpus of `n_docs` documents; document `i` uses seed `rng_seed + i`.
pub fn gen_corpus(spec: &SynthSpec, n_docs: usize) -> Result<Vec<SynthCase>> {
    (0..n_docs)
        .map(|i| {
            let s = SynthSpec {
                rng_seed: spec.rng_seed.wrapping_add(i as u64),
                ..spec.clone()
            };
            gen_named(&s, &format!("synth-{}-{i}", spec.rng_seed))
        })
        .collect()
}

fn gen_named(spec: &SynthSpec, doc_id: &str) -> Result<SynthCase> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);

    let mut tokens = Vec::new();
    let mut paragraph_starts = Vec::new();
    let mut sentence_starts = Vec::new();
    for _ in 0..spec.n_paragraphs {
        let len = rng.gen_range(spec.tokens_per_paragraph.0..=spec.tokens_per_paragraph.1);
        paragraph_starts.push(tokens.len());
        sentence_starts.push(tokens.len());
        tokens.push(GLOBAL_MARKER.to_string());
        for k in 0..len {
            let last = k + 1 == len;
            if last || (k >= 2 && rng.gen_bool(0.15)) {
                tokens.push(".".to_string());
                if !last {
                    sentence_starts.push(tokens.len());
                }
            } else {
                tokens.push(VOCAB[rng.gen_range(0..VOCAB.len())].to_string());
            }
        }
    }
    let globals = paragraph_starts.clone();
    let doc = Document::new(
        doc_id,
        tokens,
        paragraph_starts,
        Some(sentence_starts),
        globals,
    )?;

    let n = doc.n_tokens();
    let w = spec.window;
    let mut dump =
        AttentionDump::zeros_for(&doc, spec.n_layers as u16, spec.n_heads as u16, w as u32)?;
    let mut dense = DenseAttention::new(spec.n_layers, spec.n_heads, n);
    for layer in 0..spec.n_layers {
        for head in 0..spec.n_heads {
            for src in 0..n {
                let keys: Vec<usize> = if doc.is_global(src) {
                    (0..n).collect()
                } else {
                    (0..n)
                        .filter(|&j| doc.is_global(j) || src.abs_diff(j) <= w)
                        .collect()
                };
                // cubing spreads the mass so a few entries dominate
                let raw: Vec<f64> = keys
                    .iter()
                    .map(|_| (rng.gen::<f64>() * 0.999 + 0.001).powi(3))
                    .collect();
                let total: f64 = raw.iter().sum();
                for (&dst, r) in keys.iter().zip(&raw) {
                    let v = (r / total) as f32;
                    dump.set_weight(layer, head, src, dst, v)?;
                    dense.set(layer, head, src, dst, Some(v));
                }
            }
        }
    }

    let mut forest = Vec::new();
    let mut scores = SpanScores::new();
    for sentence in doc.sentence_ranges() {
        let start = if doc.is_global(sentence.start) {
            sentence.start + 1
        } else {
            sentence.start
        };
        if start >= sentence.end || !rng.gen_bool(spec.span_density) {
            continue;
        }
        forest.push(random_tree(
            &doc,
            start,
            sentence.end,
            &mut rng,
            &mut scores,
        )?);
    }

    Ok(SynthCase {
        doc,
        dump,
        dense,
        forest,
        scores,
    })
}

fn random_tree(
    doc: &Document,
    lo: usize,
    hi: usize,
    rng: &mut ChaCha8Rng,
    scores: &mut SpanScores,
) -> Result<ParseNode> {
    let span = Span::new(doc, lo, hi)?;
    scores.insert((lo, hi), rng.gen_range(0.0..3.0));
    let label = LABELS[rng.gen_range(0..LABELS.len())];
    if hi - lo == 1 {
        return Ok(ParseNode::leaf(span, label));
    }
    // roughly balanced split
    let mid = lo + (hi - lo) / 2;
    let jitter = if hi - lo > 3 {
        rng.gen_range(0..=2) as isize - 1
    } else {
        0
    };
    let split = (mid as isize + jitter).clamp(lo as isize + 1, hi as isize - 1) as usize;
    Ok(ParseNode {
        span,
        label: label.to_string(),
        children: vec![
            random_tree(doc, lo, split, rng, scores)?,
            random_tree(doc, split, hi, rng, scores)?,
        ],
    })
}

/// Hand-built corpus of three documents, one layer and head each, window 2.
///
/// Under bridging with default K/L/M, τ = 0.45 and max pooling it yields
/// five clusters: two linked only through markers, three with more than
/// one span.
pub fn crafted_corpus() -> Vec<DocInput> {
    let words = |s: &str| s.split(' ').map(str::to_string).collect::<Vec<_>>();
    let leaf_record = |doc: &Document, spans: &[(usize, usize)]| ParseRecord {
        doc_id: doc.doc_id().to_string(),
        forest: spans
            .iter()
            .map(|&(start, end)| crate::collector::RawNode {
                start,
                end,
                label: "NP".into(),
                children: Vec::new(),
            })
            .collect(),
        scores: spans
            .iter()
            .map(|&(start, end)| RawScore {
                start,
                end,
                loss: 1.0,
            })
            .collect(),
        token_probs: Vec::new(),
    };
    let bridge = |dump: &mut AttentionDump, src_tok, src_marker, dst_marker, dst_tok| {
        dump.set_weight(0, 0, src_tok, src_marker, 0.9).unwrap();
        dump.set_weight(0, 0, src_marker, dst_marker, 0.8).unwrap();
        dump.set_weight(0, 0, dst_marker, dst_tok, 0.7).unwrap();
    };

    let mut out = Vec::new();

    // A: </s> alpha beta gamma delta epsilon . | </s> zeta eta theta iota kappa .
    let a = Document::from_paragraphs(
        "crafted-a",
        &[
            words("alpha beta gamma delta epsilon ."),
            words("zeta eta theta iota kappa ."),
        ],
    )
    .unwrap();
    let mut da = AttentionDump::zeros_for(&a, 1, 1, 2).unwrap();
    bridge(&mut da, 1, 0, 7, 9);
    let ra = leaf_record(&a, &[(1, 3), (9, 11)]);
    out.push(DocInput {
        doc: a,
        dump: da,
        parse: ra,
    });

    // B: one paragraph, two spans linked locally and one isolated span
    let b = Document::from_paragraphs(
        "crafted-b",
        &[words(
            "one two three four five six seven eight nine ten eleven .",
        )],
    )
    .unwrap();
    let mut db = AttentionDump::zeros_for(&b, 1, 1, 2).unwrap();
    db.set_weight(0, 0, 2, 4, 0.6).unwrap();
    let rb = leaf_record(&b, &[(1, 3), (4, 6), (10, 12)]);
    out.push(DocInput {
        doc: b,
        dump: db,
        parse: rb,
    });

    // C: bridged pair across paragraphs plus a distant unlinked span
    let c = Document::from_paragraphs(
        "crafted-c",
        &[
            words("red green blue ."),
            words("north south east west up down left right ."),
        ],
    )
    .unwrap();
    let mut dc = AttentionDump::zeros_for(&c, 1, 1, 2).unwrap();
    bridge(&mut dc, 2, 0, 5, 6);
    let rc = leaf_record(&c, &[(1, 3), (6, 8), (11, 13)]);
    out.push(DocInput {
        doc: c,
        dump: dc,
        parse: rc,
    });

    out
}
