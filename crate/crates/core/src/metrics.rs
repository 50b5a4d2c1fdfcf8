//! Token-overlap F1, sentence-level Bleu and Rouge-L.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub f1: f64,
    pub bleu1: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
}

/// Text normalization applied before every metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Normalizer {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    /// Drop "a", "an" and "the" (extractive-QA scoring convention).
    pub drop_articles: bool,
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer {
            lowercase: true,
            strip_punctuation: true,
            drop_articles: false,
        }
    }
}

impl Normalizer {
    /// Lowercase, punctuation strip, article removal.
    pub fn squad() -> Self {
        Normalizer {
            drop_articles: true,
            ..Normalizer::default()
        }
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        let mut s: String = if self.strip_punctuation {
            text.chars().filter(|c| !c.is_ascii_punctuation()).collect()
        } else {
            text.to_string()
        };
        if self.lowercase {
            s = s.to_lowercase();
        }
        s.split_whitespace()
            .filter(|t| !(self.drop_articles && matches!(*t, "a" | "an" | "the")))
            .map(str::to_string)
            .collect()
    }

    pub fn normalize(&self, text: &str) -> String {
        self.tokens(text).join(" ")
    }
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

pub fn token_f1(prediction: &str, reference: &str) -> f64 {
    token_f1_with(prediction, reference, &Normalizer::default())
}

pub fn token_f1_with(prediction: &str, reference: &str, norm: &Normalizer) -> f64 {
    let pred = norm.tokens(prediction);
    let gold = norm.tokens(reference);
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let gold_counts = counts(&gold);
    let common: usize = counts(&pred)
        .iter()
        .map(|(t, &c)| c.min(gold_counts.get(t).copied().unwrap_or(0)))
        .sum();
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best F1 over several references.
pub fn max_token_f1(prediction: &str, references: &[&str]) -> f64 {
    references
        .iter()
        .map(|r| token_f1(prediction, r))
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Smoothing {
    #[default]
    None,
    /// Add one to numerator and denominator of orders above 1.
    AddOne,
}

pub fn bleu(prediction: &str, reference: &str, max_n: usize) -> f64 {
    bleu_with(
        prediction,
        reference,
        max_n,
        Smoothing::None,
        &Normalizer::default(),
    )
}

/// Sentence Bleu with clipped n-gram precisions and brevity penalty.
///
/// Orders longer than the prediction are left out of the geometric mean,
/// so a short exact match still scores 1.
pub fn bleu_with(
    prediction: &str,
    reference: &str,
    max_n: usize,
    smoothing: Smoothing,
    norm: &Normalizer,
) -> f64 {
    let hyp = norm.tokens(prediction);
    let refs = norm.tokens(reference);
    if hyp.is_empty() || refs.is_empty() {
        return if hyp.is_empty() && refs.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let orders = max_n.max(1).min(hyp.len());
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let hyp_grams = ngram_counts(&hyp, n);
        let ref_grams = ngram_counts(&refs, n);
        let mut matched: usize = hyp_grams
            .iter()
            .map(|(g, &c)| c.min(ref_grams.get(g).copied().unwrap_or(0)))
            .sum();
        let mut total = hyp.len() + 1 - n;
        if smoothing == Smoothing::AddOne && n > 1 {
            matched += 1;
            total += 1;
        }
        if matched == 0 {
            return 0.0;
        }
        log_sum += (matched as f64 / total as f64).ln();
    }
    let c = hyp.len() as f64;
    let r = refs.len() as f64;
    let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    brevity * (log_sum / orders as f64).exp()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    for w in tokens.windows(n) {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Rouge-L F-measure (equal weight on precision and recall).
pub fn rouge_l(prediction: &str, reference: &str) -> f64 {
    let norm = Normalizer::default();
    let pred = norm.tokens(prediction);
    let gold = norm.tokens(reference);
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let lcs = lcs_len(&pred, &gold);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / pred.len() as f64;
    let r = lcs as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

pub fn score(prediction: &str, reference: &str) -> MetricReport {
    MetricReport {
        f1: token_f1(prediction, reference),
        bleu1: bleu(prediction, reference, 1),
        bleu4: bleu(prediction, reference, 4),
        rouge_l: rouge_l(prediction, reference),
    }
}

/// Mean of per-pair reports.
pub fn aggregate(reports: &[MetricReport]) -> MetricReport {
    if reports.is_empty() {
        return MetricReport::default();
    }
    let n = reports.len() as f64;
    let sum = reports
        .iter()
        .fold(MetricReport::default(), |a, r| MetricReport {
            f1: a.f1 + r.f1,
            bleu1: a.bleu1 + r.bleu1,
            bleu4: a.bleu4 + r.bleu4,
            rouge_l: a.rouge_l + r.rouge_l,
        });
    MetricReport {
        f1: sum.f1 / n,
        bleu1: sum.bleu1 / n,
        bleu4: sum.bleu4 / n,
        rouge_l: sum.rouge_l / n,
    }
}
