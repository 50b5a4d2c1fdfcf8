//! Pass profiles, per-document linking, dataset emission and statistics.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::answer::{
    build_template, connector_fill, gather_context_sentences, qg_input, settle_fill,
    AnswerTemplate, ProcessChannel, QAPairCandidate,
};
use crate::collector::{read_parse_records, select_spans, ParseRecord, SelectConfig};
use crate::error::{Error, Result};
use crate::graph::{build_span_graph, build_with_bridges, BridgeConfig, PoolingMode, SpanGraph};
use crate::model::{read_documents, AttentionDump, Document, Span};
use crate::walker::{collect_clusters_serial, Cluster, WalkConfig};

pub const PASS_ONE: &str = "pass-one";
pub const PASS_TWO: &str = "pass-two";

/// Everything one pass needs to know. Flat `key = value` text round-trips
/// through [`PassProfile::apply`] and [`PassProfile::to_config_text`].
#[derive(Clone, Debug, PartialEq)]
pub struct PassProfile {
    pub name: String,
    pub use_global_bridges: bool,
    pub pooling: PoolingMode,
    pub walk: WalkConfig,
    pub bridge: BridgeConfig,
    pub select: SelectConfig,
    /// `None` means every (layer, head) in the dump.
    pub layer_head_filter: Option<Vec<(usize, usize)>>,
    pub workers: usize,
    pub infill_cmd: Option<String>,
    pub qg_cmd: Option<String>,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    pub qg_separator: String,
}

impl PassProfile {
    /// Local attention only.
    pub fn pass_one() -> Self {
        PassProfile {
            name: PASS_ONE.into(),
            use_global_bridges: false,
            ..Self::pass_two()
        }
    }

    /// Local attention plus marker bridges.
    pub fn pass_two() -> Self {
        PassProfile {
            name: PASS_TWO.into(),
            use_global_bridges: true,
            pooling: PoolingMode::Max,
            walk: WalkConfig::default(),
            bridge: BridgeConfig::default(),
            select: SelectConfig::default(),
            layer_head_filter: None,
            workers: 1,
            infill_cmd: None,
            qg_cmd: None,
            timeout_ms: 5000,
            max_in_flight: 8,
            qg_separator: "</s>".into(),
        }
    }

    pub fn check(&self) -> Result<()> {
        self.walk.check()?;
        self.bridge.check()?;
        if self.name == PASS_ONE && self.use_global_bridges {
            return Err(Error::Config(
                "pass-one profile cannot use global bridges".into(),
            ));
        }
        if self.name == PASS_TWO && !self.use_global_bridges {
            return Err(Error::Config(
                "pass-two profile must use global bridges".into(),
            ));
        }
        if self.workers == 0 || self.max_in_flight == 0 || self.select.max_span_tokens == 0 {
            return Err(Error::Config(
                "workers, max_in_flight and max_span_tokens must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
        }
        fn opt(value: &str) -> Option<String> {
            (!value.is_empty()).then(|| value.to_string())
        }
        match key {
            "preset" => {
                *self = match value {
                    PASS_ONE => Self::pass_one(),
                    PASS_TWO => Self::pass_two(),
                    other => return Err(Error::Config(format!("unknown preset `{other}`"))),
                }
            }
            "name" => self.name = value.to_string(),
            "use_global_bridges" => self.use_global_bridges = num(key, value)?,
            "pooling" => self.pooling = value.parse()?,
            "tau" => self.walk.tau = num(key, value)?,
            "directed" => self.walk.directed = num(key, value)?,
            "max_cluster_spans" => self.walk.max_cluster_spans = num(key, value)?,
            "sample_limit" => self.walk.sample_limit = num(key, value)?,
            "seed" => self.walk.rng_seed = num(key, value)?,
            "k" => self.bridge.k = num(key, value)?,
            "l" => self.bridge.l = num(key, value)?,
            "m" => self.bridge.m = num(key, value)?,
            "marker_ranking" => self.bridge.ranking = value.parse()?,
            "max_span_tokens" => self.select.max_span_tokens = num(key, value)?,
            "loss_floor" => {
                self.select.loss_floor = match value {
                    "" | "none" => None,
                    v => Some(num(key, v)?),
                }
            }
            "layer_heads" => self.layer_head_filter = parse_layer_heads(value)?,
            "workers" => self.workers = num(key, value)?,
            "infill_cmd" => self.infill_cmd = opt(value),
            "qg_cmd" => self.qg_cmd = opt(value),
            "timeout_ms" => self.timeout_ms = num(key, value)?,
            "max_in_flight" => self.max_in_flight = num(key, value)?,
            "qg_separator" => self.qg_separator = value.to_string(),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_config_text(text: &str) -> Result<Self> {
        let mut profile = Self::pass_two();
        profile.apply_text(text)?;
        Ok(profile)
    }

    /// Canonical form, one key per line in fixed order.
    pub fn to_config_text(&self) -> String {
        let layer_heads = match &self.layer_head_filter {
            None => "all".to_string(),
            Some(v) => v
                .iter()
                .map(|(l, h)| format!("{l}:{h}"))
                .collect::<Vec<_>>()
                .join(","),
        };
        let ranking = match self.bridge.ranking {
            crate::graph::MarkerRanking::TokenToMarker => "token_to_marker",
            crate::graph::MarkerRanking::MarkerToToken => "marker_to_token",
        };
        let pairs: Vec<(&str, String)> = vec![
            ("name", self.name.clone()),
            ("use_global_bridges", self.use_global_bridges.to_string()),
            ("pooling", self.pooling.to_string()),
            ("tau", self.walk.tau.to_string()),
            ("directed", self.walk.directed.to_string()),
            ("max_cluster_spans", self.walk.max_cluster_spans.to_string()),
            ("sample_limit", self.walk.sample_limit.to_string()),
            ("seed", self.walk.rng_seed.to_string()),
            ("k", self.bridge.k.to_string()),
            ("l", self.bridge.l.to_string()),
            ("m", self.bridge.m.to_string()),
            ("marker_ranking", ranking.to_string()),
            ("max_span_tokens", self.select.max_span_tokens.to_string()),
            (
                "loss_floor",
                self.select
                    .loss_floor
                    .map_or("none".to_string(), |f| f.to_string()),
            ),
            ("layer_heads", layer_heads),
            ("workers", self.workers.to_string()),
            ("infill_cmd", self.infill_cmd.clone().unwrap_or_default()),
            ("qg_cmd", self.qg_cmd.clone().unwrap_or_default()),
            ("timeout_ms", self.timeout_ms.to_string()),
            ("max_in_flight", self.max_in_flight.to_string()),
            ("qg_separator", self.qg_separator.clone()),
        ];
        pairs
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Digest of the settings that shape the dataset. Worker count is left
    /// out because it cannot change the output.
    pub fn config_hash(&self) -> String {
        let text: String = self
            .to_config_text()
            .lines()
            .filter(|l| !l.starts_with("workers "))
            .map(|l| format!("{l}\n"))
            .collect();
        hex_digest(text.as_bytes())
    }
}

fn parse_layer_heads(value: &str) -> Result<Option<Vec<(usize, usize)>>> {
    if value.is_empty() || value == "all" {
        return Ok(None);
    }
    value
        .split(',')
        .map(|pair| {
            let (l, h) = pair
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("bad layer:head `{pair}`")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad layer:head `{pair}`")))
            };
            Ok((parse(l)?, parse(h)?))
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// One document with its dump and parse/score record.
#[derive(Clone, Debug)]
pub struct DocInput {
    pub doc: Document,
    pub dump: AttentionDump,
    pub parse: ParseRecord,
}

/// Selected spans, per-head graphs and surviving clusters of a document.
#[derive(Clone, Debug)]
pub struct DocLinks {
    pub spans: Vec<Span>,
    pub graphs: Vec<SpanGraph>,
    pub clusters: Vec<Cluster>,
}

pub fn collect_document_spans(input: &DocInput, select: &SelectConfig) -> Result<Vec<Span>> {
    let (forest, scores) = input.parse.resolve(&input.doc)?;
    select_spans(&input.doc, &forest, &scores, select)
}

/// Span selection, graph construction over the profile's (layer, head)
/// pairs, and cluster collection for document number `index`.
pub fn link_document(profile: &PassProfile, index: usize, input: &DocInput) -> Result<DocLinks> {
    let spans = collect_document_spans(input, &profile.select)?;
    input.dump.check_against(&input.doc)?;
    let pairs: Vec<(usize, usize)> = match &profile.layer_head_filter {
        None => input.dump.layer_heads().collect(),
        Some(filter) => filter.clone(),
    };
    let graphs = pairs
        .into_iter()
        .map(|(layer, head)| {
            if profile.use_global_bridges {
                build_with_bridges(
                    &input.dump,
                    layer,
                    head,
                    &input.doc,
                    &spans,
                    profile.pooling,
                    &profile.bridge,
                )
            } else {
                build_span_graph(&input.dump, layer, head, &spans, profile.pooling)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let walk = WalkConfig {
        rng_seed: profile.walk.rng_seed.wrapping_add(index as u64),
        ..profile.walk.clone()
    };
    let clusters = collect_clusters_serial(&graphs, &walk)?;
    Ok(DocLinks {
        spans,
        graphs,
        clusters,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub overall: usize,
    pub with_global: usize,
    pub multi_span: usize,
    pub fallback_fills: usize,
    /// clusters-per-document → number of documents, over documents with at
    /// least one record.
    pub per_doc_cluster_histogram: BTreeMap<usize, usize>,
}

impl DatasetStats {
    pub fn from_records(records: &[QAPairCandidate]) -> Self {
        let mut per_doc: HashMap<&str, usize> = HashMap::new();
        let mut stats = DatasetStats::default();
        for r in records {
            stats.overall += 1;
            stats.with_global += usize::from(r.used_bridge);
            stats.multi_span += usize::from(r.multi_span);
            stats.fallback_fills += usize::from(r.fill_fallback);
            *per_doc.entry(r.doc_id.as_str()).or_insert(0) += 1;
        }
        for count in per_doc.into_values() {
            *stats.per_doc_cluster_histogram.entry(count).or_insert(0) += 1;
        }
        stats
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedDoc {
    pub doc_id: String,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub documents: usize,
    pub skipped: Vec<SkippedDoc>,
    /// Documents processed with bridges enabled but fewer than two marked
    /// paragraphs.
    pub unbridgeable_docs: usize,
    pub stats: DatasetStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub doc_id: String,
    pub document_sha256: String,
    pub dump_sha256: String,
    pub parse_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub profile: String,
    pub config: String,
    pub config_sha256: String,
    pub seed: u64,
    /// Spans are reselected from the parse/score inputs on every pass.
    pub span_selection: String,
    pub f1_normalization: String,
    pub inputs: Vec<InputDigest>,
    pub stats: DatasetStats,
}

#[derive(Clone, Debug)]
pub struct PassOutput {
    pub records: Vec<QAPairCandidate>,
    pub summary: RunSummary,
    pub manifest: Manifest,
}

struct Pending {
    doc_id: String,
    cluster: Cluster,
    template: AnswerTemplate,
    sentences: Vec<String>,
}

/// Runs one pass over `inputs`. Documents that fail are skipped and
/// reported; configuration errors abort.
pub fn run_pass(profile: &PassProfile, inputs: &[DocInput]) -> Result<PassOutput> {
    run_pass_with_skips(profile, inputs, Vec::new())
}

/// As [`run_pass`], carrying documents that already failed to load.
pub fn run_pass_with_skips(
    profile: &PassProfile,
    inputs: &[DocInput],
    mut skipped: Vec<SkippedDoc>,
) -> Result<PassOutput> {
    profile.check()?;
    let process = |(index, input): (usize, &DocInput)| -> Result<Vec<Pending>> {
        let links = link_document(profile, index, input)?;
        links
            .clusters
            .into_iter()
            .map(|cluster| {
                Ok(Pending {
                    doc_id: input.doc.doc_id().to_string(),
                    template: build_template(&input.doc, &cluster.spans)?,
                    sentences: gather_context_sentences(&input.doc, &cluster.spans),
                    cluster,
                })
            })
            .collect()
    };
    let per_doc: Vec<Result<Vec<Pending>>> = if profile.workers <= 1 {
        inputs.iter().enumerate().map(process).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(profile.workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| inputs.par_iter().enumerate().map(process).collect())
    };

    let mut pending = Vec::new();
    let mut unbridgeable_docs = 0;
    for (input, result) in inputs.iter().zip(per_doc) {
        match result {
            Ok(items) => {
                if profile.use_global_bridges && input.doc.global_positions().len() < 2 {
                    unbridgeable_docs += 1;
                }
                pending.extend(items);
            }
            Err(e) => skipped.push(SkippedDoc {
                doc_id: input.doc.doc_id().to_string(),
                error: e.to_string(),
            }),
        }
    }

    let fills = fill_answers(profile, &pending)?;
    let mut records: Vec<QAPairCandidate> = pending
        .into_iter()
        .zip(fills)
        .map(|(p, (answer, fallback))| {
            let qg = qg_input(&answer, &p.sentences, &profile.qg_separator);
            QAPairCandidate {
                doc_id: p.doc_id,
                layer: p.cluster.layer,
                head: p.cluster.head,
                spans: p.cluster.spans.iter().map(|s| [s.start, s.end]).collect(),
                template: p.template.render(),
                answer,
                question: String::new(),
                context_sentences: p.sentences,
                qg_input: qg,
                used_bridge: p.cluster.used_bridge,
                multi_span: p.cluster.is_multi_span(),
                fill_fallback: fallback,
            }
        })
        .collect();
    generate_questions(profile, &mut records)?;

    let stats = DatasetStats::from_records(&records);
    let manifest = Manifest {
        profile: profile.name.clone(),
        config: profile.to_config_text(),
        config_sha256: profile.config_hash(),
        seed: profile.walk.rng_seed,
        span_selection: "reselect".into(),
        f1_normalization: "lowercase, strip ASCII punctuation, collapse whitespace".into(),
        inputs: inputs.iter().map(input_digest).collect(),
        stats: stats.clone(),
    };
    Ok(PassOutput {
        records,
        summary: RunSummary {
            documents: inputs.len() + skipped.len(),
            skipped,
            unbridgeable_docs,
            stats,
        },
        manifest,
    })
}

fn input_digest(input: &DocInput) -> InputDigest {
    InputDigest {
        doc_id: input.doc.doc_id().to_string(),
        document_sha256: hex_digest(input.doc.to_json_line().as_bytes()),
        dump_sha256: hex_digest(&input.dump.to_bytes()),
        parse_sha256: hex_digest(
            serde_json::to_string(&input.parse)
                .expect("parse record serializes")
                .as_bytes(),
        ),
    }
}

fn fill_answers(profile: &PassProfile, pending: &[Pending]) -> Result<Vec<(String, bool)>> {
    let Some(cmd) = &profile.infill_cmd else {
        return Ok(pending
            .iter()
            .map(|p| (connector_fill(&p.template), false))
            .collect());
    };
    let requests: Vec<String> = pending.iter().map(|p| p.template.render()).collect();
    let responses = match ProcessChannel::spawn(cmd, Duration::from_millis(profile.timeout_ms)) {
        Ok(mut channel) => channel.call_batch(&requests, profile.max_in_flight),
        Err(e) => requests
            .iter()
            .map(|_| Err(Error::Channel(e.to_string())))
            .collect(),
    };
    Ok(pending
        .iter()
        .zip(responses)
        .map(|(p, r)| {
            let out = settle_fill(&p.template, r);
            (out.answer, out.fallback)
        })
        .collect())
}

fn generate_questions(profile: &PassProfile, records: &mut [QAPairCandidate]) -> Result<()> {
    let Some(cmd) = &profile.qg_cmd else {
        return Ok(());
    };
    let requests: Vec<String> = records.iter().map(|r| r.qg_input.clone()).collect();
    let Ok(mut channel) = ProcessChannel::spawn(cmd, Duration::from_millis(profile.timeout_ms))
    else {
        return Ok(());
    };
    for (record, response) in records
        .iter_mut()
        .zip(channel.call_batch(&requests, profile.max_in_flight))
    {
        if let Ok(q) = response {
            record.question = q.trim().to_string();
        }
    }
    Ok(())
}

pub fn write_dataset<W: Write>(mut out: W, records: &[QAPairCandidate]) -> Result<()> {
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(reader: R) -> Result<Vec<QAPairCandidate>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QAPairCandidate = serde_json::from_str(&line)
            .map_err(|e| Error::Malformed(format!("dataset line {}: {e}", lineno + 1)))?;
        if rec.multi_span != (rec.spans.len() >= 2) {
            return Err(Error::Malformed(format!(
                "dataset line {}: multi_span flag disagrees with {} spans",
                lineno + 1,
                rec.spans.len()
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Recomputes statistics from a dataset file's record flags.
pub fn dataset_stats<R: BufRead>(reader: R) -> Result<DatasetStats> {
    Ok(DatasetStats::from_records(&read_dataset(reader)?))
}

pub const DOCS_FILE: &str = "docs.jsonl";
pub const PARSES_FILE: &str = "parses.jsonl";
pub const DUMPS_DIR: &str = "dumps";

pub fn dump_path(dumps_dir: &Path, doc_id: &str) -> std::path::PathBuf {
    dumps_dir.join(format!("{doc_id}.awat"))
}

/// Loads documents, parse records, and one `<doc_id>.awat` dump per
/// document. Malformed files are errors; a document whose dump or parse is
/// missing or inconsistent is returned as skipped.
pub fn load_corpus(
    docs_path: &Path,
    parses_path: &Path,
    dumps_dir: &Path,
) -> Result<(Vec<DocInput>, Vec<SkippedDoc>)> {
    let docs = read_documents(BufReader::new(File::open(docs_path)?))?;
    let mut parses: HashMap<String, ParseRecord> =
        read_parse_records(BufReader::new(File::open(parses_path)?))?
            .into_iter()
            .map(|r| (r.doc_id.clone(), r))
            .collect();
    let mut inputs = Vec::new();
    let mut skipped = Vec::new();
    for doc in docs {
        let doc_id = doc.doc_id().to_string();
        let loaded = (|| -> Result<DocInput> {
            let parse = parses
                .remove(&doc_id)
                .ok_or_else(|| Error::Malformed(format!("no parse record for `{doc_id}`")))?;
            let path = dump_path(dumps_dir, &doc_id);
            let dump = AttentionDump::read_for(BufReader::new(File::open(&path)?), &doc)?;
            Ok(DocInput { doc, dump, parse })
        })();
        match loaded {
            Ok(input) => inputs.push(input),
            Err(e) => skipped.push(SkippedDoc {
                doc_id,
                error: e.to_string(),
            }),
        }
    }
    Ok((inputs, skipped))
}

/// Writes `docs.jsonl`, `parses.jsonl` and `dumps/<doc_id>.awat` under `dir`.
pub fn write_corpus(dir: &Path, inputs: &[DocInput]) -> Result<()> {
    fs::create_dir_all(dir.join(DUMPS_DIR))?;
    let mut docs = BufWriter::new(File::create(dir.join(DOCS_FILE))?);
    let mut parses = BufWriter::new(File::create(dir.join(PARSES_FILE))?);
    for input in inputs {
        writeln!(docs, "{}", input.doc.to_json_line())?;
        writeln!(parses, "{}", serde_json::to_string(&input.parse)?)?;
        let file = File::create(dump_path(&dir.join(DUMPS_DIR), input.doc.doc_id()))?;
        input.dump.write_to(BufWriter::new(file))?;
    }
    docs.flush()?;
    parses.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let mut p = PassProfile::pass_one();
        p.apply_text("tau = 0.3\npooling = mean\nlayer_heads = 0:1, 2:3\n# comment\nk=2")
            .unwrap();
        assert_eq!(p.walk.tau, 0.3);
        assert_eq!(p.pooling, PoolingMode::Mean);
        assert_eq!(p.layer_head_filter, Some(vec![(0, 1), (2, 3)]));
        assert_eq!(p.bridge.k, 2);
        let again = PassProfile::from_config_text(&p.to_config_text()).unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn config_errors() {
        let mut p = PassProfile::pass_two();
        assert!(p.apply("bogus", "1").is_err());
        assert!(p.apply("tau", "high").is_err());
        assert!(p.apply_text("tau 0.3").is_err());
        p.apply("tau", "1.5").unwrap();
        assert!(p.check().is_err());
        let mut one = PassProfile::pass_one();
        one.use_global_bridges = true;
        assert!(one.check().is_err());
    }

    #[test]
    fn preset_resets_profile() {
        let p = PassProfile::from_config_text("tau = 0.2\npreset = pass-one").unwrap();
        assert_eq!(p, PassProfile::pass_one());
    }

    #[test]
    fn worker_count_does_not_change_hash() {
        let a = PassProfile::pass_two();
        let mut b = a.clone();
        b.workers = 4;
        assert_eq!(a.config_hash(), b.config_hash());
        b.walk.tau = 0.5;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn empty_dataset_stats() {
        assert_eq!(dataset_stats(&b""[..]).unwrap(), DatasetStats::default());
        assert!(dataset_stats(&b"{not json}\n"[..]).is_err());
    }
}
