use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spanlink::metrics::{aggregate, score};
use spanlink::model::{read_documents, validate, AttentionDump};
use spanlink::pipeline::{
    collect_document_spans, dataset_stats, dump_path, link_document, load_corpus,
    run_pass_with_skips, write_corpus, write_dataset, PassProfile,
};
use spanlink::synth::{crafted_corpus, gen_corpus, SynthSpec};
use spanlink::walker::write_cluster_records;
use spanlink::{Error, Result};

#[derive(Parser)]
#[command(
    name = "spanlink",
    version,
    about = "Span-graph linking over long-document attention"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check attention dumps against their documents.
    Validate {
        #[arg(long)]
        docs: PathBuf,
        #[arg(long)]
        dumps: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
    },
    /// Select salient spans and print them as JSON lines.
    Collect {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        profile: ProfileArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build span graphs and write surviving clusters.
    Link {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        profile: ProfileArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write every span-graph edge here.
        #[arg(long)]
        graph_out: Option<PathBuf>,
    },
    /// Run a full pass and write the QA-candidate dataset.
    Emit {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        profile: ProfileArgs,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `<out>.manifest.json`.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Recompute statistics from a dataset file.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Write a synthetic corpus directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        n_docs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        paragraphs: usize,
        #[arg(long, default_value_t = 2)]
        window: usize,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 2)]
        heads: usize,
        /// Write the small hand-built corpus instead.
        #[arg(long)]
        crafted: bool,
    },
    /// Score predictions against references, one text per line.
    Score {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        references: PathBuf,
    },
}

#[derive(Args)]
struct Inputs {
    /// Corpus directory holding docs.jsonl, parses.jsonl and dumps/.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    docs: Option<PathBuf>,
    #[arg(long)]
    parses: Option<PathBuf>,
    #[arg(long)]
    dumps: Option<PathBuf>,
}

impl Inputs {
    fn paths(&self) -> Result<(PathBuf, PathBuf, PathBuf)> {
        let pick = |explicit: &Option<PathBuf>, name: &str| {
            explicit
                .clone()
                .or_else(|| self.corpus.as_ref().map(|c| c.join(name)))
                .ok_or_else(|| {
                    Error::Config(format!("need --corpus or an explicit path for {name}"))
                })
        };
        Ok((
            pick(&self.docs, spanlink::pipeline::DOCS_FILE)?,
            pick(&self.parses, spanlink::pipeline::PARSES_FILE)?,
            pick(&self.dumps, spanlink::pipeline::DUMPS_DIR)?,
        ))
    }
}

#[derive(Args)]
struct ProfileArgs {
    /// Flat `key = value` config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// pass-one or pass-two.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    pooling: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    sample_limit: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    directed: bool,
}

impl ProfileArgs {
    fn resolve(&self) -> Result<PassProfile> {
        let mut profile = PassProfile::pass_two();
        if let Some(preset) = &self.profile {
            profile.apply("preset", preset)?;
        }
        if let Some(path) = &self.config {
            profile.apply_text(&fs::read_to_string(path)?)?;
        }
        if let Some(preset) = &self.profile {
            profile.apply("name", preset)?;
            profile.apply(
                "use_global_bridges",
                &(preset != spanlink::pipeline::PASS_ONE).to_string(),
            )?;
        }
        let overrides: [(&str, Option<String>); 8] = [
            ("tau", self.tau.map(|v| v.to_string())),
            ("pooling", self.pooling.clone()),
            ("k", self.k.map(|v| v.to_string())),
            ("l", self.l.map(|v| v.to_string())),
            ("m", self.m.map(|v| v.to_string())),
            ("sample_limit", self.sample_limit.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("workers", self.workers.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                profile.apply(key, &v)?;
            }
        }
        if self.directed {
            profile.walk.directed = true;
        }
        profile.check()?;
        Ok(profile)
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    BufReader::new(File::open(path)?)
        .lines()
        .map(|l| l.map_err(Error::from))
        .collect()
}

fn report_skips(skipped: &[spanlink::pipeline::SkippedDoc]) {
    for s in skipped {
        eprintln!("skipped {}: {}", s.doc_id, s.error);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate {
            docs,
            dumps,
            tolerance,
        } => {
            let docs = read_documents(BufReader::new(File::open(docs)?))?;
            let mut failures = 0;
            for doc in &docs {
                let path = dump_path(&dumps, doc.doc_id());
                let report = match AttentionDump::read_from(BufReader::new(File::open(&path)?)) {
                    Ok(dump) => validate(&dump, doc, tolerance),
                    Err(e) => {
                        println!("{}\terror\t{e}", doc.doc_id());
                        failures += 1;
                        continue;
                    }
                };
                if !report.index_errors.is_empty() {
                    failures += 1;
                }
                println!(
                    "{}\t{}\t{}",
                    doc.doc_id(),
                    if report.ok { "ok" } else { "issues" },
                    serde_json::to_string(&report)?
                );
            }
            if failures > 0 {
                return Err(Error::Malformed(format!(
                    "{failures} dump(s) failed index checks"
                )));
            }
        }
        Command::Collect {
            inputs,
            profile,
            out,
        } => {
            let profile = profile.resolve()?;
            let (docs, parses, dumps) = inputs.paths()?;
            let (loaded, skipped) = load_corpus(&docs, &parses, &dumps)?;
            report_skips(&skipped);
            let mut out = output(&out)?;
            for input in &loaded {
                match collect_document_spans(input, &profile.select) {
                    Ok(spans) => {
                        let line = serde_json::json!({
                            "doc_id": input.doc.doc_id(),
                            "spans": spans
                                .iter()
                                .map(|s| serde_json::json!({
                                    "start": s.start,
                                    "end": s.end,
                                    "text": input.doc.render(s.range()),
                                }))
                                .collect::<Vec<_>>(),
                        });
                        writeln!(out, "{line}")?;
                    }
                    Err(e) => eprintln!("skipped {}: {e}", input.doc.doc_id()),
                }
            }
            out.flush()?;
        }
        Command::Link {
            inputs,
            profile,
            out,
            graph_out,
        } => {
            let profile = profile.resolve()?;
            let (docs, parses, dumps) = inputs.paths()?;
            let (loaded, skipped) = load_corpus(&docs, &parses, &dumps)?;
            report_skips(&skipped);
            let mut out = output(&out)?;
            let mut graphs = match &graph_out {
                Some(p) => Some(BufWriter::new(File::create(p)?)),
                None => None,
            };
            for (index, input) in loaded.iter().enumerate() {
                let links = match link_document(&profile, index, input) {
                    Ok(l) => l,
                    Err(e) => {
                        eprintln!("skipped {}: {e}", input.doc.doc_id());
                        continue;
                    }
                };
                write_cluster_records(&mut out, input.doc.doc_id(), &links.clusters, &links.spans)?;
                if let Some(g) = graphs.as_mut() {
                    for graph in &links.graphs {
                        graph.write_records(input.doc.doc_id(), &mut *g)?;
                    }
                }
            }
            out.flush()?;
            if let Some(mut g) = graphs {
                g.flush()?;
            }
        }
        Command::Emit {
            inputs,
            profile,
            out,
            manifest,
        } => {
            let profile = profile.resolve()?;
            let (docs, parses, dumps) = inputs.paths()?;
            let (loaded, skipped) = load_corpus(&docs, &parses, &dumps)?;
            let result = run_pass_with_skips(&profile, &loaded, skipped)?;
            report_skips(&result.summary.skipped);
            let mut writer = BufWriter::new(File::create(&out)?);
            write_dataset(&mut writer, &result.records)?;
            writer.flush()?;
            let manifest_path = manifest.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".manifest.json");
                PathBuf::from(p)
            });
            fs::write(
                &manifest_path,
                serde_json::to_string_pretty(&result.manifest)?,
            )?;
            println!("{}", serde_json::to_string(&result.summary)?);
        }
        Command::Stats { dataset } => {
            let stats = dataset_stats(BufReader::new(File::open(dataset)?))?;
            println!("{}", serde_json::to_string(&stats)?);
        }
        Command::Synth {
            out,
            n_docs,
            seed,
            paragraphs,
            window,
            layers,
            heads,
            crafted,
        } => {
            let inputs = if crafted {
                crafted_corpus()
            } else {
                let spec = SynthSpec {
                    n_paragraphs: paragraphs,
                    window,
                    n_layers: layers,
                    n_heads: heads,
                    rng_seed: seed,
                    ..SynthSpec::default()
                };
                gen_corpus(&spec, n_docs)?
                    .iter()
                    .map(|c| c.to_input())
                    .collect()
            };
            write_corpus(&out, &inputs)?;
            println!("wrote {} documents to {}", inputs.len(), out.display());
        }
        Command::Score {
            predictions,
            references,
        } => {
            let preds = read_lines(&predictions)?;
            let refs = read_lines(&references)?;
            if preds.len() != refs.len() {
                return Err(Error::Config(format!(
                    "{} predictions but {} references",
                    preds.len(),
                    refs.len()
                )));
            }
            let reports: Vec<_> = preds.iter().zip(&refs).map(|(p, r)| score(p, r)).collect();
            println!("{}", serde_json::to_string(&aggregate(&reports))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
