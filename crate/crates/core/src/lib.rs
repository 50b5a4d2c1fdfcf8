//! Span-graph linking over long-document attention.
//!
//! Salient spans are picked from a constituency forest by language-model
//! loss, pooled into per-head span graphs from sparse local-plus-global
//! attention, and walked into clusters that become masked answer templates
//! for question generation.
//!
//! ```
//! use spanlink::synth::crafted_corpus;
//! use spanlink::pipeline::{run_pass, PassProfile};
//!
//! let inputs = crafted_corpus();
//! let out = run_pass(&PassProfile::pass_two(), &inputs).unwrap();
//! assert_eq!(out.summary.stats.overall, 5);
//! ```

pub mod answer;
pub mod collector;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
#[cfg(feature = "test-support")]
pub mod oracle;
pub mod pipeline;
pub mod synth;
pub mod walker;

pub use answer::{build_template, connector_fill, AnswerTemplate, QAPairCandidate, MASK_TOKEN};
pub use collector::{select_spans, ParseNode, ParseRecord, SelectConfig};
pub use error::{Error, Result};
pub use graph::{build_span_graph, build_with_bridges, BridgeConfig, PoolingMode, SpanGraph};
pub use model::{AttentionDump, Document, Span, GLOBAL_MARKER};
pub use pipeline::{run_pass, DocInput, PassProfile};
pub use walker::{collect_clusters, prune, walk, Cluster, WalkConfig};
