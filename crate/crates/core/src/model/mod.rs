//! Documents, attention dumps, and their validation.

mod document;
mod dump;
mod validate;

pub use document::{read_documents, write_documents, Document, Span, GLOBAL_MARKER};
pub use dump::{AttentionDump, HeadView, MAGIC, VERSION};
pub use validate::{validate, RowSumViolation, ValidationReport};
