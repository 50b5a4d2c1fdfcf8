use std::io::{BufRead, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token inserted in front of every paragraph and given global attention.
pub const GLOBAL_MARKER: &str = "</s>";

const SENTENCE_FINAL: [&str; 3] = [".", "?", "!"];

/// A tokenized long document with paragraph and global-marker layout.
///
/// Markers are real tokens in `tokens`, so every index (spans, attention
/// rows, sentence starts) refers to one coordinate system. Rendering skips
/// them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    doc_id: String,
    tokens: Vec<String>,
    paragraph_starts: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sentence_starts: Option<Vec<usize>>,
    #[serde(default)]
    global_positions: Vec<usize>,
}

impl Document {
    pub fn new(
        doc_id: impl Into<String>,
        tokens: Vec<String>,
        paragraph_starts: Vec<usize>,
        sentence_starts: Option<Vec<usize>>,
        global_positions: Vec<usize>,
    ) -> Result<Self> {
        let doc = Document {
            doc_id: doc_id.into(),
            tokens,
            paragraph_starts,
            sentence_starts,
            global_positions,
        };
        doc.check()?;
        Ok(doc)
    }

    /// Builds a document from paragraphs of plain tokens, prepending a
    /// global marker to each paragraph.
    pub fn from_paragraphs<S: AsRef<str>>(
        doc_id: impl Into<String>,
        paragraphs: &[Vec<S>],
    ) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut paragraph_starts = Vec::new();
        for para in paragraphs {
            paragraph_starts.push(tokens.len());
            tokens.push(GLOBAL_MARKER.to_string());
            tokens.extend(para.iter().map(|t| t.as_ref().to_string()));
        }
        let globals = paragraph_starts.clone();
        Document::new(doc_id, tokens, paragraph_starts, None, globals)
    }

    fn invalid(&self, reason: impl Into<String>) -> Error {
        Error::InvalidDocument {
            doc_id: self.doc_id.clone(),
            reason: reason.into(),
        }
    }

    fn check(&self) -> Result<()> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(self.invalid("document has no tokens"));
        }
        if self.paragraph_starts.first() != Some(&0) {
            return Err(self.invalid("paragraph_starts must begin at 0"));
        }
        if !strictly_increasing(&self.paragraph_starts) {
            return Err(self.invalid("paragraph_starts is not strictly increasing"));
        }
        if let Some(&last) = self.paragraph_starts.last() {
            if last >= n {
                return Err(self.invalid(format!(
                    "paragraph index {last} out of range for {n} tokens"
                )));
            }
        }
        if !strictly_increasing(&self.global_positions) {
            return Err(self.invalid("global_positions is not strictly increasing"));
        }
        for &g in &self.global_positions {
            if g >= n {
                return Err(self.invalid(format!("global position {g} out of range")));
            }
            if self.paragraph_starts.binary_search(&g).is_err() {
                return Err(self.invalid(format!(
                    "global token not at paragraph start (position {g})"
                )));
            }
        }
        if let Some(starts) = &self.sentence_starts {
            if starts.first() != Some(&0) || !strictly_increasing(starts) {
                return Err(
                    self.invalid("sentence_starts must begin at 0 and be strictly increasing")
                );
            }
            if starts.last().is_some_and(|&s| s >= n) {
                return Err(self.invalid("sentence start out of range"));
            }
            if let Some(p) = self
                .paragraph_starts
                .iter()
                .find(|p| starts.binary_search(p).is_err())
            {
                return Err(self.invalid(format!(
                    "sentence_starts does not refine paragraph start {p}"
                )));
            }
        }
        Ok(())
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn n_paragraphs(&self) -> usize {
        self.paragraph_starts.len()
    }

    pub fn paragraph_starts(&self) -> &[usize] {
        &self.paragraph_starts
    }

    pub fn sentence_starts(&self) -> Option<&[usize]> {
        self.sentence_starts.as_deref()
    }

    pub fn global_positions(&self) -> &[usize] {
        &self.global_positions
    }

    pub fn is_global(&self, token: usize) -> bool {
        self.global_positions.binary_search(&token).is_ok()
    }

    /// Paragraph index containing `token`.
    pub fn paragraph_of(&self, token: usize) -> usize {
        match self.paragraph_starts.binary_search(&token) {
            Ok(p) => p,
            Err(p) => p - 1,
        }
    }

    pub fn paragraph_range(&self, paragraph: usize) -> Range<usize> {
        let start = self.paragraph_starts[paragraph];
        let end = self
            .paragraph_starts
            .get(paragraph + 1)
            .copied()
            .unwrap_or(self.tokens.len());
        start..end
    }

    /// Position of the global marker heading `paragraph`, if it has one.
    pub fn marker_of(&self, paragraph: usize) -> Option<usize> {
        let start = self.paragraph_starts[paragraph];
        self.is_global(start).then_some(start)
    }

    /// Sentence intervals in document order. Uses the stored sentence
    /// starts, or splits on sentence-final punctuation inside each
    /// paragraph when none were supplied.
    pub fn sentence_ranges(&self) -> Vec<Range<usize>> {
        let starts = match &self.sentence_starts {
            Some(s) => s.clone(),
            None => self.fallback_sentence_starts(),
        };
        let n = self.tokens.len();
        starts
            .iter()
            .enumerate()
            .map(|(i, &s)| s..starts.get(i + 1).copied().unwrap_or(n))
            .collect()
    }

    fn fallback_sentence_starts(&self) -> Vec<usize> {
        let mut starts = Vec::new();
        for p in 0..self.n_paragraphs() {
            let range = self.paragraph_range(p);
            starts.push(range.start);
            for i in range.clone() {
                let next = i + 1;
                if next < range.end && SENTENCE_FINAL.contains(&self.tokens[i].as_str()) {
                    starts.push(next);
                }
            }
        }
        starts
    }

    /// Joins the tokens of `range` with single spaces, skipping markers.
    pub fn render(&self, range: Range<usize>) -> String {
        range
            .filter(|&i| !self.is_global(i))
            .map(|i| self.tokens[i].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let doc: Document = serde_json::from_str(line)?;
        doc.check()?;
        Ok(doc)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("document serialization is infallible")
    }
}

fn strictly_increasing(v: &[usize]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

/// Reads one document per non-blank line.
pub fn read_documents<R: BufRead>(reader: R) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = Document::from_json_line(&line).map_err(|e| match e {
            Error::Malformed(m) => Error::Malformed(format!("line {}: {m}", lineno + 1)),
            other => other,
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_documents<W: Write>(mut writer: W, docs: &[Document]) -> Result<()> {
    for doc in docs {
        writeln!(writer, "{}", doc.to_json_line())?;
    }
    Ok(())
}

/// A half-open token interval inside one paragraph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub paragraph: usize,
}

impl Span {
    /// Validates `[start, end)` against `doc` and fills in the paragraph.
    pub fn new(doc: &Document, start: usize, end: usize) -> Result<Self> {
        let bad = |reason: String| Error::InvalidDocument {
            doc_id: doc.doc_id().to_string(),
            reason,
        };
        if start >= end {
            return Err(bad(format!("empty span [{start}, {end})")));
        }
        if end > doc.n_tokens() {
            return Err(Error::OutOfRange(format!(
                "span [{start}, {end}) exceeds {} tokens",
                doc.n_tokens()
            )));
        }
        let paragraph = doc.paragraph_of(start);
        if doc.paragraph_of(end - 1) != paragraph {
            return Err(bad(format!(
                "span [{start}, {end}) crosses a paragraph boundary"
            )));
        }
        if (start..end).any(|i| doc.is_global(i)) {
            return Err(bad(format!("span [{start}, {end}) covers a global marker")));
        }
        Ok(Span {
            start,
            end,
            paragraph,
        })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    /// True when one span contains the other.
    pub fn nests_with(&self, other: &Span) -> bool {
        (self.start <= other.start && other.end <= self.end)
            || (other.start <= self.start && self.end <= other.end)
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn minimal_document() {
        let line = r#"{"doc_id":"d","tokens":["</s>","a","b"],"paragraph_starts":[0],"global_positions":[0]}"#;
        let doc = Document::from_json_line(line).unwrap();
        assert_eq!(doc.n_tokens(), 3);
        assert_eq!(doc.to_json_line(), line);
    }

    #[test]
    fn global_not_at_paragraph_start() {
        let line = r#"{"doc_id":"d","tokens":["</s>","a","b"],"paragraph_starts":[0],"global_positions":[1]}"#;
        let err = Document::from_json_line(line).unwrap_err().to_string();
        assert!(err.contains("global token not at paragraph start"), "{err}");
    }

    #[test]
    fn paragraph_index_out_of_range() {
        let err = Document::new("d", toks(&["a", "b"]), vec![0, 5], None, vec![]).unwrap_err();
        assert!(err.to_string().contains("out of range"));
    }

    #[test]
    fn malformed_record() {
        assert!(matches!(
            Document::from_json_line("{\"doc_id\": 3}"),
            Err(Error::Malformed(_))
        ));
    }

    #[test]
    fn sentence_starts_must_refine_paragraphs() {
        let err = Document::new(
            "d",
            toks(&["</s>", "a", "</s>", "b"]),
            vec![0, 2],
            Some(vec![0, 1]),
            vec![0, 2],
        )
        .unwrap_err();
        assert!(err.to_string().contains("refine"));
    }

    #[test]
    fn fallback_splitter() {
        let doc = Document::from_paragraphs("d", &[vec!["a", ".", "b", "?"], vec!["c", "!", "d"]])
            .unwrap();
        let ranges = doc.sentence_ranges();
        assert_eq!(ranges, vec![0..3, 3..5, 5..8, 8..9]);
        assert_eq!(doc.render(ranges[0].clone()), "a .");
        assert_eq!(doc.render(ranges[2].clone()), "c !");
    }

    #[test]
    fn span_rules() {
        let doc = Document::from_paragraphs("d", &[vec!["a", "b"], vec!["c"]]).unwrap();
        let s = Span::new(&doc, 1, 3).unwrap();
        assert_eq!(s.paragraph, 0);
        assert!(Span::new(&doc, 0, 2).is_err(), "covers marker");
        assert!(Span::new(&doc, 2, 5).is_err(), "crosses paragraphs");
        assert!(Span::new(&doc, 2, 2).is_err());
        assert!(matches!(Span::new(&doc, 4, 6), Err(Error::OutOfRange(_))));
        assert_eq!(Span::new(&doc, 4, 5).unwrap().paragraph, 1);
    }
}
