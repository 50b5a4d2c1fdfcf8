//! Answer templates, infilling plug-ins, and question-generation context.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Document, Span, GLOBAL_MARKER};

pub const MASK_TOKEN: &str = "<mask>";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Segment {
    Text(String),
    Mask,
}

/// Span texts in document order with a mask between neighbours.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnswerTemplate {
    pub segments: Vec<Segment>,
    /// `[start, end)` of the span behind each text segment.
    pub span_offsets: Vec<(usize, usize)>,
}

impl AnswerTemplate {
    pub fn span_texts(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Text(t) => Some(t.as_str()),
            Segment::Mask => None,
        })
    }

    pub fn mask_count(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| **s == Segment::Mask)
            .count()
    }

    /// The template as one line, masks written as `<mask>`.
    pub fn render(&self) -> String {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Text(t) => t.as_str(),
                Segment::Mask => MASK_TOKEN,
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn build_template(doc: &Document, spans: &[Span]) -> Result<AnswerTemplate> {
    let mut sorted = spans.to_vec();
    sorted.sort();
    let mut segments = Vec::with_capacity(2 * sorted.len());
    let mut span_offsets = Vec::with_capacity(sorted.len());
    for (i, span) in sorted.iter().enumerate() {
        if span.is_empty() || span.end > doc.n_tokens() {
            return Err(Error::OutOfRange(format!(
                "span [{}, {}) outside document `{}`",
                span.start,
                span.end,
                doc.doc_id()
            )));
        }
        if i > 0 {
            segments.push(Segment::Mask);
        }
        segments.push(Segment::Text(sanitize(&doc.render(span.range()))));
        span_offsets.push((span.start, span.end));
    }
    Ok(AnswerTemplate {
        segments,
        span_offsets,
    })
}

fn sanitize(text: &str) -> String {
    text.replace(['\n', '\r'], " ")
}

/// Built-in infiller: drops the masks and joins span texts with a space.
pub fn connector_fill(template: &AnswerTemplate) -> String {
    template.span_texts().collect::<Vec<_>>().join(" ")
}

/// True when `answer` keeps every span's tokens contiguous and in order,
/// and carries no mask or marker tokens.
pub fn satisfies_infill_contract(template: &AnswerTemplate, answer: &str) -> bool {
    let tokens: Vec<&str> = answer.split_whitespace().collect();
    if tokens.is_empty()
        || tokens
            .iter()
            .any(|&t| t == MASK_TOKEN || t == GLOBAL_MARKER)
    {
        return false;
    }
    let mut cursor = 0;
    for text in template.span_texts() {
        let needle: Vec<&str> = text.split_whitespace().collect();
        if needle.is_empty() {
            continue;
        }
        match (cursor..=tokens.len().saturating_sub(needle.len()))
            .find(|&i| tokens.get(i..i + needle.len()) == Some(&needle[..]))
        {
            Some(i) => cursor = i + needle.len(),
            None => return false,
        }
    }
    true
}

/// A line-in, line-out plug-in endpoint.
pub trait Channel {
    fn call(&mut self, request: &str) -> Result<String>;
}

impl<F> Channel for F
where
    F: FnMut(&str) -> Result<String>,
{
    fn call(&mut self, request: &str) -> Result<String> {
        self(request)
    }
}

/// A spawned filter process reading one request per line on stdin and
/// writing one response per line on stdout. The n-th response answers the
/// n-th request.
pub struct ProcessChannel {
    child: Child,
    stdin: Option<ChildStdin>,
    responses: Receiver<String>,
    timeout: Duration,
    dead: bool,
}

impl ProcessChannel {
    /// Runs `command` through `sh -c`.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::Channel(format!("cannot spawn `{command}`: {e}")))?;
        let stdout = child.stdout.take().expect("stdout is piped");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ProcessChannel {
            child,
            stdin,
            responses: rx,
            timeout,
            dead: false,
        })
    }

    fn send(&mut self, request: &str) -> Result<()> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::Channel("stdin closed".into()))?;
        writeln!(stdin, "{}", sanitize(request))
            .and_then(|_| stdin.flush())
            .map_err(|e| {
                self.dead = true;
                Error::Channel(format!("write failed: {e}"))
            })
    }

    fn receive(&mut self) -> Result<String> {
        match self.responses.recv_timeout(self.timeout) {
            Ok(line) => Ok(line),
            Err(RecvTimeoutError::Timeout) => {
                // a late reply would be matched to the wrong request
                self.dead = true;
                Err(Error::Channel("timed out".into()))
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.dead = true;
                Err(Error::Channel("plug-in exited".into()))
            }
        }
    }

    /// Sends requests with at most `max_in_flight` unanswered at once.
    /// Responses are matched to requests by sequence position; entries
    /// after a failure are errors.
    pub fn call_batch(&mut self, requests: &[String], max_in_flight: usize) -> Vec<Result<String>> {
        let limit = max_in_flight.max(1);
        let mut out = Vec::with_capacity(requests.len());
        let mut sent = 0;
        while out.len() < requests.len() {
            while !self.dead && sent < requests.len() && sent - out.len() < limit {
                if self.send(&requests[sent]).is_err() {
                    break;
                }
                sent += 1;
            }
            if self.dead {
                out.push(Err(Error::Channel("plug-in unavailable".into())));
                continue;
            }
            out.push(self.receive());
        }
        out
    }
}

impl Channel for ProcessChannel {
    fn call(&mut self, request: &str) -> Result<String> {
        if self.dead {
            return Err(Error::Channel("plug-in unavailable".into()));
        }
        self.send(request)?;
        self.receive()
    }
}

impl Drop for ProcessChannel {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FillOutcome {
    pub answer: String,
    /// The plug-in failed or broke the contract; `answer` is the connector
    /// fill.
    pub fallback: bool,
}

/// Asks `channel` to fill the template; falls back to [`connector_fill`]
/// on failure or contract violation.
pub fn external_fill(template: &AnswerTemplate, channel: &mut dyn Channel) -> FillOutcome {
    let response = channel.call(&template.render());
    settle_fill(template, response)
}

pub(crate) fn settle_fill(template: &AnswerTemplate, response: Result<String>) -> FillOutcome {
    match response {
        Ok(answer) if satisfies_infill_contract(template, &answer) => FillOutcome {
            answer: answer.trim().to_string(),
            fallback: false,
        },
        _ => FillOutcome {
            answer: connector_fill(template),
            fallback: true,
        },
    }
}

/// Every sentence overlapping a span, once each, in document order.
pub fn gather_context_sentences(doc: &Document, spans: &[Span]) -> Vec<String> {
    doc.sentence_ranges()
        .into_iter()
        .filter(|r| spans.iter().any(|s| s.start < r.end && r.start < s.end))
        .map(|r| sanitize(&doc.render(r)))
        .collect()
}

/// Question-generation input: the answer, the separator, then the
/// sentences, all joined by single spaces.
pub fn qg_input(answer: &str, sentences: &[String], separator: &str) -> String {
    format!("{answer} {separator} {}", sentences.join(" "))
}

/// One emitted dataset record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QAPairCandidate {
    pub doc_id: String,
    pub layer: usize,
    pub head: usize,
    pub spans: Vec<[usize; 2]>,
    pub template: String,
    pub answer: String,
    pub question: String,
    pub context_sentences: Vec<String>,
    pub qg_input: String,
    pub used_bridge: bool,
    pub multi_span: bool,
    pub fill_fallback: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contributions_doc() -> (Document, Vec<Span>) {
        let p1 = "The main contributions of this paper are listed .";
        let p2 = "We use a single-layer forward recurrent neural network here .";
        let p3 = "It encodes sentence information well .";
        let paras: Vec<Vec<&str>> = [p1, p2, p3]
            .iter()
            .map(|p| p.split(' ').collect())
            .collect();
        let doc = Document::from_paragraphs("d", &paras).unwrap();
        // </s>=0 The=1 main=2 contributions=3 ... p2 marker at 10, "a"=13
        let spans = vec![
            Span::new(&doc, 24, 26).unwrap(),
            Span::new(&doc, 1, 4).unwrap(),
            Span::new(&doc, 13, 19).unwrap(),
        ];
        (doc, spans)
    }

    #[test]
    fn template_from_three_spans() {
        let (doc, spans) = contributions_doc();
        let t = build_template(&doc, &spans).unwrap();
        assert_eq!(
            t.render(),
            "The main contributions <mask> a single-layer forward recurrent neural network <mask> sentence information"
        );
        assert_eq!(t.mask_count(), 2);
        assert_eq!(
            connector_fill(&t),
            "The main contributions a single-layer forward recurrent neural network sentence information"
        );
    }

    #[test]
    fn single_span_template() {
        let (doc, spans) = contributions_doc();
        let t = build_template(&doc, &spans[1..2]).unwrap();
        assert_eq!(t.render(), "The main contributions");
        assert_eq!(t.mask_count(), 0);
        assert_eq!(connector_fill(&t), "The main contributions");
    }

    #[test]
    fn out_of_range_span() {
        let (doc, _) = contributions_doc();
        let bad = Span {
            start: 30,
            end: 99,
            paragraph: 2,
        };
        assert!(build_template(&doc, &[bad]).is_err());
    }

    #[test]
    fn channel_fill_and_fallbacks() {
        let (doc, spans) = contributions_doc();
        let t = build_template(&doc, &spans).unwrap();
        let mut bart = |req: &str| -> Result<String> {
            Ok(req
                .replacen(MASK_TOKEN, "were to develop", 1)
                .replacen(MASK_TOKEN, "for", 1))
        };
        let out = external_fill(&t, &mut bart);
        assert!(!out.fallback);
        assert_eq!(
            out.answer,
            "The main contributions were to develop a single-layer forward recurrent neural network for sentence information"
        );

        let mut lossy =
            |_: &str| -> Result<String> { Ok("The main contributions were good".into()) };
        let out = external_fill(&t, &mut lossy);
        assert!(out.fallback);
        assert_eq!(out.answer, connector_fill(&t));

        let mut broken = |_: &str| -> Result<String> { Err(Error::Channel("down".into())) };
        assert!(external_fill(&t, &mut broken).fallback);

        let mut unfilled = |req: &str| -> Result<String> { Ok(req.to_string()) };
        assert!(external_fill(&t, &mut unfilled).fallback);
    }

    #[test]
    fn contract_requires_order() {
        let (doc, spans) = contributions_doc();
        let t = build_template(&doc, &spans).unwrap();
        let swapped = "sentence information and The main contributions a single-layer forward recurrent neural network";
        assert!(!satisfies_infill_contract(&t, swapped));
    }

    #[test]
    fn context_sentences() {
        let (doc, spans) = contributions_doc();
        let sents = gather_context_sentences(&doc, &spans);
        assert_eq!(sents.len(), 3);
        assert_eq!(
            sents[0],
            "The main contributions of this paper are listed ."
        );
        // two spans in one sentence
        let same = [
            Span::new(&doc, 1, 2).unwrap(),
            Span::new(&doc, 3, 4).unwrap(),
        ];
        assert_eq!(gather_context_sentences(&doc, &same).len(), 1);
        // a span covering a whole sentence
        let whole = [Span::new(&doc, 1, 10).unwrap()];
        assert_eq!(gather_context_sentences(&doc, &whole).len(), 1);
    }

    #[test]
    fn qg_input_format() {
        let s = vec!["A b .".to_string(), "C d .".to_string()];
        assert_eq!(qg_input("ans", &s, "</sep>"), "ans </sep> A b . C d .");
    }
}
