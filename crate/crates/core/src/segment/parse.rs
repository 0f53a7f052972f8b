use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::unit::{Document, Span};

/// One token of an externally produced dependency parse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseToken {
    pub text: String,
    pub span: Span,
    /// Index of the syntactic head; a root points at itself.
    pub head: usize,
    pub dep_label: String,
    pub pos: String,
    pub is_sentence_start: bool,
    pub is_punct_or_space: bool,
}

/// Dependency parse of a document's text, as exported by the parser sidecar.
///
/// `noun_chunks` are half-open token index ranges `[start, end)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseDocument {
    pub tokens: Vec<ParseToken>,
    #[serde(default)]
    pub noun_chunks: Vec<[usize; 2]>,
}

impl ParseDocument {
    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::input("segmenter", format!("parse file: {e}")))
    }

    /// Checks the parse against the text it claims to cover.
    pub fn validate(&self, text: &Document) -> Result<()> {
        let n = self.tokens.len();
        let mut prev_end = 0usize;
        for (i, tok) in self.tokens.iter().enumerate() {
            if tok.span.end > text.len() || tok.span.start > tok.span.end {
                return Err(Error::input(
                    "segmenter",
                    format!("token {i} span {:?} outside text of length {}", tok.span, text.len()),
                ));
            }
            if tok.span.start < prev_end {
                return Err(Error::input("segmenter", format!("token {i} overlaps the previous token")));
            }
            prev_end = tok.span.end;
            if text.slice(tok.span) != tok.text {
                return Err(Error::input(
                    "segmenter",
                    format!(
                        "token {i} text {:?} does not match document text {:?}",
                        tok.text,
                        text.slice(tok.span)
                    ),
                ));
            }
            if tok.head >= n {
                return Err(Error::input("segmenter", format!("token {i} head {} out of range", tok.head)));
            }
        }
        // Every head chain must terminate at a self-rooted token.
        for start in 0..n {
            let mut t = start;
            let mut steps = 0usize;
            while self.tokens[t].head != t {
                t = self.tokens[t].head;
                steps += 1;
                if steps > n {
                    return Err(Error::input(
                        "segmenter",
                        format!("cyclic head relation through token {start}"),
                    ));
                }
            }
        }
        for chunk in &self.noun_chunks {
            if chunk[0] >= chunk[1] || chunk[1] > n {
                return Err(Error::input("segmenter", format!("noun chunk {chunk:?} out of range")));
            }
            let sentence_of = |t: usize| (0..=t).rev().find(|&k| k == 0 || self.tokens[k].is_sentence_start);
            if sentence_of(chunk[0]) != sentence_of(chunk[1] - 1) {
                return Err(Error::input("segmenter", format!("noun chunk {chunk:?} crosses a sentence")));
            }
        }
        Ok(())
    }

    /// Token index ranges of sentences: maximal runs starting at a sentence start.
    pub fn sentence_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0usize;
        for (i, tok) in self.tokens.iter().enumerate().skip(1) {
            if tok.is_sentence_start {
                out.push(start..i);
                start = i;
            }
        }
        if start < self.tokens.len() {
            out.push(start..self.tokens.len());
        }
        out
    }
}
