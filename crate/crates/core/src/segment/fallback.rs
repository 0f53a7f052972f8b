//! Rule-based sentence and word splitting for documents without a parse.

use std::sync::OnceLock;

use regex::Regex;

use crate::unit::{Document, Span};

/// Lowercased tokens that end with a period without ending a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "vs", "gen", "gov", "sen", "rep",
    "capt", "lt", "col", "sgt", "rev", "hon", "inc", "ltd", "co", "corp", "no", "fig", "figs",
    "vol", "pp", "approx", "dept", "est", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep",
    "sept", "oct", "nov", "dec", "e.g", "i.e", "cf", "al", "u.s", "u.k", "a.m", "p.m",
];

fn terminal_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"[.!?]+["'”’)\]]*"#).unwrap())
}

fn word_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{L}\p{N}]+(?:['’\-.][\p{L}\p{N}]+)*|\S").unwrap())
}

fn paragraph_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\n[ \t\r]*\n\s*").unwrap())
}

/// The word immediately before byte offset `end`, without its trailing period.
fn word_before(text: &str, end: usize) -> &str {
    let head = &text[..end];
    let start = head
        .rfind(|c: char| c.is_whitespace() || c == '(' || c == '"')
        .map(|i| i + head[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    &head[start..]
}

fn is_abbreviation(word: &str) -> bool {
    let w = word.trim_end_matches('.').to_lowercase();
    if w.is_empty() {
        return false;
    }
    // Single-letter initials such as "J." in "J. Smith".
    if w.chars().count() == 1 && w.chars().all(char::is_alphabetic) {
        return true;
    }
    ABBREVIATIONS.contains(&w.as_str())
}

/// Trims whitespace off a byte range and converts it to a character span.
fn trimmed_span(doc: &Document, text: &str, start: usize, end: usize) -> Option<Span> {
    let piece = &text[start..end];
    let lead = piece.len() - piece.trim_start().len();
    let trail = piece.len() - piece.trim_end().len();
    let (s, e) = (start + lead, end - trail);
    (s < e).then(|| Span::new(doc.byte_to_char(s), doc.byte_to_char(e)))
}

/// Paragraph spans separated by one or more blank lines.
pub fn paragraph_spans(doc: &Document, within: Span) -> Vec<Span> {
    let text = doc.text();
    let base = byte_of(doc, within.start);
    let limit = byte_of(doc, within.end);
    let region = &text[base..limit];
    let mut out = Vec::new();
    let mut cursor = 0usize;
    for m in paragraph_re().find_iter(region) {
        if let Some(s) = trimmed_span(doc, text, base + cursor, base + m.start()) {
            out.push(s);
        }
        cursor = m.end();
    }
    if let Some(s) = trimmed_span(doc, text, base + cursor, base + region.len()) {
        out.push(s);
    }
    out
}

/// Sentence spans inside `within`, split on terminal punctuation.
pub fn sentence_spans(doc: &Document, within: Span) -> Vec<Span> {
    let text = doc.text();
    let base = byte_of(doc, within.start);
    let limit = byte_of(doc, within.end);
    let region = &text[base..limit];
    let mut out = Vec::new();
    let mut cursor = 0usize;
    for m in terminal_re().find_iter(region) {
        let after = &region[m.end()..];
        let next = after.chars().next();
        // A boundary needs whitespace (or the end) after the punctuation.
        match next {
            None => {}
            Some(c) if c.is_whitespace() => {}
            _ => continue,
        }
        let punct = m.as_str();
        if punct.starts_with('.') && punct.trim_end_matches(['"', '\'', '”', '’', ')', ']']) == "." {
            let word = word_before(region, m.start());
            if is_abbreviation(word) {
                continue;
            }
            // Lowercase continuation after a period is not a new sentence.
            let following = after.trim_start().chars().next();
            if following.is_some_and(|c| c.is_lowercase()) {
                continue;
            }
        }
        if let Some(s) = trimmed_span(doc, text, base + cursor, base + m.end()) {
            out.push(s);
        }
        cursor = m.end();
    }
    if let Some(s) = trimmed_span(doc, text, base + cursor, base + region.len()) {
        out.push(s);
    }
    out
}

/// Word and punctuation token spans inside `within`.
pub fn word_spans(doc: &Document, within: Span) -> Vec<Span> {
    let text = doc.text();
    let base = byte_of(doc, within.start);
    let limit = byte_of(doc, within.end);
    word_re()
        .find_iter(&text[base..limit])
        .map(|m| Span::new(doc.byte_to_char(base + m.start()), doc.byte_to_char(base + m.end())))
        .collect()
}

fn byte_of(doc: &Document, ch: usize) -> usize {
    doc.slice(Span::new(0, ch)).len()
}
