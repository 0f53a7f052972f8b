//! Units of attribution and the text perturbation that drops them.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open range of character (Unicode scalar) offsets into a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "[usize; 2]", from = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn shifted(&self, offset: usize) -> Span {
        Span::new(self.start + offset, self.end + offset)
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

impl From<[usize; 2]> for Span {
    fn from(v: [usize; 2]) -> Self {
        Span::new(v[0], v[1])
    }
}

/// Granularity of a unit, ordered from coarsest to finest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Paragraph,
    Sentence,
    Phrase,
    Word,
}

impl Level {
    pub fn as_str(&self) -> &'static str {
        match self {
            Level::Paragraph => "paragraph",
            Level::Sentence => "sentence",
            Level::Phrase => "phrase",
            Level::Word => "word",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "paragraph" => Ok(Level::Paragraph),
            "sentence" => Ok(Level::Sentence),
            "phrase" => Ok(Level::Phrase),
            "word" => Ok(Level::Word),
            other => Err(Error::Config(format!("unknown level {other:?}"))),
        }
    }
}

/// Text with a character-to-byte offset table, so spans can be sliced cheaply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    text: String,
    offsets: Vec<usize>,
}

impl Document {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let mut offsets: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        offsets.push(text.len());
        Document { text, offsets }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Length in characters.
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice(&self, span: Span) -> &str {
        let end = span.end.min(self.len());
        let start = span.start.min(end);
        &self.text[self.offsets[start]..self.offsets[end]]
    }

    pub fn byte_to_char(&self, byte: usize) -> usize {
        match self.offsets.binary_search(&byte) {
            Ok(i) => i,
            Err(i) => i,
        }
    }

    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.text.chars()
    }
}

/// One span of the input at a given granularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub id: usize,
    pub span: Span,
    pub level: Level,
    pub of_interest: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
    pub token_count: usize,
}

/// Binary vector over the of-interest units: `true` keeps, `false` drops.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PerturbationMask {
    bits: Vec<bool>,
}

impl PerturbationMask {
    pub fn ones(d: usize) -> Self {
        PerturbationMask {
            bits: vec![true; d],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        PerturbationMask { bits }
    }

    /// Mask of length `d` with exactly the given positions dropped.
    pub fn dropping(d: usize, dropped: impl IntoIterator<Item = usize>) -> Self {
        let mut bits = vec![true; d];
        for i in dropped {
            bits[i] = false;
        }
        PerturbationMask { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn kept(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn dropped_count(&self) -> usize {
        self.bits.iter().filter(|b| !**b).count()
    }

    pub fn dropped(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| !**b)
            .map(|(i, _)| i)
    }
}

/// The document together with the currently active (possibly mixed) units.
#[derive(Debug, Clone)]
pub struct UnitSet {
    document: Arc<Document>,
    units: Vec<Unit>,
    protected: Vec<Span>,
}

impl UnitSet {
    /// Builds a unit set, checking ordering, bounds and disjointness of the
    /// of-interest units. `protected` spans are never deleted by rendering.
    pub fn new(document: Arc<Document>, mut units: Vec<Unit>, protected: Vec<Span>) -> Result<Self> {
        units.sort_by_key(|u| (u.span.start, u.span.end));
        let len = document.len();
        for u in &units {
            if u.span.is_empty() || u.span.end > len {
                return Err(Error::contract(
                    "core",
                    format!("unit {} span {:?} outside document of length {len}", u.id, u.span),
                ));
            }
        }
        let mut last_end = 0usize;
        let mut first = true;
        for u in units.iter().filter(|u| u.of_interest) {
            if !first && u.span.start < last_end {
                return Err(Error::contract(
                    "core",
                    format!("of-interest unit {} overlaps its predecessor", u.id),
                ));
            }
            first = false;
            last_end = u.span.end;
        }
        Ok(UnitSet {
            document,
            units,
            protected,
        })
    }

    pub fn document(&self) -> &Arc<Document> {
        &self.document
    }

    pub fn text(&self) -> &str {
        self.document.text()
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn protected(&self) -> &[Span] {
        &self.protected
    }

    /// Units eligible for attribution, in span order.
    pub fn interest_units(&self) -> impl Iterator<Item = &Unit> {
        self.units.iter().filter(|u| u.of_interest)
    }

    /// Number of of-interest units (`d`).
    pub fn d(&self) -> usize {
        self.interest_units().count()
    }

    pub fn unit_text(&self, unit: &Unit) -> &str {
        self.document.slice(unit.span)
    }

    /// Same document and protected spans with a different unit list.
    pub fn with_units(&self, units: Vec<Unit>) -> Result<Self> {
        UnitSet::new(self.document.clone(), units, self.protected.clone())
    }

    pub fn render(&self, mask: &PerturbationMask) -> Result<String> {
        render_perturbation(self, mask)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mark {
    Free,
    Kept,
    Removed,
}

/// Drops every masked-out unit from the document.
///
/// Not-of-interest units and protected spans are never deleted. A removed run
/// absorbs the unowned whitespace around it; if whitespace separated the run
/// from surviving text on both sides, a single space is put back.
pub fn render_perturbation(unit_set: &UnitSet, mask: &PerturbationMask) -> Result<String> {
    let d = unit_set.d();
    if mask.len() != d {
        return Err(Error::contract(
            "core",
            format!("mask length {} does not match {d} of-interest units", mask.len()),
        ));
    }
    if mask.dropped_count() == 0 {
        return Ok(unit_set.text().to_string());
    }

    let doc = unit_set.document();
    let chars: Vec<char> = doc.chars().collect();
    let n = chars.len();
    let mut marks = vec![Mark::Free; n];

    let mut interest_idx = 0usize;
    for unit in unit_set.units() {
        let keep = if unit.of_interest {
            let k = mask.kept(interest_idx);
            interest_idx += 1;
            k
        } else {
            true
        };
        let m = if keep { Mark::Kept } else { Mark::Removed };
        for slot in &mut marks[unit.span.start..unit.span.end.min(n)] {
            // Kept wins where a dropped unit overlaps a retained one.
            if *slot != Mark::Kept {
                *slot = m;
            }
        }
    }
    for span in unit_set.protected() {
        for slot in &mut marks[span.start.min(n)..span.end.min(n)] {
            *slot = Mark::Kept;
        }
    }
    for u in unit_set.units().iter().filter(|u| !u.of_interest) {
        for slot in &mut marks[u.span.start..u.span.end.min(n)] {
            *slot = Mark::Kept;
        }
    }

    let free_ws = |i: usize| marks[i] == Mark::Free && chars[i].is_whitespace();

    let mut out = String::with_capacity(doc.text().len());
    let mut i = 0usize;
    while i < n {
        if marks[i] != Mark::Removed && !(free_ws(i) && run_follows(&marks, &chars, i)) {
            out.push(chars[i]);
            i += 1;
            continue;
        }
        // Start of an extended removal run: leading whitespace, then removed
        // chars, possibly chained through whitespace into further removed chars.
        let start = i;
        let mut left_gap = false;
        while i < n && free_ws(i) {
            left_gap = true;
            i += 1;
        }
        let mut right_gap;
        loop {
            while i < n && marks[i] == Mark::Removed {
                i += 1;
            }
            let ws_start = i;
            while i < n && free_ws(i) {
                i += 1;
            }
            right_gap = i > ws_start;
            if i < n && marks[i] == Mark::Removed {
                continue;
            }
            break;
        }
        let has_left = start > 0;
        let has_right = i < n;
        if has_left && has_right && left_gap && right_gap {
            out.push(' ');
        }
    }
    Ok(out)
}

/// True when the whitespace run starting at `i` leads directly into removed text.
fn run_follows(marks: &[Mark], chars: &[char], mut i: usize) -> bool {
    while i < marks.len() && marks[i] == Mark::Free && chars[i].is_whitespace() {
        i += 1;
    }
    i < marks.len() && marks[i] == Mark::Removed
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(id: usize, start: usize, end: usize, of_interest: bool) -> Unit {
        Unit {
            id,
            span: Span::new(start, end),
            level: Level::Sentence,
            of_interest,
            parent: None,
            token_count: 1,
        }
    }

    fn abc() -> UnitSet {
        let doc = Arc::new(Document::new("A. B. C."));
        UnitSet::new(
            doc,
            vec![unit(0, 0, 2, true), unit(1, 3, 5, true), unit(2, 6, 8, true)],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn identity_mask_is_verbatim() {
        let us = abc();
        assert_eq!(us.render(&PerturbationMask::ones(3)).unwrap(), "A. B. C.");
    }

    #[test]
    fn dropping_middle_sentence() {
        let us = abc();
        let m = PerturbationMask::from_bits(vec![true, false, true]);
        assert_eq!(us.render(&m).unwrap(), "A. C.");
    }

    #[test]
    fn dropping_edges_and_runs() {
        let us = abc();
        let first = PerturbationMask::dropping(3, [0]);
        assert_eq!(us.render(&first).unwrap(), "B. C.");
        let last = PerturbationMask::dropping(3, [2]);
        assert_eq!(us.render(&last).unwrap(), "A. B.");
        let tail = PerturbationMask::dropping(3, [1, 2]);
        assert_eq!(us.render(&tail).unwrap(), "A.");
        let all = PerturbationMask::dropping(3, [0, 1, 2]);
        assert_eq!(us.render(&all).unwrap(), "");
    }

    #[test]
    fn prompt_prefix_survives_total_drop() {
        let text = "Context: One here. Two there.";
        let doc = Arc::new(Document::new(text));
        let us = UnitSet::new(
            doc,
            vec![
                unit(0, 0, 9, false),
                unit(1, 9, 18, true),
                unit(2, 19, 29, true),
            ],
            vec![],
        )
        .unwrap();
        let out = us.render(&PerturbationMask::dropping(2, [0, 1])).unwrap();
        // String-diff oracle: the output must be exactly the retained prefix.
        assert_eq!(out, &text[..9]);
        assert_eq!(out, "Context: ");
    }

    #[test]
    fn word_before_punctuation_drops_cleanly() {
        let text = "Blue cars win.";
        let doc = Arc::new(Document::new(text));
        let w = |id, s, e, oi| Unit {
            level: Level::Word,
            ..unit(id, s, e, oi)
        };
        let us = UnitSet::new(
            doc,
            vec![w(0, 0, 4, true), w(1, 5, 9, true), w(2, 10, 13, true), w(3, 13, 14, false)],
            vec![],
        )
        .unwrap();
        assert_eq!(us.render(&PerturbationMask::dropping(3, [2])).unwrap(), "Blue cars.");
        assert_eq!(us.render(&PerturbationMask::dropping(3, [1])).unwrap(), "Blue win.");
        assert_eq!(us.render(&PerturbationMask::dropping(3, [0])).unwrap(), "cars win.");
    }

    #[test]
    fn protected_span_is_kept_inside_dropped_unit() {
        let doc = Arc::new(Document::new("keep KEEP drop"));
        let us = UnitSet::new(doc, vec![unit(0, 0, 14, true)], vec![Span::new(5, 9)]).unwrap();
        assert_eq!(us.render(&PerturbationMask::dropping(1, [0])).unwrap(), "KEEP");
    }

    #[test]
    fn multibyte_text() {
        let doc = Arc::new(Document::new("Über alles. Ça va."));
        let us = UnitSet::new(doc, vec![unit(0, 0, 11, true), unit(1, 12, 18, true)], vec![]).unwrap();
        assert_eq!(us.unit_text(&us.units()[1]), "Ça va.");
        assert_eq!(us.render(&PerturbationMask::dropping(2, [0])).unwrap(), "Ça va.");
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        let us = abc();
        let err = us.render(&PerturbationMask::ones(2)).unwrap_err();
        assert!(matches!(err, Error::Contract { .. }));
    }

    #[test]
    fn overlapping_interest_units_rejected() {
        let doc = Arc::new(Document::new("abcdef"));
        let err = UnitSet::new(doc, vec![unit(0, 0, 4, true), unit(1, 2, 6, true)], vec![]).unwrap_err();
        assert!(matches!(err, Error::Contract { .. }));
    }

    #[test]
    fn span_serializes_as_pair() {
        assert_eq!(serde_json::to_string(&Span::new(3, 7)).unwrap(), "[3,7]");
        let s: Span = serde_json::from_str("[1,2]").unwrap();
        assert_eq!(s, Span::new(1, 2));
    }
}
