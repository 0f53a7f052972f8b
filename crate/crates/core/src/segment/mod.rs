//! Multi-level linguistic segmentation: paragraphs, sentences, phrases, words.
//!
//! Sentence, word and phrase units come from a dependency parse file when one
//! is supplied. Without a parse, a rule-based splitter provides sentences and
//! words; phrases are then unavailable.

pub mod fallback;
mod parse;
mod phrase;

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use parse::{ParseDocument, ParseToken};

use crate::error::{Error, Result};
use crate::tokenize::Tokenizer;
use crate::unit::{Document, Level, Span, Unit, UnitSet};

/// Phrase segmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseConfig {
    /// Maximum phrase length in tokens that are neither punctuation nor space.
    pub max_phrase_len: usize,
}

impl Default for PhraseConfig {
    fn default() -> Self {
        PhraseConfig { max_phrase_len: 10 }
    }
}

/// Rules deciding which units are excluded from attribution.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InterestRules {
    pub exclude_non_alphanumeric: bool,
    /// Template elements, system prompts, question spans, user overrides.
    pub excluded_spans: Vec<Span>,
}

fn new_unit(id: usize, span: Span, level: Level, parent: Option<usize>, doc: &Document) -> Unit {
    Unit {
        id,
        span,
        level,
        of_interest: true,
        parent,
        token_count: doc.slice(span).split_whitespace().count(),
    }
}

/// Splits text on blank-line boundaries; a text without one is a single paragraph.
pub fn segment_paragraphs(text: &str) -> Vec<Unit> {
    let doc = Document::new(text);
    fallback::paragraph_spans(&doc, Span::new(0, doc.len()))
        .into_iter()
        .enumerate()
        .map(|(i, s)| new_unit(i, s, Level::Paragraph, None, &doc))
        .collect()
}

/// Span of a token range with leading and trailing space tokens trimmed.
fn token_range_span(parse: &ParseDocument, range: Range<usize>) -> Option<Span> {
    let is_space = |t: &usize| parse.tokens[*t].text.trim().is_empty();
    let first = range.clone().find(|t| !is_space(t))?;
    let last = range.rev().find(|t| !is_space(t))?;
    Some(Span::new(parse.tokens[first].span.start, parse.tokens[last].span.end))
}

/// One sentence unit per maximal token run that begins at a sentence start.
pub fn segment_sentences(parse: &ParseDocument, text: &Document) -> Result<Vec<Unit>> {
    parse.validate(text)?;
    Ok(parse
        .sentence_ranges()
        .into_iter()
        .filter_map(|r| token_range_span(parse, r))
        .enumerate()
        .map(|(i, s)| new_unit(i, s, Level::Sentence, None, text))
        .collect())
}

/// Rule-based sentence split used when no parse is available.
pub fn segment_sentences_fallback(text: &Document, within: Span) -> Vec<Unit> {
    fallback::sentence_spans(text, within)
        .into_iter()
        .enumerate()
        .map(|(i, s)| new_unit(i, s, Level::Sentence, None, text))
        .collect()
}

fn tokens_within(parse: &ParseDocument, span: Span) -> Range<usize> {
    let start = parse
        .tokens
        .iter()
        .position(|t| t.span.start >= span.start)
        .unwrap_or(parse.tokens.len());
    let end = parse.tokens[start..]
        .iter()
        .position(|t| t.span.end > span.end)
        .map_or(parse.tokens.len(), |p| start + p);
    start..end
}

/// One unit per parse token of the sentence; punctuation and space tokens are
/// not of interest, pure whitespace tokens are skipped.
pub fn segment_words(parse: &ParseDocument, text: &Document, sentence: &Unit) -> Vec<Unit> {
    tokens_within(parse, sentence.span)
        .filter(|&t| !parse.tokens[t].text.trim().is_empty() && !parse.tokens[t].span.is_empty())
        .enumerate()
        .map(|(i, t)| {
            let tok = &parse.tokens[t];
            let mut u = new_unit(i, tok.span, Level::Word, Some(sentence.id), text);
            u.of_interest = !tok.is_punct_or_space;
            u
        })
        .collect()
}

/// Word units from the rule-based tokenizer; non-alphanumeric tokens are not of interest.
pub fn segment_words_fallback(text: &Document, sentence: &Unit) -> Vec<Unit> {
    fallback::word_spans(text, sentence.span)
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut u = new_unit(i, s, Level::Word, Some(sentence.id), text);
            u.of_interest = text.slice(s).chars().any(char::is_alphanumeric);
            u
        })
        .collect()
}

/// Phrase units of one sentence from its dependency tree.
pub fn segment_phrases(
    parse: &ParseDocument,
    text: &Document,
    sentence: &Unit,
    cfg: &PhraseConfig,
) -> Result<Vec<Unit>> {
    if cfg.max_phrase_len == 0 {
        return Err(Error::Config("max_phrase_len must be at least 1".into()));
    }
    let range = tokens_within(parse, sentence.span);
    for t in range.clone() {
        let mut cur = t;
        let mut steps = 0;
        while parse.tokens[cur].head != cur && range.contains(&parse.tokens[cur].head) {
            cur = parse.tokens[cur].head;
            steps += 1;
            if steps > range.len() {
                return Err(Error::input("segmenter", format!("cyclic head relation through token {t}")));
            }
        }
    }
    if range.is_empty() {
        return Ok(Vec::new());
    }
    let phrases = phrase::PhraseSegmenter::new(parse, range, cfg.max_phrase_len).segment();
    Ok(phrases
        .into_iter()
        .filter_map(|r| {
            let all_punct = r.clone().all(|t| parse.tokens[t].is_punct_or_space);
            token_range_span(parse, r).map(|s| (s, all_punct))
        })
        .enumerate()
        .map(|(i, (s, all_punct))| {
            let mut u = new_unit(i, s, Level::Phrase, Some(sentence.id), text);
            u.of_interest = !all_punct;
            u
        })
        .collect())
}

/// Applies the exclusion rules: units without alphanumeric characters and
/// units lying fully inside an excluded span are not of interest.
pub fn mark_interest(text: &Document, mut units: Vec<Unit>, rules: &InterestRules) -> Vec<Unit> {
    for u in &mut units {
        if rules.exclude_non_alphanumeric && !text.slice(u.span).chars().any(char::is_alphanumeric) {
            u.of_interest = false;
        }
        if rules.excluded_spans.iter().any(|s| s.contains(&u.span)) {
            u.of_interest = false;
        }
    }
    units
}

/// Document input file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DocumentInput {
    pub text: String,
    #[serde(default)]
    pub not_of_interest_spans: Vec<Span>,
    /// Template with a `{context}` placeholder, e.g. `"Context: {context}\nSummary:"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_template: Option<String>,
    /// QA mode: the question's span in `text`, excluded from attribution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_span: Option<Span>,
}

impl DocumentInput {
    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::input("segmenter", format!("document file: {e}")))
    }

    pub fn plain(text: impl Into<String>) -> Self {
        DocumentInput {
            text: text.into(),
            ..Default::default()
        }
    }

    /// Full model input and the character offset of `text` inside it.
    pub fn model_input(&self) -> Result<(String, usize, usize)> {
        match &self.prompt_template {
            None => Ok((self.text.clone(), 0, 0)),
            Some(t) => {
                let pos = t.find("{context}").ok_or_else(|| {
                    Error::Config("prompt_template lacks a {context} placeholder".into())
                })?;
                let prefix = &t[..pos];
                let suffix = &t[pos + "{context}".len()..];
                let full = format!("{prefix}{}{suffix}", self.text);
                let offset = prefix.chars().count();
                Ok((full, offset, suffix.chars().count()))
            }
        }
    }
}

/// Every unit of a document at every available level, with parent links.
#[derive(Debug, Clone)]
pub struct UnitTree {
    document: Arc<Document>,
    units: Vec<Unit>,
    protected: Vec<Span>,
    by_level: BTreeMap<Level, Vec<usize>>,
    template: Vec<usize>,
}

impl UnitTree {
    pub fn build(
        input: &DocumentInput,
        parse: Option<&ParseDocument>,
        phrase_cfg: &PhraseConfig,
        tokenizer: &dyn Tokenizer,
    ) -> Result<Self> {
        let (full, offset, suffix_len) = input.model_input()?;
        let context = Document::new(input.text.as_str());
        let doc = Arc::new(Document::new(full));
        let ctx_span = Span::new(offset, offset + context.len());

        let mut protected: Vec<Span> = input
            .not_of_interest_spans
            .iter()
            .chain(input.question_span.iter())
            .map(|s| s.shifted(offset))
            .collect();
        for s in &protected {
            if s.end > doc.len() || s.start > s.end {
                return Err(Error::input("segmenter", format!("span {s:?} outside the document text")));
            }
        }
        protected.sort();
        let rules = InterestRules {
            exclude_non_alphanumeric: true,
            excluded_spans: protected.clone(),
        };

        let parse = match parse {
            Some(p) => {
                p.validate(&context)?;
                let mut shifted = p.clone();
                for t in &mut shifted.tokens {
                    t.span = t.span.shifted(offset);
                }
                Some(shifted)
            }
            None => None,
        };

        let mut tree = UnitTree {
            document: doc.clone(),
            units: Vec::new(),
            protected,
            by_level: BTreeMap::new(),
            template: Vec::new(),
        };

        for span in [Span::new(0, offset), Span::new(doc.len() - suffix_len, doc.len())] {
            if !span.is_empty() {
                let id = tree.push(Unit {
                    id: 0,
                    span,
                    level: Level::Paragraph,
                    of_interest: false,
                    parent: None,
                    token_count: 0,
                });
                tree.template.push(id);
            }
        }

        let paragraphs = fallback::paragraph_spans(&doc, ctx_span);
        let mut para_ids = Vec::new();
        for span in &paragraphs {
            para_ids.push(tree.push(new_unit(0, *span, Level::Paragraph, None, &doc)));
        }

        let mut sentences: Vec<(usize, Option<Range<usize>>)> = Vec::new();
        for (&pid, pspan) in para_ids.iter().zip(&paragraphs) {
            match &parse {
                Some(p) => {
                    let pr = tokens_within(p, *pspan);
                    for run in p.sentence_ranges() {
                        let r = run.start.max(pr.start)..run.end.min(pr.end);
                        if r.is_empty() {
                            continue;
                        }
                        if let Some(s) = token_range_span(p, r.clone()) {
                            let id = tree.push(new_unit(0, s, Level::Sentence, Some(pid), &doc));
                            sentences.push((id, Some(r)));
                        }
                    }
                }
                None => {
                    for s in fallback::sentence_spans(&doc, *pspan) {
                        let id = tree.push(new_unit(0, s, Level::Sentence, Some(pid), &doc));
                        sentences.push((id, None));
                    }
                }
            }
        }

        for (sid, _) in &sentences {
            let sentence = tree.units[*sid].clone();
            let words = match &parse {
                Some(p) => segment_words(p, &doc, &sentence),
                None => segment_words_fallback(&doc, &sentence),
            };
            for w in words {
                tree.push(w);
            }
            if let Some(p) = &parse {
                for ph in segment_phrases(p, &doc, &sentence, phrase_cfg)? {
                    tree.push(ph);
                }
            }
        }

        let marked = mark_interest(&doc, std::mem::take(&mut tree.units), &rules);
        tree.units = marked;
        for id in tree.template.clone() {
            tree.units[id].of_interest = false;
        }
        for u in &mut tree.units {
            u.token_count = tokenizer.count(doc.slice(u.span));
        }
        Ok(tree)
    }

    fn push(&mut self, mut unit: Unit) -> usize {
        let id = self.units.len();
        unit.id = id;
        self.by_level.entry(unit.level).or_default().push(id);
        self.units.push(unit);
        id
    }

    pub fn document(&self) -> &Arc<Document> {
        &self.document
    }

    pub fn unit(&self, id: usize) -> Option<&Unit> {
        self.units.get(id)
    }

    pub fn all_units(&self) -> &[Unit] {
        &self.units
    }

    pub fn has_level(&self, level: Level) -> bool {
        self.by_level
            .get(&level)
            .is_some_and(|ids| ids.iter().any(|id| !self.template.contains(id)))
    }

    fn level_ids(&self, level: Level) -> impl Iterator<Item = usize> + '_ {
        self.by_level
            .get(&level)
            .into_iter()
            .flatten()
            .copied()
            .filter(|id| !self.template.contains(id))
    }

    fn check_level(&self, level: Level) -> Result<()> {
        if self.has_level(level) || self.units.iter().all(|u| self.template.contains(&u.id)) {
            return Ok(());
        }
        if level == Level::Phrase {
            return Err(Error::input(
                "segmenter",
                "phrase level requested but no parse file was given; the fallback segmenter only \
                 provides paragraphs, sentences and words",
            ));
        }
        Err(Error::input("segmenter", format!("no units available at the {level} level")))
    }

    /// Template units plus every unit at `level`.
    pub fn unit_set(&self, level: Level) -> Result<UnitSet> {
        self.check_level(level)?;
        let mut units: Vec<Unit> = self.template.iter().map(|&id| self.units[id].clone()).collect();
        units.extend(self.level_ids(level).map(|id| self.units[id].clone()));
        UnitSet::new(self.document.clone(), units, self.protected.clone())
    }

    /// Units at a finer `level` lying inside unit `id`.
    pub fn children(&self, id: usize, level: Level) -> Result<Vec<Unit>> {
        let parent = self
            .unit(id)
            .ok_or_else(|| Error::contract("segmenter", format!("unknown unit id {id}")))?;
        if level <= parent.level {
            return Err(Error::contract(
                "segmenter",
                format!("{level} is not finer than {}", parent.level),
            ));
        }
        self.check_level(level)?;
        Ok(self
            .level_ids(level)
            .map(|cid| &self.units[cid])
            .filter(|c| parent.span.contains(&c.span))
            .cloned()
            .collect())
    }
}
