//! Dependency-tree phrase segmentation.
//!
//! Pass one walks the tree from the root. Every child subtree (split into
//! contiguous pieces) that fits in `max_phrase_len` content tokens becomes a
//! phrase; longer pieces are segmented recursively, and the root token of
//! every (sub)tree is a phrase of its own. Pass two re-merges fragments:
//! noun chunks first, then qualifying single-token phrases, left to right.

use std::collections::BTreeSet;
use std::ops::Range;

use super::parse::ParseDocument;

pub(crate) struct PhraseSegmenter<'a> {
    parse: &'a ParseDocument,
    sentence: Range<usize>,
    children: Vec<Vec<usize>>,
    max_len: usize,
}

impl<'a> PhraseSegmenter<'a> {
    pub(crate) fn new(parse: &'a ParseDocument, sentence: Range<usize>, max_len: usize) -> Self {
        let mut children = vec![Vec::new(); parse.tokens.len()];
        for t in sentence.clone() {
            let h = parse.tokens[t].head;
            if h != t && sentence.contains(&h) {
                children[h].push(t);
            }
        }
        PhraseSegmenter {
            parse,
            sentence,
            children,
            max_len,
        }
    }

    fn head(&self, t: usize) -> usize {
        self.parse.tokens[t].head
    }

    fn is_punct(&self, t: usize) -> bool {
        self.parse.tokens[t].is_punct_or_space
    }

    /// Content length: tokens that are neither punctuation nor whitespace.
    fn content_len(&self, r: &Range<usize>) -> usize {
        r.clone().filter(|&t| !self.is_punct(t)).count()
    }

    fn punct_only(&self, r: &Range<usize>) -> bool {
        r.clone().all(|t| self.is_punct(t))
    }

    /// Phrases as contiguous token ranges in sentence order.
    pub(crate) fn segment(&self) -> Vec<Range<usize>> {
        let all: Vec<usize> = self.sentence.clone().collect();
        let mut phrases = Vec::new();
        self.segment_span(&all, &mut phrases);
        let mut phrases: Vec<Range<usize>> = phrases;
        phrases.sort_by_key(|r| r.start);
        self.merge_noun_chunks(&mut phrases);
        self.merge_singletons(&mut phrases);
        phrases
    }

    fn segment_span(&self, span: &[usize], out: &mut Vec<Range<usize>>) {
        let members: BTreeSet<usize> = span.iter().copied().collect();
        let roots = span
            .iter()
            .copied()
            .filter(|&t| self.head(t) == t || !members.contains(&self.head(t)));
        for root in roots.collect::<Vec<_>>() {
            out.push(root..root + 1);
            for &child in self.children[root].iter().filter(|c| members.contains(c)) {
                let subtree = self.restricted_subtree(child, &members);
                for piece in contiguous_runs(&subtree) {
                    let range = piece[0]..piece[piece.len() - 1] + 1;
                    if self.content_len(&range) <= self.max_len {
                        out.push(range);
                    } else {
                        self.segment_span(&piece, out);
                    }
                }
            }
        }
    }

    /// Descendants of `node` reachable without leaving `members`.
    fn restricted_subtree(&self, node: usize, members: &BTreeSet<usize>) -> Vec<usize> {
        let mut out = vec![node];
        let mut stack = vec![node];
        while let Some(t) = stack.pop() {
            for &c in &self.children[t] {
                if members.contains(&c) {
                    out.push(c);
                    stack.push(c);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Tokens of `r` whose head lies outside `r`.
    fn tops(&self, r: &Range<usize>) -> impl Iterator<Item = usize> + '_ {
        let r = r.clone();
        r.clone().filter(move |&t| {
            let h = self.head(t);
            h != t && !r.contains(&h)
        })
    }

    fn phrase_of(phrases: &[Range<usize>], token: usize) -> Option<usize> {
        phrases.iter().position(|r| r.contains(&token))
    }

    /// Indices of the phrases containing the heads of `phrases[i]`.
    fn parents(&self, phrases: &[Range<usize>], i: usize) -> BTreeSet<usize> {
        self.tops(&phrases[i])
            .filter_map(|t| Self::phrase_of(phrases, self.head(t)))
            .collect()
    }

    fn is_leaf(&self, phrases: &[Range<usize>], i: usize) -> bool {
        !(0..phrases.len()).any(|j| j != i && self.parents(phrases, j).contains(&i))
    }

    fn merge_noun_chunks(&self, phrases: &mut Vec<Range<usize>>) {
        for chunk in &self.parse.noun_chunks {
            let chunk = chunk[0]..chunk[1];
            if chunk.start < self.sentence.start || chunk.end > self.sentence.end || chunk.is_empty() {
                continue;
            }
            let first = phrases.iter().position(|r| r.start == chunk.start);
            let last = phrases.iter().position(|r| r.end == chunk.end);
            let (Some(first), Some(last)) = (first, last) else {
                continue;
            };
            if last <= first {
                continue;
            }
            // The chunk root: the single token whose head leaves the chunk.
            let roots: Vec<usize> = chunk
                .clone()
                .filter(|&t| self.head(t) == t || !chunk.contains(&self.head(t)))
                .collect();
            if roots.len() != 1 {
                continue;
            }
            let noun = roots[0];
            let Some(root_phrase) = Self::phrase_of(phrases, noun) else {
                continue;
            };
            if phrases[root_phrase].len() != 1 {
                continue;
            }
            let others_are_children = (first..=last)
                .filter(|&j| j != root_phrase)
                .all(|j| {
                    let p = self.parents(phrases, j);
                    p.len() == 1 && p.contains(&root_phrase)
                });
            let merged = chunk.clone();
            if !others_are_children || self.content_len(&merged) > self.max_len {
                continue;
            }
            phrases.splice(first..=last, [merged]);
        }
    }

    fn is_singleton(&self, r: &Range<usize>) -> bool {
        r.len() == 1 && !self.is_punct(r.start)
    }

    fn is_cconj(&self, t: usize) -> bool {
        let tok = &self.parse.tokens[t];
        tok.pos == "CCONJ" || tok.dep_label == "cc"
    }

    fn is_preposition(&self, t: usize) -> bool {
        let tok = &self.parse.tokens[t];
        tok.pos == "ADP" || tok.dep_label == "prep"
    }

    /// Whether `r` holds a conjunct coordinated by the conjunction token `cc`.
    fn holds_conjunct_of(&self, r: &Range<usize>, cc: usize) -> bool {
        let anchor = self.head(cc);
        r.clone().any(|t| {
            self.parse.tokens[t].dep_label == "conj" && (self.head(t) == anchor || t == anchor)
        })
    }

    fn merge_singletons(&self, phrases: &mut Vec<Range<usize>>) {
        let mut i = 0;
        while i < phrases.len() {
            let single = phrases[i].clone();
            if !self.is_singleton(&single) {
                i += 1;
                continue;
            }
            let s = single.start;
            let cconj = self.is_cconj(s);
            if !(cconj || !self.is_leaf(phrases, i)) {
                i += 1;
                continue;
            }
            let right = (i + 1..phrases.len()).find(|&j| !self.punct_only(&phrases[j]));
            let left = (0..i).rev().find(|&j| !self.punct_only(&phrases[j]));
            // Right neighbour is tried first.
            let target = [right, left].into_iter().flatten().find(|&j| {
                let nb = &phrases[j];
                let (lo, hi) = (i.min(j), i.max(j));
                let merged = phrases[lo].start..phrases[hi].end;
                if self.content_len(&merged) > self.max_len {
                    return false;
                }
                if cconj {
                    self.holds_conjunct_of(nb, s)
                } else if self.is_preposition(s) {
                    self.parents(phrases, j).contains(&i)
                } else {
                    let touching = hi - lo == 1;
                    let nb_single = self.is_singleton(nb);
                    let nb_cconj = nb_single && self.is_cconj(nb.start);
                    self.is_leaf(phrases, j) && !nb_cconj && (touching || nb_single)
                }
            });
            match target {
                Some(j) => {
                    let (lo, hi) = (i.min(j), i.max(j));
                    let merged = phrases[lo].start..phrases[hi].end;
                    phrases.splice(lo..=hi, [merged]);
                    i = lo + 1;
                }
                None => i += 1,
            }
        }
    }
}

fn contiguous_runs(sorted: &[usize]) -> Vec<Vec<usize>> {
    let mut runs: Vec<Vec<usize>> = Vec::new();
    for &t in sorted {
        match runs.last_mut() {
            Some(run) if *run.last().unwrap() + 1 == t => run.push(t),
            _ => runs.push(vec![t]),
        }
    }
    runs
}
