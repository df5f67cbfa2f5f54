//! Sentence segmentation, proper-name masking, seeded passage draws and
//! (query, positive, negative) triplet construction.
//!
//! Segmentation rule: a sentence ends after a run of terminators
//! (`.`, `!`, `?`, `…`), optionally followed by closing quotes or brackets,
//! when the next non-space character is an uppercase letter, a digit or an
//! opening quote/dash. A single `.` after a known abbreviation (`M.`, `Mme.`,
//! `Dr.` ...) or after a lone capital initial is not a boundary. Text with
//! no boundary is one sentence.

use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{Corpus, Document, Sentence};
use crate::error::{Error, Result};
use crate::rng::{self, SeededRng};

pub const NAME_TOKEN: &str = "[PROPN]";
pub const DEFAULT_PASSAGE_LEN: usize = 10;
pub const DEFAULT_DRAWS: usize = 100;

const ABBREVIATIONS: &[&str] = &[
    "M", "MM", "Mme", "Mmes", "Mlle", "Mlles", "Mgr", "Me", "Dr", "Pr", "St", "Ste", "Cie", "cf", "vol", "chap", "av",
    "env",
];

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '…')
}

fn is_closer(c: char) -> bool {
    matches!(c, '»' | '”' | '"' | '\'' | ')' | ']')
}

fn opens_sentence(c: char) -> bool {
    c.is_uppercase() || c.is_ascii_digit() || matches!(c, '«' | '“' | '"' | '—' | '–' | '-' | '(' | '[' | '\'')
}

fn is_abbreviation(chars: &[char], dot: usize) -> bool {
    let mut s = dot;
    while s > 0 && chars[s - 1].is_alphabetic() {
        s -= 1;
    }
    if s == dot {
        return false;
    }
    let word: String = chars[s..dot].iter().collect();
    let initial = word.chars().count() == 1 && word.chars().all(char::is_uppercase);
    initial || ABBREVIATIONS.contains(&word.as_str())
}

/// Character-offset ranges of the sentences of `text`.
pub fn sentence_bounds(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < n {
        if !is_terminator(chars[i]) {
            i += 1;
            continue;
        }
        let first = i;
        let mut j = i;
        while j < n && is_terminator(chars[j]) {
            j += 1;
        }
        loop {
            if j < n && is_closer(chars[j]) {
                j += 1;
                continue;
            }
            // French spacing puts a space before a closing guillemet.
            let mut m = j;
            while m < n && chars[m] == ' ' || m < n && chars[m] == '\u{a0}' {
                m += 1;
            }
            if m > j && m < n && matches!(chars[m], '»' | '”') {
                j = m + 1;
                continue;
            }
            break;
        }
        let mut k = j;
        while k < n && chars[k].is_whitespace() {
            k += 1;
        }
        let single_dot = j - first == 1 && chars[first] == '.';
        let boundary = k > j && k < n && opens_sentence(chars[k]) && !(single_dot && is_abbreviation(&chars, first));
        if boundary {
            push_trimmed(&chars, start, j, &mut out);
            start = k;
            i = k;
        } else {
            i = j.max(i + 1);
        }
    }
    push_trimmed(&chars, start, n, &mut out);
    out
}

fn push_trimmed(chars: &[char], mut s: usize, mut e: usize, out: &mut Vec<(usize, usize)>) {
    while s < e && chars[s].is_whitespace() {
        s += 1;
    }
    while e > s && chars[e - 1].is_whitespace() {
        e -= 1;
    }
    if e > s {
        out.push((s, e));
    }
}

/// Fills `sentences` from `raw_text`.
pub fn segment(doc: &Document) -> Result<Document> {
    let chars: Vec<char> = doc.raw_text.chars().collect();
    let sentences: Vec<Sentence> = sentence_bounds(&doc.raw_text)
        .into_iter()
        .map(|(start, end)| Sentence {
            start,
            end,
            text: chars[start..end].iter().collect(),
        })
        .collect();
    if sentences.is_empty() {
        return Err(Error::NoSentences(doc.doc_id.clone()));
    }
    let mut out = doc.clone();
    out.sentences = sentences;
    Ok(out)
}

/// Replaces every name span inside each sentence with [`NAME_TOKEN`].
///
/// Masked text is rebuilt from `raw_text`, so masking twice gives the same
/// result. Spans crossing a sentence boundary are clipped per sentence.
pub fn mask_names(doc: &Document) -> Result<Document> {
    if doc.sentences.is_empty() {
        return Err(Error::NoSentences(doc.doc_id.clone()));
    }
    let chars: Vec<char> = doc.raw_text.chars().collect();
    let mut out = doc.clone();
    for s in &mut out.sentences {
        let mut text = String::with_capacity(s.end - s.start);
        let mut pos = s.start;
        for &(a, b) in doc.name_spans.iter().filter(|&&(a, b)| a < s.end && b > s.start) {
            if a < s.start || b > s.end {
                warn!(
                    "{}: name span ({a}, {b}) crosses a sentence boundary; clipped",
                    doc.doc_id
                );
            }
            let (a, b) = (a.max(s.start), b.min(s.end));
            text.extend(&chars[pos..a]);
            text.push_str(NAME_TOKEN);
            pos = b;
        }
        text.extend(&chars[pos..s.end]);
        s.text = text;
    }
    Ok(out)
}

/// Segmentation followed by masking.
pub fn prepare(doc: &Document) -> Result<Document> {
    mask_names(&segment(doc)?)
}

/// Prepares every document of the corpus in parallel.
pub fn prepare_corpus(corpus: &Corpus) -> Result<Corpus> {
    let docs: Vec<&Document> = corpus.documents().collect();
    let prepared: Result<Vec<Document>> = docs.par_iter().map(|d| prepare(d)).collect();
    Corpus::from_documents(prepared?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Passage {
    pub doc_id: String,
    pub start_sentence: usize,
    pub sentences: Vec<String>,
    pub text: String,
}

impl Passage {
    fn from_doc(doc: &Document, start: usize, len: usize) -> Self {
        let sentences: Vec<String> = doc.sentences[start..start + len]
            .iter()
            .map(|s| s.text.clone())
            .collect();
        Passage {
            doc_id: doc.doc_id.clone(),
            start_sentence: start,
            text: sentences.join(" "),
            sentences,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassageSet {
    pub doc_id: String,
    pub seed: u64,
    pub passages: Vec<Passage>,
    pub draw_count: usize,
}

fn check_len(doc: &Document, needed: usize) -> Result<()> {
    if doc.sentences.len() < needed {
        return Err(Error::DocumentTooShort {
            doc_id: doc.doc_id.clone(),
            sentences: doc.sentences.len(),
            needed,
        });
    }
    Ok(())
}

/// Draws `n` passages of `len` consecutive sentences, with replacement,
/// start indices uniform over `0..=sentences - len`.
pub fn draw_passages(doc: &Document, n: usize, len: usize, seed: u64) -> Result<PassageSet> {
    if n == 0 || len == 0 {
        return Err(Error::InvalidArgument(
            "draw count and passage length must be positive".into(),
        ));
    }
    check_len(doc, len)?;
    let mut rng = rng::rng(seed);
    let starts = doc.sentences.len() - len + 1;
    let passages = (0..n)
        .map(|_| Passage::from_doc(doc, rng::index(&mut rng, starts), len))
        .collect();
    Ok(PassageSet {
        doc_id: doc.doc_id.clone(),
        seed,
        passages,
        draw_count: n,
    })
}

/// Draws passages for every document, each with `doc_seed(seed, doc_id)`.
/// Documents shorter than `len` sentences are reported, not drawn.
pub fn draw_corpus(corpus: &Corpus, n: usize, len: usize, seed: u64) -> (Vec<PassageSet>, Vec<Error>) {
    let docs: Vec<&Document> = corpus.documents().collect();
    let results: Vec<Result<PassageSet>> = docs
        .par_iter()
        .map(|d| draw_passages(d, n, len, rng::doc_seed(seed, &d.doc_id)))
        .collect();
    let mut sets = Vec::new();
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(s) => sets.push(s),
            Err(e) => errors.push(e),
        }
    }
    (sets, errors)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triplet {
    pub query: Passage,
    pub positive: Passage,
    pub negative: Passage,
}

/// Endless-until-`count` stream of training triplets.
pub struct TripletStream<'a> {
    query_docs: Vec<&'a Document>,
    negative_docs: Vec<&'a Document>,
    len: usize,
    remaining: usize,
    rng: SeededRng,
}

impl Iterator for TripletStream<'_> {
    type Item = Triplet;

    fn next(&mut self) -> Option<Triplet> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let l = self.len;
        let doc = self.query_docs[rng::index(&mut self.rng, self.query_docs.len())];
        let q = rng::index(&mut self.rng, doc.sentences.len() - 2 * l + 1);
        let neg_doc = self.negative_docs[rng::index(&mut self.rng, self.negative_docs.len())];
        let n = rng::index(&mut self.rng, neg_doc.sentences.len() - l + 1);
        Some(Triplet {
            query: Passage::from_doc(doc, q, l),
            positive: Passage::from_doc(doc, q + l, l),
            negative: Passage::from_doc(neg_doc, n, l),
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

/// Builds `count` triplets over a prepared corpus: a query of `len`
/// sentences from a document with at least `2 * len` sentences, the next
/// `len` sentences as positive, and a uniform passage from a uniformly
/// chosen document as negative.
pub fn build_triplets(corpus: &Corpus, count: usize, len: usize, seed: u64) -> Result<TripletStream<'_>> {
    if len == 0 {
        return Err(Error::InvalidArgument("passage length must be positive".into()));
    }
    let query_docs: Vec<&Document> = corpus.documents().filter(|d| d.sentences.len() >= 2 * len).collect();
    if query_docs.is_empty() {
        return Err(Error::NoEligibleDocuments(2 * len));
    }
    let negative_docs: Vec<&Document> = corpus.documents().filter(|d| d.sentences.len() >= len).collect();
    Ok(TripletStream {
        query_docs,
        negative_docs,
        len,
        remaining: count,
        rng: rng::rng(seed),
    })
}

#[derive(Serialize)]
struct TripletRecord<'a> {
    query: &'a str,
    positive: &'a str,
    negative: &'a str,
}

#[derive(Serialize)]
struct PassageRecord<'a> {
    doc_id: &'a str,
    start: usize,
    text: &'a str,
}

/// Writes triplets as JSON Lines with `query`, `positive`, `negative` keys.
pub fn write_triplets<W: Write>(out: &mut W, triplets: impl Iterator<Item = Triplet>) -> std::io::Result<usize> {
    let mut n = 0;
    for t in triplets {
        let rec = TripletRecord {
            query: &t.query.text,
            positive: &t.positive.text,
            negative: &t.negative.text,
        };
        serde_json::to_writer(&mut *out, &rec)?;
        out.write_all(b"\n")?;
        n += 1;
    }
    Ok(n)
}

/// Writes passages as JSON Lines with `doc_id`, `start`, `text` keys.
pub fn write_passages<'a, W: Write>(out: &mut W, passages: impl Iterator<Item = &'a Passage>) -> std::io::Result<()> {
    for p in passages {
        let rec = PassageRecord {
            doc_id: &p.doc_id,
            start: p.start_sentence,
            text: &p.text,
        };
        serde_json::to_writer(&mut *out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
