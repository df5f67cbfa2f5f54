//! Dictionary-based OCR quality proxy: the share of a document's word
//! tokens found in a lexicon.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: HashSet<String>,
    source_id: String,
}

pub fn normalize_word(w: &str) -> String {
    w.nfc().collect::<String>().to_lowercase()
}

impl Lexicon {
    pub fn from_words<I, S>(source_id: impl Into<String>, words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let source_id = source_id.into();
        let entries: HashSet<String> = words
            .into_iter()
            .map(|w| normalize_word(w.as_ref().trim()))
            .filter(|w| !w.is_empty())
            .collect();
        if entries.is_empty() {
            return Err(Error::EmptyLexicon(source_id));
        }
        Ok(Lexicon { entries, source_id })
    }

    /// One word per line; blank lines and `#` comments are skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        Lexicon::from_words(path.display().to_string(), words)
    }

    pub fn contains(&self, normalized: &str) -> bool {
        self.entries.contains(normalized)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }
}

/// Word tokens of `text`, normalized for lexicon lookup.
///
/// Splits on whitespace and on apostrophes (`l'homme` gives `l`, `homme`),
/// trims punctuation at both ends, and drops tokens with no letter.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| c.is_whitespace() || c == '\'' || c == '’')
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| t.chars().any(char::is_alphabetic))
        .map(normalize_word)
        .collect()
}

/// Fraction of alphabetic tokens present in the lexicon.
pub fn ocr_score(doc: &Document, lex: &Lexicon) -> Result<f64> {
    let tokens = tokenize(&doc.raw_text);
    if tokens.is_empty() {
        return Err(Error::Untokenizable(doc.doc_id.clone()));
    }
    let known = tokens.iter().filter(|t| lex.contains(t)).count();
    Ok(known as f64 / tokens.len() as f64)
}

/// Scores every document in parallel and stores the result on it.
pub fn score_corpus(corpus: &mut Corpus, lex: &Lexicon) -> Result<()> {
    let scores: Vec<(String, Result<f64>)> = corpus
        .documents()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|d| (d.doc_id.clone(), ocr_score(d, lex)))
        .collect();
    for (id, score) in scores {
        let s = score?;
        if let Some(d) = corpus.get_mut(&id) {
            d.ocr_score = Some(s);
        }
    }
    Ok(())
}

/// Per-year counts before and after the threshold filter.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Retention {
    pub by_year: BTreeMap<i32, (usize, usize)>,
}

impl Retention {
    pub fn kept(&self) -> usize {
        self.by_year.values().map(|v| v.0).sum()
    }

    pub fn total(&self) -> usize {
        self.by_year.values().map(|v| v.1).sum()
    }
}

/// Scores the corpus and keeps documents with `ocr_score >= threshold`.
pub fn filter_corpus(corpus: &Corpus, lex: &Lexicon, threshold: f64) -> Result<(Corpus, Retention)> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} outside [0, 1]")));
    }
    let mut scored = corpus.clone();
    score_corpus(&mut scored, lex)?;
    let mut retention = Retention::default();
    for d in scored.documents() {
        let e = retention.by_year.entry(d.year).or_default();
        e.1 += 1;
        if d.ocr_score.unwrap_or(0.0) >= threshold {
            e.0 += 1;
        }
    }
    scored.retain(|d| d.ocr_score.unwrap_or(0.0) >= threshold);
    Ok((scored, retention))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex(words: &[&str]) -> Lexicon {
        Lexicon::from_words("test", words.iter().copied()).unwrap()
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(
            tokenize("L'homme, dit-il : « Viens ! » 1864"),
            vec!["l", "homme", "dit-il", "viens"]
        );
        assert_eq!(tokenize("l’été"), vec!["l", "été"]);
        assert!(tokenize("1864 1870 — ...").is_empty());
    }

    #[test]
    fn three_of_four() {
        let d = Document::new("d", "a", 1850, "le chat dort xqzt");
        assert_eq!(ocr_score(&d, &lex(&["le", "chat", "dort"])).unwrap(), 0.75);
    }

    #[test]
    fn case_folded_match() {
        let d = Document::new("d", "a", 1850, "Le CHAT dort.");
        assert_eq!(ocr_score(&d, &lex(&["le", "chat", "dort"])).unwrap(), 1.0);
    }

    #[test]
    fn digits_only_is_untokenizable() {
        let d = Document::new("d", "a", 1850, "1864 1870");
        assert!(matches!(ocr_score(&d, &lex(&["le"])), Err(Error::Untokenizable(_))));
    }

    #[test]
    fn empty_lexicon_rejected() {
        assert!(Lexicon::from_words("x", ["", "  "]).is_err());
    }

    #[test]
    fn threshold_zero_is_identity() {
        let c = Corpus::from_documents([
            Document::new("a", "x", 1850, "le chat"),
            Document::new("b", "y", 1851, "xq zz"),
        ])
        .unwrap();
        let (f, r) = filter_corpus(&c, &lex(&["le", "chat"]), 0.0).unwrap();
        assert_eq!(f.doc_ids(), c.doc_ids());
        assert_eq!((r.kept(), r.total()), (2, 2));
        assert!(filter_corpus(&c, &lex(&["le"]), 1.5).is_err());
    }
}
