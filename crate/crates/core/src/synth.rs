//! Synthetic corpora with known structure, for tests and demonstrations.
//!
//! Texts are sequences of pseudo-words (`word(i)`) arranged into capitalized
//! sentences ending in a period, so segmentation is unambiguous. Every
//! generator is a pure function of its parameters and seed. Corpora come
//! back segmented and ready for passage sampling.

use std::collections::BTreeSet;

use rand::Rng;

use crate::corpus::{Corpus, Document, Labels};
use crate::embedding::EmbeddingMatrix;
use crate::error::Result;
use crate::passage::prepare_corpus;
use crate::rng::{self, SeededRng};

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Distinct lowercase pseudo-word for every `i` below 85^3.
pub fn word(i: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut n = i;
    let mut s = String::with_capacity(6);
    for _ in 0..3 {
        let syl = n % base;
        n /= base;
        s.push(CONSONANTS[syl / VOWELS.len()] as char);
        s.push(VOWELS[syl % VOWELS.len()] as char);
    }
    s
}

/// `sentences` sentences of `words` words each, every word chosen by `pick`.
pub fn text(
    r: &mut SeededRng,
    sentences: usize,
    words: usize,
    mut pick: impl FnMut(&mut SeededRng) -> usize,
) -> String {
    let mut out = String::new();
    for s in 0..sentences {
        if s > 0 {
            out.push(' ');
        }
        for w in 0..words {
            let wd = word(pick(r));
            if w == 0 {
                let mut c = wd.chars();
                out.extend(c.next().map(|c| c.to_ascii_uppercase()));
                out.push_str(c.as_str());
            } else {
                out.push(' ');
                out.push_str(&wd);
            }
        }
        out.push('.');
    }
    out
}

/// `novels` documents, novel `i` drawing only from words
/// `i*vocab .. (i+1)*vocab`. Every novel has its own author.
pub fn disjoint_vocabularies(novels: usize, sentences: usize, vocab: usize, seed: u64) -> Result<Corpus> {
    let mut r = rng::rng(seed);
    let docs: Vec<Document> = (0..novels)
        .map(|i| {
            let t = text(&mut r, sentences, 8, |r| {
                i * vocab + r.random_range(0..vocab as u64) as usize
            });
            Document::new(format!("n{i:04}"), format!("a{i:04}"), 1850 + (i % 50) as i32, t)
        })
        .collect();
    prepare_corpus(&Corpus::from_documents(docs)?)
}

/// Background vocabulary whose window slides by `step` words per year.
#[derive(Debug, Clone, Copy)]
pub struct Drift {
    pub first_year: i32,
    pub step: usize,
    pub width: usize,
}

impl Drift {
    pub fn pick(&self, r: &mut SeededRng, year: i32) -> usize {
        let t = (year - self.first_year).max(0) as usize;
        t * self.step + r.random_range(0..self.width as u64) as usize
    }
}

/// One document per `(year, count)` entry repetition, vocabulary drifting
/// with publication year. All authors are distinct.
pub fn drifting_vocabulary(years: &[(i32, usize)], drift: Drift, sentences: usize, seed: u64) -> Result<Corpus> {
    let mut r = rng::rng(seed);
    let mut docs = Vec::new();
    for &(year, count) in years {
        for k in 0..count {
            let t = text(&mut r, sentences, 8, |r| drift.pick(r, year));
            let i = docs.len();
            docs.push(Document::new(format!("d{year}_{k:02}"), format!("a{i:04}"), year, t));
        }
    }
    prepare_corpus(&Corpus::from_documents(docs)?)
}

/// A drifting corpus with one planted canon work per year in `canon_years`.
/// Canon works draw `canon_share` of their tokens from a shared signature
/// vocabulary. A later non-canon work copies from that vocabulary with
/// probability `copy_rate`, taking `copy_share` of its tokens from it.
#[derive(Debug, Clone)]
pub struct PlantedCanon {
    pub years: std::ops::RangeInclusive<i32>,
    pub docs_per_year: usize,
    pub canon_years: std::ops::RangeInclusive<i32>,
    pub canon_share: f64,
    pub copy_share: f64,
    pub copy_rate: f64,
    pub signature: usize,
    pub drift: Drift,
    pub sentences: usize,
    pub seed: u64,
}

impl PlantedCanon {
    /// Words used for the signature vocabulary lie far above the background range.
    const SIGNATURE_BASE: usize = 500_000;

    pub fn build(&self) -> Result<(Corpus, Vec<String>)> {
        let mut r = rng::rng(self.seed);
        let first_canon = *self.canon_years.start();
        let sig = |r: &mut SeededRng| Self::SIGNATURE_BASE + r.random_range(0..self.signature as u64) as usize;
        let mut docs = Vec::new();
        let mut canon = Vec::new();
        for year in self.years.clone() {
            for k in 0..self.docs_per_year {
                let copies = year > first_canon && r.random_bool(self.copy_rate);
                let share = if copies { self.copy_share } else { 0.0 };
                let t = text(&mut r, self.sentences, 8, |r| {
                    if r.random_bool(share) {
                        sig(r)
                    } else {
                        self.drift.pick(r, year)
                    }
                });
                let i = docs.len();
                docs.push(Document::new(format!("x{year}_{k:02}"), format!("a{i:04}"), year, t));
            }
            if self.canon_years.contains(&year) {
                let t = text(&mut r, self.sentences, 8, |r| {
                    if r.random_bool(self.canon_share) {
                        sig(r)
                    } else {
                        self.drift.pick(r, year)
                    }
                });
                let id = format!("c{year}");
                let labels = Labels {
                    canon: Some(true),
                    adventure: Some(false),
                };
                docs.push(Document::new(&id, format!("c{year}"), year, t).with_labels(labels));
                canon.push(id);
            }
        }
        Ok((prepare_corpus(&Corpus::from_documents(docs)?)?, canon))
    }
}

/// Two linearly separable clusters in `dim` dimensions centered at `±center`
/// along every axis with uniform noise of half-width `noise`. Returns the
/// matrix (marked standardized) with positive and negative id sets.
pub fn two_clusters(
    n: usize,
    dim: usize,
    center: f64,
    noise: f64,
    seed: u64,
) -> Result<(EmbeddingMatrix, BTreeSet<String>, BTreeSet<String>)> {
    let mut r = rng::rng(seed);
    let mut ids = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    let (mut pos, mut neg) = (BTreeSet::new(), BTreeSet::new());
    for i in 0..n {
        let positive = i % 2 == 0;
        let c = if positive { center } else { -center };
        rows.push((0..dim).map(|_| c + r.random_range(-noise..noise)).collect());
        let id = format!("e{i:04}");
        if positive { &mut pos } else { &mut neg }.insert(id.clone());
        ids.push(id);
    }
    Ok((EmbeddingMatrix::from_rows(ids, rows)?.assume_standardized(), pos, neg))
}
