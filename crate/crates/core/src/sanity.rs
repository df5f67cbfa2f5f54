//! Multi-representation sanity check.
//!
//! Each sampled novel is embedded `reps` times from independent passage
//! draws. The pooled representations are standardized together and every
//! representation queries its `reps - 1` nearest neighbors; the per-query
//! score is the fraction of those neighbors that are its own siblings.

use std::collections::BTreeSet;
use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{Corpus, Document};
use crate::embedding::{embed_document, standardize, Embedder, EmbedderSpec, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::passage::DEFAULT_PASSAGE_LEN;
use crate::rng;
use crate::similarity::build_unmasked;

pub const PENALTY_RULE: &str = "fraction of the k nearest neighbors that are siblings";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SanityConfig {
    pub novel_count: usize,
    pub reps_per_novel: usize,
    pub draw_counts: Vec<usize>,
    pub passage_len: usize,
    pub seed: u64,
}

impl Default for SanityConfig {
    fn default() -> Self {
        SanityConfig {
            novel_count: 1000,
            reps_per_novel: 5,
            draw_counts: vec![10, 25, 50, 100],
            passage_len: DEFAULT_PASSAGE_LEN,
            seed: 42,
        }
    }
}

impl SanityConfig {
    pub fn k(&self) -> usize {
        self.reps_per_novel - 1
    }

    fn validate(&self) -> Result<()> {
        if self.reps_per_novel < 2 {
            return Err(Error::InvalidArgument("reps_per_novel must be at least 2".into()));
        }
        if self.draw_counts.is_empty() || self.draw_counts[0] == 0 || self.draw_counts.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidArgument(
                "draw counts must be positive and strictly ascending".into(),
            ));
        }
        if self.novel_count == 0 {
            return Err(Error::InvalidArgument("novel_count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueryScore {
    pub query: String,
    /// Siblings among the `k` nearest neighbors; the score is `hits / k`.
    pub hits: usize,
    pub neighbors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SanityResult {
    pub embedder: String,
    pub draws: usize,
    pub k: usize,
    pub accuracy: f64,
    pub queries: Vec<QueryScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SanityReport {
    pub novels: Vec<String>,
    pub penalty: &'static str,
    pub results: Vec<SanityResult>,
}

impl SanityReport {
    /// CSV `embedder,draws,accuracy`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "embedder,draws,accuracy")?;
        for r in &self.results {
            writeln!(w, "{},{},{}", r.embedder, r.draws, r.accuracy)?;
        }
        Ok(())
    }

    /// One JSON object per query: `embedder`, `draws`, `query`, `hits`, `k`, `neighbors`.
    pub fn write_queries<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for r in &self.results {
            for q in &r.queries {
                let rec = serde_json::json!({
                    "embedder": r.embedder,
                    "draws": r.draws,
                    "query": q.query,
                    "hits": q.hits,
                    "k": r.k,
                    "neighbors": q.neighbors,
                });
                serde_json::to_writer(&mut *w, &rec)?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}

/// Novels taken into the check: documents with at least one passage,
/// subsampled to `novel_count` when there are more.
pub fn select_novels<'a>(corpus: &'a Corpus, cfg: &SanityConfig) -> Vec<&'a Document> {
    let eligible: Vec<&Document> = corpus
        .documents()
        .filter(|d| d.sentences.len() >= cfg.passage_len)
        .collect();
    if eligible.len() < cfg.novel_count {
        warn!(
            "sanity check: {} eligible novels, fewer than the requested {}",
            eligible.len(),
            cfg.novel_count
        );
        return eligible;
    }
    let mut pick = rng::sample_without_replacement(
        &mut rng::rng(rng::stage_seed(cfg.seed, "sanity-novels")),
        eligible.len(),
        cfg.novel_count,
    );
    pick.sort_unstable();
    pick.into_iter().map(|i| eligible[i]).collect()
}

fn rep_id(doc_id: &str, rep: usize) -> String {
    format!("{doc_id}#{rep}")
}

/// Scores a pool whose ids are `doc#rep`; siblings share the `doc` part.
pub fn score_pool(pool: &EmbeddingMatrix, k: usize) -> Result<Vec<QueryScore>> {
    let (std, _) = standardize(pool)?;
    let sim = build_unmasked(&std)?;
    let owner = |id: &str| id.rsplit_once('#').map_or(id, |(d, _)| d).to_string();
    Ok((0..sim.len())
        .into_par_iter()
        .map(|i| {
            let me = owner(&sim.doc_ids()[i]);
            let nn = sim.neighbor_indices(i, k);
            let neighbors: Vec<String> = nn.iter().map(|&j| sim.doc_ids()[j].clone()).collect();
            let hits = neighbors.iter().filter(|n| owner(n) == me).count();
            QueryScore {
                query: sim.doc_ids()[i].clone(),
                hits,
                neighbors,
            }
        })
        .collect())
}

/// Exact mean of per-query scores: integer hits over `k * queries`.
pub fn accuracy(queries: &[QueryScore], k: usize) -> f64 {
    if queries.is_empty() {
        return 0.0;
    }
    let hits: usize = queries.iter().map(|q| q.hits).sum();
    hits as f64 / (k * queries.len()) as f64
}

fn run_with(corpus: &Corpus, embedder: &mut Embedder, name: &str, cfg: &SanityConfig) -> Result<SanityReport> {
    cfg.validate()?;
    let novels = select_novels(corpus, cfg);
    if novels.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "sanity check needs at least 2 novels with {} sentences",
            cfg.passage_len
        )));
    }
    let k = cfg.k();
    let mut results = Vec::with_capacity(cfg.draw_counts.len());
    for &draws in &cfg.draw_counts {
        let mut ids = Vec::with_capacity(novels.len() * cfg.reps_per_novel);
        let mut rows = Vec::with_capacity(ids.capacity());
        for d in &novels {
            for rep in 1..=cfg.reps_per_novel {
                let seed = rng::doc_seed(cfg.seed.wrapping_add(rep as u64), &d.doc_id);
                rows.push(embed_document(d, embedder, draws, cfg.passage_len, seed)?);
                ids.push(rep_id(&d.doc_id, rep));
            }
        }
        let pool = EmbeddingMatrix::from_rows(ids, rows)?;
        let queries = score_pool(&pool, k)?;
        results.push(SanityResult {
            embedder: name.to_string(),
            draws,
            k,
            accuracy: accuracy(&queries, k),
            queries,
        });
    }
    Ok(SanityReport {
        novels: novels.iter().map(|d| d.doc_id.clone()).collect(),
        penalty: PENALTY_RULE,
        results,
    })
}

/// Runs the check for one embedder at every configured draw count.
/// The corpus must be prepared (segmented and masked).
pub fn run(corpus: &Corpus, spec: &EmbedderSpec, cfg: &SanityConfig) -> Result<SanityReport> {
    let mut embedder = Embedder::from_spec(spec)?;
    run_with(corpus, &mut embedder, &spec.name(), cfg)
}

/// Embedder by draw-count accuracy table over several embedders.
pub fn sweep_draws(corpus: &Corpus, specs: &[EmbedderSpec], cfg: &SanityConfig) -> Result<SanityReport> {
    let mut out: Option<SanityReport> = None;
    let mut names = BTreeSet::new();
    for spec in specs {
        let name = spec.name();
        if !names.insert(name.clone()) {
            return Err(Error::InvalidArgument(format!("embedder {name:?} listed twice")));
        }
        let r = run(corpus, spec, cfg)?;
        match &mut out {
            Some(acc) => acc.results.extend(r.results),
            None => out = Some(r),
        }
    }
    out.ok_or_else(|| Error::InvalidArgument("no embedders given".into()))
}
