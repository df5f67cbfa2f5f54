//! End-to-end runs driven by a [`Config`], with per-stage caching and a
//! run manifest.
//!
//! Each stage reads files from and writes files into the run directory.
//! A stage's cache key is the SHA-256 of its name, its parameters and the
//! digests of the files it reads. When `manifest.json` from a previous run
//! records the same key and every recorded output is still present with
//! its recorded digest, the stage is reported `cached` and not executed.
//! A failing stage leaves `<stage>.failed` next to any partial outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::classify::{self, TrainParams};
use crate::config::{Config, Overrides};
use crate::corpus::{self, filter_by_labels, Corpus, IngestOptions};
use crate::embedding::{mean_pool, standardize, Embedder, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::ocr::{self, Lexicon};
use crate::passage::{self, Passage};
use crate::plot::{self, PlotKind};
use crate::sanity::{self, SanityConfig};
use crate::similarity::{self, SimilarityMatrix};
use crate::temporal::{self, GroupSpec};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Cached,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub key: String,
    pub status: StageStatus,
    pub seconds: f64,
    /// Files read, with their digests.
    pub inputs: BTreeMap<String, String>,
    /// Files written, relative to the run directory, with their digests.
    pub outputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(h.finalize()))
}

fn files_under(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let p = e.map_err(|e| Error::io(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

struct Runner {
    dir: PathBuf,
    base: PathBuf,
    previous: Option<RunManifest>,
    manifest: RunManifest,
}

impl Runner {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    /// Display name for a file read: relative to the run directory or the
    /// config directory when inside them.
    fn label(&self, p: &Path) -> String {
        p.strip_prefix(&self.dir)
            .or_else(|_| p.strip_prefix(&self.base))
            .unwrap_or(p)
            .display()
            .to_string()
    }

    fn cached(&self, name: &str, key: &str) -> Option<StageRecord> {
        let prev = self.previous.as_ref()?.stage(name)?;
        if prev.key != key || prev.status == StageStatus::Failed {
            return None;
        }
        let intact = prev
            .outputs
            .iter()
            .all(|(rel, d)| sha256_file(&self.path(rel)).is_ok_and(|got| &got == d));
        intact.then(|| prev.clone())
    }

    /// Runs `f` unless a matching cached result exists. `f` returns the
    /// run-directory-relative names of the files it wrote.
    fn stage(
        &mut self,
        name: &str,
        params: serde_json::Value,
        inputs: &[PathBuf],
        f: impl FnOnce(&Path) -> Result<Vec<String>>,
    ) -> Result<()> {
        let mut digests = BTreeMap::new();
        for p in inputs {
            digests.insert(self.label(p), sha256_file(p)?);
        }
        let key = sha256_bytes(
            json!({ "stage": name, "params": params, "inputs": digests })
                .to_string()
                .as_bytes(),
        );
        let failed_marker = self.path(&format!("{name}.failed"));
        if let Some(mut rec) = self.cached(name, &key) {
            info!("stage {name}: cached");
            rec.status = StageStatus::Cached;
            rec.seconds = 0.0;
            self.finish(rec);
            return Ok(());
        }
        info!("stage {name}: running");
        let _ = fs::remove_file(&failed_marker);
        let start = Instant::now();
        let result = f(&self.dir);
        let seconds = start.elapsed().as_secs_f64();
        match result {
            Ok(written) => {
                let mut outputs = BTreeMap::new();
                for rel in written {
                    let d = sha256_file(&self.path(&rel))?;
                    outputs.insert(rel, d);
                }
                self.finish(StageRecord {
                    name: name.into(),
                    key,
                    status: StageStatus::Ran,
                    seconds,
                    inputs: digests,
                    outputs,
                    error: None,
                });
                Ok(())
            }
            Err(e) => {
                let msg = e.to_string();
                let _ = fs::write(&failed_marker, format!("{msg}\n"));
                self.finish(StageRecord {
                    name: name.into(),
                    key,
                    status: StageStatus::Failed,
                    seconds,
                    inputs: digests,
                    outputs: BTreeMap::new(),
                    error: Some(msg),
                });
                self.write_manifest()?;
                Err(Error::Stage {
                    stage: name.into(),
                    source: Box::new(e),
                })
            }
        }
    }

    fn finish(&mut self, rec: StageRecord) {
        for (k, v) in &rec.outputs {
            self.manifest.outputs.insert(k.clone(), v.clone());
        }
        for (k, v) in &rec.inputs {
            if !self.manifest.outputs.contains_key(k) {
                self.manifest.inputs.insert(k.clone(), v.clone());
            }
        }
        self.manifest.stages.push(rec);
    }

    fn write_manifest(&self) -> Result<()> {
        let p = self.path(MANIFEST);
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn render(dir: &Path, csv: &str, kind: PlotKind, svg: &str) -> Result<()> {
    plot::render_file(&dir.join(csv), kind, &dir.join(svg))
}

fn read_passages(path: &Path) -> Result<Vec<Passage>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let v: serde_json::Value = serde_json::from_str(&line)?;
        let field = |k: &str| {
            v.get(k).cloned().ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("missing {k:?}"),
            })
        };
        let doc_id = field("doc_id")?.as_str().unwrap_or_default().to_string();
        let start = field("start")?.as_u64().unwrap_or_default() as usize;
        let text = field("text")?.as_str().unwrap_or_default().to_string();
        out.push(Passage {
            doc_id,
            start_sentence: start,
            sentences: Vec::new(),
            text,
        });
    }
    Ok(out)
}

fn check_inputs(cfg: &Config) -> Result<()> {
    for p in cfg.required_inputs() {
        if !p.exists() {
            return Err(Error::Config(format!("input not found: {}", p.display())));
        }
    }
    Ok(())
}

/// Runs every stage of `config_path` into `out_dir` and returns the manifest,
/// also written as `manifest.json` in `out_dir`.
pub fn run_pipeline(config_path: &Path, out_dir: &Path, overrides: &Overrides) -> Result<RunManifest> {
    let config_text = fs::read_to_string(config_path).map_err(|e| Error::io(config_path, e))?;
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut cfg = Config::parse(&config_text, &base)?;
    cfg.apply(overrides)?;
    check_inputs(&cfg)?;

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let previous = RunManifest::load(&out_dir.join(MANIFEST)).ok();
    let config_copy = out_dir.join("config.toml");
    fs::write(&config_copy, &config_text).map_err(|e| Error::io(&config_copy, e))?;

    let mut r = Runner {
        dir: out_dir.to_path_buf(),
        base: base.clone(),
        previous,
        manifest: RunManifest {
            tool_version: TOOL_VERSION.into(),
            config_sha256: sha256_bytes(config_text.as_bytes()),
            seeds: cfg.seeds(),
            inputs: BTreeMap::from([(r_label(&base, config_path), sha256_bytes(config_text.as_bytes()))]),
            stages: Vec::new(),
            outputs: BTreeMap::from([("config.toml".to_string(), sha256_bytes(config_text.as_bytes()))]),
        },
    };

    let metadata = cfg.resolve(&cfg.input.metadata);
    let texts = cfg.resolve(&cfg.input.texts);
    let lexicon = cfg.resolve(&cfg.input.lexicon);
    let corpus_json = r.path("corpus.json");
    let ocr_json = r.path("corpus_ocr.json");
    let prepared_json = r.path("corpus_prepared.json");
    let passages_jsonl = r.path("passages.jsonl");
    let passage_emb = r.path("passage_vectors.emb");
    let doc_emb = r.path("embeddings.emb");
    let std_emb = r.path("embeddings_std.emb");
    let sim_path = r.path("similarity.sim");

    let mut ingest_inputs = vec![metadata.clone()];
    ingest_inputs.extend(files_under(&texts)?);
    let opts = IngestOptions {
        min_year: cfg.input.min_year,
        max_year: cfg.input.max_year,
    };
    let dedup = cfg.input.dedup;
    r.stage(
        "ingest",
        json!({ "min_year": opts.min_year, "max_year": opts.max_year, "dedup": dedup }),
        &ingest_inputs,
        |dir| {
            let report = corpus::ingest(&metadata, &texts, &opts)?;
            let (c, removed) = if dedup {
                corpus::dedup(&report.corpus)
            } else {
                (report.corpus.clone(), Vec::new())
            };
            if c.is_empty() {
                return Err(Error::Metadata("no documents survived ingest".into()));
            }
            c.save_json(&dir.join("corpus.json"))?;
            write_with(&dir.join("ingest_errors.csv"), |w| {
                writeln!(w, "line,doc_id,message")?;
                for e in &report.row_errors {
                    writeln!(w, "{},{},\"{}\"", e.line, e.doc_id, e.message.replace('"', "'"))?;
                }
                for id in &report.complete_works {
                    writeln!(w, ",{id},\"complete works volume skipped\"")?;
                }
                Ok(())
            })?;
            write_with(&dir.join("dedup.csv"), |w| {
                writeln!(w, "removed,kept,tie")?;
                for d in &removed {
                    writeln!(w, "{},{},{}", d.removed, d.kept, d.tie)?;
                }
                Ok(())
            })?;
            Ok(vec![
                "corpus.json".into(),
                "ingest_errors.csv".into(),
                "dedup.csv".into(),
            ])
        },
    )?;

    let threshold = cfg.ocr.threshold;
    r.stage(
        "ocr",
        json!({ "threshold": threshold }),
        &[corpus_json.clone(), lexicon.clone()],
        |dir| {
            let c = Corpus::load_json(&corpus_json)?;
            let lex = Lexicon::load(&lexicon)?;
            let mut scored = c.clone();
            ocr::score_corpus(&mut scored, &lex)?;
            let (kept, retention) = ocr::filter_corpus(&c, &lex, threshold)?;
            if kept.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "no document reaches OCR threshold {threshold}"
                )));
            }
            kept.save_json(&dir.join("corpus_ocr.json"))?;
            write_with(&dir.join("ocr_scores.csv"), |w| {
                writeln!(w, "doc_id,year,score,kept")?;
                for d in scored.documents() {
                    let s = d.ocr_score.unwrap_or(0.0);
                    writeln!(w, "{},{},{},{}", d.doc_id, d.year, s, kept.contains(&d.doc_id))?;
                }
                Ok(())
            })?;
            write_with(&dir.join("ocr_retention.csv"), |w| {
                writeln!(w, "year,kept,total")?;
                for (y, (k, t)) in &retention.by_year {
                    writeln!(w, "{y},{k},{t}")?;
                }
                Ok(())
            })?;
            let mut bars = String::from("label,value\n");
            for (y, (k, t)) in &retention.by_year {
                bars.push_str(&format!("{y},{}\n", *k as f64 / *t as f64));
            }
            let svg = plot::render_plot(&bars, PlotKind::Bar, "ocr retention by year")?;
            let p = dir.join("ocr_retention.svg");
            fs::write(&p, svg).map_err(|e| Error::io(&p, e))?;
            Ok(vec![
                "corpus_ocr.json".into(),
                "ocr_scores.csv".into(),
                "ocr_retention.csv".into(),
                "ocr_retention.svg".into(),
            ])
        },
    )?;

    let (draws, len) = (cfg.sample.draws, cfg.sample.passage_len);
    let sample_seed = cfg.stage_seed("sample");
    r.stage(
        "sample",
        json!({ "draws": draws, "len": len, "seed": sample_seed }),
        std::slice::from_ref(&ocr_json),
        |dir| {
            let prepared = passage::prepare_corpus(&Corpus::load_json(&ocr_json)?)?;
            prepared.save_json(&dir.join("corpus_prepared.json"))?;
            let (sets, skipped) = passage::draw_corpus(&prepared, draws, len, sample_seed);
            if sets.is_empty() {
                return Err(Error::NoEligibleDocuments(len));
            }
            write_with(&dir.join("passages.jsonl"), |w| {
                passage::write_passages(w, sets.iter().flat_map(|s| &s.passages))
            })?;
            write_with(&dir.join("sample_skipped.csv"), |w| {
                writeln!(w, "doc_id,reason")?;
                for e in &skipped {
                    if let Error::DocumentTooShort { doc_id, sentences, .. } = e {
                        writeln!(w, "{doc_id},only {sentences} sentences")?;
                    }
                }
                Ok(())
            })?;
            Ok(vec![
                "corpus_prepared.json".into(),
                "passages.jsonl".into(),
                "sample_skipped.csv".into(),
            ])
        },
    )?;

    let spec = cfg.embedder();
    let mut embed_inputs = vec![passages_jsonl.clone()];
    if let crate::embedding::EmbedderSpec::File { path, .. } = &spec {
        embed_inputs.push(path.clone());
    }
    r.stage("embed", serde_json::to_value(&cfg.embed)?, &embed_inputs, |dir| {
        let passages = read_passages(&passages_jsonl)?;
        let mut embedder = Embedder::from_spec(&spec)?;
        let vectors = embedder.embed(&passages)?;
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let ids = passages
            .iter()
            .map(|p| {
                let k = counts.entry(&p.doc_id).or_default();
                *k += 1;
                format!("{}#{}", p.doc_id, *k - 1)
            })
            .collect();
        EmbeddingMatrix::from_rows(ids, vectors)?.save(&dir.join("passage_vectors.emb"))?;
        Ok(vec!["passage_vectors.emb".into()])
    })?;

    r.stage("pool", json!({}), std::slice::from_ref(&passage_emb), |dir| {
        let pv = EmbeddingMatrix::load(&passage_emb)?;
        let mut groups: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
        for (id, row) in pv.doc_ids().iter().zip(pv.rows()) {
            let doc = id.rsplit_once('#').map_or(id.as_str(), |(d, _)| d);
            groups.entry(doc).or_default().push(row.to_vec());
        }
        let mut ids = Vec::with_capacity(groups.len());
        let mut rows = Vec::with_capacity(groups.len());
        for (doc, vs) in groups {
            ids.push(doc.to_string());
            rows.push(mean_pool(&vs)?);
        }
        EmbeddingMatrix::from_rows(ids, rows)?.save(&dir.join("embeddings.emb"))?;
        Ok(vec!["embeddings.emb".into()])
    })?;

    r.stage("standardize", json!({}), std::slice::from_ref(&doc_emb), |dir| {
        let (z, dead) = standardize(&EmbeddingMatrix::load(&doc_emb)?)?;
        z.save(&dir.join("embeddings_std.emb"))?;
        write_with(&dir.join("dead_columns.csv"), |w| {
            writeln!(w, "column")?;
            dead.iter().try_for_each(|c| writeln!(w, "{c}"))
        })?;
        Ok(vec!["embeddings_std.emb".into(), "dead_columns.csv".into()])
    })?;

    let policy = cfg.matrix.policy()?;
    let k = cfg.matrix.neighbors;
    r.stage(
        "matrix",
        json!({ "policy": cfg.matrix.policy, "neighbors": k }),
        &[std_emb.clone(), prepared_json.clone()],
        |dir| {
            let m = EmbeddingMatrix::load(&std_emb)?.assume_standardized();
            let c = Corpus::load_json(&prepared_json)?;
            let s = similarity::build(&m, &c, policy)?;
            s.save(&dir.join("similarity.sim"))?;
            write_with(&dir.join("neighbors.csv"), |w| {
                writeln!(w, "doc_id,rank,neighbor,sim")?;
                for id in s.doc_ids() {
                    let nn = s.neighbors(id, k).map_err(std::io::Error::other)?;
                    for (rank, (n, v)) in nn.iter().enumerate() {
                        writeln!(w, "{id},{},{n},{v}", rank + 1)?;
                    }
                }
                Ok(())
            })?;
            Ok(vec!["similarity.sim".into(), "neighbors.csv".into()])
        },
    )?;

    let temporal_seed = cfg.stage_seed("temporal");
    let curve_cfg = cfg.curve_config(temporal_seed)?;
    let tparams = serde_json::to_value(&cfg.temporal)?;
    let analysis_inputs = [sim_path.clone(), prepared_json.clone()];
    let load = || -> Result<(SimilarityMatrix, Corpus)> {
        Ok((SimilarityMatrix::load(&sim_path)?, Corpus::load_json(&prepared_json)?))
    };

    if let Some(a) = cfg.analyses.offset_curve.clone() {
        r.stage(
            "offset-curve",
            json!({ "temporal": tparams, "seed": temporal_seed, "query": a.query }),
            &analysis_inputs,
            |dir| {
                let (s, c) = load()?;
                let docs = match &a.query {
                    Some(q) => filter_by_labels(&c, q)?,
                    None => s.doc_ids().to_vec(),
                };
                let curve = temporal::offset_curve(&docs, &s, &c, &curve_cfg)?;
                write_with(&dir.join("offset_curve.csv"), |w| curve.write_csv(w))?;
                let meta = serde_json::to_string_pretty(&curve.metadata())?;
                let p = dir.join("offset_curve.json");
                fs::write(&p, meta + "\n").map_err(|e| Error::io(&p, e))?;
                render(dir, "offset_curve.csv", PlotKind::OffsetCurve, "offset_curve.svg")?;
                Ok(vec![
                    "offset_curve.csv".into(),
                    "offset_curve.json".into(),
                    "offset_curve.svg".into(),
                ])
            },
        )?;
    }

    if let Some(a) = cfg.analyses.trajectory.clone() {
        r.stage(
            "trajectory",
            json!({
                "min_per_year": cfg.temporal.min_per_year,
                "max_per_year": cfg.temporal.max_per_year,
                "seed": temporal_seed,
                "docs": a.docs,
            }),
            &analysis_inputs,
            |dir| {
                let (s, c) = load()?;
                let mut out = Vec::new();
                for id in &a.docs {
                    let t = temporal::novel_trajectory(id, &s, &c, curve_cfg.bounds, temporal_seed)?;
                    let stem = format!("trajectory_{}", sanitize(id));
                    write_with(&dir.join(format!("{stem}.csv")), |w| t.write_csv(w))?;
                    render(
                        dir,
                        &format!("{stem}.csv"),
                        PlotKind::Trajectory,
                        &format!("{stem}.svg"),
                    )?;
                    out.push(format!("{stem}.csv"));
                    out.push(format!("{stem}.svg"));
                }
                Ok(out)
            },
        )?;
    }

    for a in cfg.analyses.compare.clone() {
        let stem = format!("compare_{}", sanitize(&a.name));
        r.stage(
            &stem.replace('_', "-"),
            json!({ "temporal": tparams, "seed": temporal_seed, "group": a.group, "comparison": a.comparison }),
            &analysis_inputs,
            |dir| {
                let (s, c) = load()?;
                let spec = GroupSpec {
                    name: a.name.clone(),
                    members: filter_by_labels(&c, &a.group)?,
                    comparison: filter_by_labels(&c, &a.comparison)?,
                };
                let cmp = temporal::stratified_compare(&spec, &s, &c, &curve_cfg)?;
                write_with(&dir.join(format!("{stem}.csv")), |w| {
                    cmp.write_csv(w, &a.group, &a.comparison)
                })?;
                render(
                    dir,
                    &format!("{stem}.csv"),
                    PlotKind::OffsetCurve,
                    &format!("{stem}.svg"),
                )?;
                Ok(vec![format!("{stem}.csv"), format!("{stem}.svg")])
            },
        )?;
    }

    if let Some(a) = cfg.analyses.sanity.clone() {
        let sanity_seed = cfg.stage_seed("sanity");
        let sc = SanityConfig {
            novel_count: a.novel_count,
            reps_per_novel: a.reps_per_novel,
            draw_counts: a.draw_counts.clone(),
            passage_len: len,
            seed: sanity_seed,
        };
        r.stage(
            "sanity",
            json!({ "analysis": a, "len": len, "seed": sanity_seed, "embed": cfg.embed }),
            std::slice::from_ref(&prepared_json),
            |dir| {
                let c = Corpus::load_json(&prepared_json)?;
                let report = sanity::run(&c, &spec, &sc)?;
                write_with(&dir.join("sanity.csv"), |w| report.write_csv(w))?;
                write_with(&dir.join("sanity_queries.jsonl"), |w| report.write_queries(w))?;
                render(dir, "sanity.csv", PlotKind::Sweep, "sanity.svg")?;
                Ok(vec![
                    "sanity.csv".into(),
                    "sanity_queries.jsonl".into(),
                    "sanity.svg".into(),
                ])
            },
        )?;
    }

    if let Some(a) = cfg.analyses.classify.clone() {
        let seed = cfg.stage_seed("classify");
        r.stage(
            "classify",
            json!({ "analysis": a, "seed": seed }),
            &[std_emb.clone(), prepared_json.clone()],
            |dir| {
                let m = EmbeddingMatrix::load(&std_emb)?.assume_standardized();
                let c = Corpus::load_json(&prepared_json)?;
                let in_m = |ids: Vec<String>| ids.into_iter().filter(|i| m.index_of(i).is_some()).collect();
                let pos: std::collections::BTreeSet<String> = in_m(filter_by_labels(&c, &a.positive)?);
                let all_neg = in_m(filter_by_labels(&c, &a.negative)?);
                let neg = classify::subsample_negatives(&all_neg, pos.len(), a.negative_ratio, seed);
                let cv = classify::cross_validate(&m, &pos, &neg, a.folds, &a.lambdas, a.epochs, seed)?;
                write_with(&dir.join("classify_cv.csv"), |w| {
                    writeln!(w, "lambda,mean_accuracy,best")?;
                    cv.iter()
                        .try_for_each(|row| writeln!(w, "{},{},{}", row.lambda, row.mean_accuracy, row.best))
                })?;
                let best = cv.iter().find(|row| row.best).map_or(a.lambdas[0], |row| row.lambda);
                let model = classify::train(
                    &m,
                    &pos,
                    &neg,
                    TrainParams {
                        lambda: best,
                        epochs: a.epochs,
                        seed,
                    },
                )?;
                model.save(&dir.join("classifier.lsvm"))?;
                let preds = classify::predict(&model, &m)?;
                write_with(&dir.join("predictions.csv"), |w| classify::write_predictions(w, &preds))?;
                Ok(vec![
                    "classify_cv.csv".into(),
                    "classifier.lsvm".into(),
                    "predictions.csv".into(),
                ])
            },
        )?;
    }

    r.write_manifest()?;
    Ok(r.manifest)
}

fn r_label(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).display().to_string()
}

/// File-name-safe form of a document id or group name.
fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}
