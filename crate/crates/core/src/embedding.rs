//! Passage embedding providers, mean pooling into document vectors,
//! per-dimension standardization and cosine similarity.
//!
//! Three providers are available:
//!
//! * `hash-test`: L2-normalized signed feature hashing of word unigrams.
//!   A pure function of the text, used for tests and synthetic studies.
//! * `file`: vectors read from an embedding file, looked up by
//!   `doc_id@start` and then by `doc_id`.
//! * `bridge`: an external process speaking JSON Lines over stdio
//!   (`{"id","text"}` in, `{"id","vec"}` out, one reply per request, in order).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::ocr;
use crate::passage::{self, Passage};
use crate::rng;

pub const EMB_MAGIC: &str = "EMB v1";

/// Dense documents-by-dimensions matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    doc_ids: Vec<String>,
    dim: usize,
    values: Vec<f64>,
    standardized: bool,
    index: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    pub fn new(doc_ids: Vec<String>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        if values.len() != doc_ids.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: doc_ids.len() * dim,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding of {}", doc_ids[i / dim])));
        }
        let mut index = HashMap::with_capacity(doc_ids.len());
        for (i, id) in doc_ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateDocId(id.clone()));
            }
        }
        Ok(EmbeddingMatrix {
            doc_ids,
            dim,
            values,
            standardized: false,
            index,
        })
    }

    pub fn from_rows(doc_ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        Self::new(doc_ids, dim, rows.into_iter().flatten().collect())
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Marks a matrix loaded from a file written after standardization.
    pub fn assume_standardized(mut self) -> Self {
        self.standardized = true;
        self
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn index_of(&self, doc_id: &str) -> Option<usize> {
        self.index.get(doc_id).copied()
    }

    pub fn get(&self, doc_id: &str) -> Option<&[f64]> {
        self.index_of(doc_id).map(|i| self.row(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// Restriction to the given ids, in the given order.
    pub fn select(&self, ids: &[String]) -> Result<Self> {
        let mut values = Vec::with_capacity(ids.len() * self.dim);
        for id in ids {
            values.extend_from_slice(self.get(id).ok_or_else(|| Error::UnknownDoc(id.clone()))?);
        }
        let mut m = Self::new(ids.to_vec(), self.dim, values)?;
        m.standardized = self.standardized;
        Ok(m)
    }

    /// Writes the `EMB v1` text format. Floats use Rust's shortest
    /// round-trip representation, so reading back is lossless.
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "{EMB_MAGIC} {} {}", self.len(), self.dim)?;
        let mut line = String::new();
        for (id, row) in self.doc_ids.iter().zip(self.rows()) {
            line.clear();
            line.push_str(id);
            line.push('\t');
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    line.push(' ');
                }
                let _ = write!(line, "{v}");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_emb(&text, path)
    }
}

fn parse_emb(text: &str, path: &Path) -> Result<EmbeddingMatrix> {
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
    let rest = header
        .strip_prefix(EMB_MAGIC)
        .ok_or_else(|| perr(1, format!("expected header starting with {EMB_MAGIC:?}")))?;
    let nums: Vec<usize> = rest
        .split_whitespace()
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| perr(1, "malformed count or dimension".into()))?;
    let [count, dim] = nums[..] else {
        return Err(perr(1, "header needs <count> <dim>".into()));
    };
    let mut ids = Vec::with_capacity(count);
    let mut values = Vec::with_capacity(count * dim);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.is_empty() {
            continue;
        }
        let (id, nums) = line
            .split_once('\t')
            .ok_or_else(|| perr(lineno, "missing tab after doc_id".into()))?;
        let before = values.len();
        for tok in nums.split_whitespace() {
            values.push(
                tok.parse::<f64>()
                    .map_err(|_| perr(lineno, format!("bad float {tok:?}")))?,
            );
        }
        if values.len() - before != dim {
            return Err(perr(
                lineno,
                format!("expected {dim} values, found {}", values.len() - before),
            ));
        }
        ids.push(id.to_string());
    }
    if ids.len() != count {
        return Err(perr(
            0,
            format!("header announces {count} records, found {}", ids.len()),
        ));
    }
    EmbeddingMatrix::new(ids, dim, values)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmbedderSpec {
    HashTest { dim: usize },
    File { path: PathBuf, dim: usize },
    Bridge { command: Vec<String>, dim: usize },
}

impl EmbedderSpec {
    pub fn dim(&self) -> usize {
        match self {
            EmbedderSpec::HashTest { dim } | EmbedderSpec::File { dim, .. } | EmbedderSpec::Bridge { dim, .. } => *dim,
        }
    }

    pub fn name(&self) -> String {
        match self {
            EmbedderSpec::HashTest { dim } => format!("hash-test-{dim}"),
            EmbedderSpec::File { path, .. } => format!("file:{}", path.display()),
            EmbedderSpec::Bridge { command, .. } => format!("bridge:{}", command.join(" ")),
        }
    }
}

/// Signed feature hashing of word unigrams into `dim` buckets, L2-normalized.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        Ok(HashEmbedder { dim })
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for tok in ocr::tokenize(text) {
            let h = rng::fnv1a(tok.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            v[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

pub struct FileEmbedder {
    vectors: EmbeddingMatrix,
}

impl FileEmbedder {
    pub fn load(path: &Path, dim: usize) -> Result<Self> {
        let vectors = EmbeddingMatrix::load(path)?;
        if vectors.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: vectors.dim(),
            });
        }
        Ok(FileEmbedder { vectors })
    }

    fn lookup(&self, p: &Passage) -> Option<&[f64]> {
        self.vectors
            .get(&format!("{}@{}", p.doc_id, p.start_sentence))
            .or_else(|| self.vectors.get(&p.doc_id))
    }
}

#[derive(Serialize)]
struct BridgeRequest<'a> {
    id: String,
    text: &'a str,
}

#[derive(Deserialize)]
struct BridgeReply {
    id: Option<serde_json::Value>,
    #[serde(default)]
    vec: Option<Vec<f64>>,
    #[serde(default)]
    error: Option<String>,
}

/// A long-running bridge subprocess. One per pipeline run.
pub struct BridgeEmbedder {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    dim: usize,
    sent: u64,
}

impl BridgeEmbedder {
    pub fn spawn(command: &[String], dim: usize) -> Result<Self> {
        let (prog, args) = command
            .split_first()
            .ok_or_else(|| Error::Embedder("empty bridge command".into()))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Embedder(format!("cannot start bridge {prog:?}: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(BridgeEmbedder {
            child,
            stdin,
            stdout,
            dim,
            sent: 0,
        })
    }

    fn embed(&mut self, passages: &[Passage]) -> Result<Vec<Vec<f64>>> {
        let base = self.sent;
        self.sent += passages.len() as u64;
        let ids: Vec<String> = (0..passages.len()).map(|i| format!("p{}", base + i as u64)).collect();
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::Embedder("bridge stdin closed".into()))?;
        let (stdout, child, dim) = (&mut self.stdout, &mut self.child, self.dim);

        let result = std::thread::scope(|s| {
            let writer = s.spawn(|| -> std::io::Result<()> {
                let mut w = BufWriter::new(&mut *stdin);
                for (id, p) in ids.iter().zip(passages) {
                    serde_json::to_writer(
                        &mut w,
                        &BridgeRequest {
                            id: id.clone(),
                            text: &p.text,
                        },
                    )?;
                    w.write_all(b"\n")?;
                }
                w.flush()
            });
            let read = read_replies(stdout, &ids, dim);
            if read.is_err() {
                // Unblock the writer: the bridge may be stalled on a full pipe.
                let _ = child.kill();
            }
            let written = writer.join();
            let out = read?;
            match written {
                Ok(Ok(())) => Ok(out),
                Ok(Err(e)) => Err(Error::Embedder(format!("writing to bridge: {e}"))),
                Err(_) => Err(Error::Embedder("bridge writer panicked".into())),
            }
        });
        if result.is_err() {
            self.stdin = None;
        }
        result
    }
}

fn read_replies(stdout: &mut BufReader<ChildStdout>, ids: &[String], dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(ids.len());
    let mut line = String::new();
    for (index, id) in ids.iter().enumerate() {
        let fail = |message: String| Error::Bridge { index, message };
        line.clear();
        let n = stdout.read_line(&mut line).map_err(|e| fail(e.to_string()))?;
        if n == 0 {
            return Err(fail(format!(
                "bridge returned {index} replies for {} passages",
                ids.len()
            )));
        }
        let reply: BridgeReply =
            serde_json::from_str(line.trim()).map_err(|e| fail(format!("malformed reply: {e}")))?;
        if let Some(err) = reply.error {
            return Err(fail(err));
        }
        if reply.id.as_ref().and_then(|v| v.as_str()) != Some(id.as_str()) {
            return Err(fail(format!("reply id {:?} does not match request {id:?}", reply.id)));
        }
        let v = reply.vec.ok_or_else(|| fail("reply has no vec".into()))?;
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        out.push(v);
    }
    Ok(out)
}

impl Drop for BridgeEmbedder {
    fn drop(&mut self) {
        drop(self.stdin.take());
        match self.child.wait() {
            Ok(status) if !status.success() => warn!("bridge exited with {status}"),
            Err(e) => warn!("waiting for bridge: {e}"),
            _ => {}
        }
    }
}

pub enum Embedder {
    Hash(HashEmbedder),
    File(FileEmbedder),
    Bridge(BridgeEmbedder),
}

impl Embedder {
    pub fn from_spec(spec: &EmbedderSpec) -> Result<Self> {
        Ok(match spec {
            EmbedderSpec::HashTest { dim } => Embedder::Hash(HashEmbedder::new(*dim)?),
            EmbedderSpec::File { path, dim } => Embedder::File(FileEmbedder::load(path, *dim)?),
            EmbedderSpec::Bridge { command, dim } => Embedder::Bridge(BridgeEmbedder::spawn(command, *dim)?),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Embedder::Hash(h) => h.dim,
            Embedder::File(f) => f.vectors.dim(),
            Embedder::Bridge(b) => b.dim,
        }
    }

    /// One vector per passage, in order.
    pub fn embed(&mut self, passages: &[Passage]) -> Result<Vec<Vec<f64>>> {
        match self {
            Embedder::Hash(h) => Ok(passages.iter().map(|p| h.embed_text(&p.text)).collect()),
            Embedder::File(f) => passages
                .iter()
                .enumerate()
                .map(|(index, p)| {
                    f.lookup(p).map(<[f64]>::to_vec).ok_or_else(|| Error::Bridge {
                        index,
                        message: format!("no vector for {}@{}", p.doc_id, p.start_sentence),
                    })
                })
                .collect(),
            Embedder::Bridge(b) => b.embed(passages),
        }
    }
}

/// Embeds a passage set with a freshly built provider.
pub fn embed_passages(passages: &passage::PassageSet, spec: &EmbedderSpec) -> Result<Vec<Vec<f64>>> {
    Embedder::from_spec(spec)?.embed(&passages.passages)
}

/// Per-dimension arithmetic mean of passage vectors.
pub fn mean_pool(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = rows.first().ok_or(Error::EmptyPool)?;
    let dim = first.len();
    let mut acc = vec![0.0; dim];
    for r in rows {
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("passage vector".into()));
        }
        acc.iter_mut().zip(r).for_each(|(a, v)| *a += v);
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Column z-scores with population standard deviation.
///
/// Columns whose standard deviation is negligible relative to their mean
/// are set to zero; their indices are returned.
pub fn standardize(m: &EmbeddingMatrix) -> Result<(EmbeddingMatrix, Vec<usize>)> {
    if m.standardized {
        return Err(Error::Standardize("matrix is already standardized".into()));
    }
    if m.len() < 2 {
        return Err(Error::Standardize(format!("need at least 2 rows, have {}", m.len())));
    }
    let n = m.len() as f64;
    let d = m.dim;
    let mut mean = vec![0.0; d];
    for r in m.rows() {
        mean.iter_mut().zip(r).for_each(|(a, v)| *a += v);
    }
    mean.iter_mut().for_each(|a| *a /= n);
    // The residual mean stays a separate low-order term: folded into `mean`
    // it would be lost below one ulp of a large column offset.
    let mut lo = vec![0.0; d];
    for r in m.rows() {
        lo.iter_mut().zip(r).zip(&mean).for_each(|((a, v), mu)| *a += v - mu);
    }
    lo.iter_mut().for_each(|a| *a /= n);
    let center = |r: &[f64], j: usize| (r[j] - mean[j]) - lo[j];
    let mut var = vec![0.0; d];
    for r in m.rows() {
        for (j, v) in var.iter_mut().enumerate() {
            let x = center(r, j);
            *v += x * x;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
    let dead: Vec<usize> = (0..d).filter(|&j| std[j] <= 1e-12 * mean[j].abs().max(1.0)).collect();
    if !dead.is_empty() {
        warn!("standardize: {} zero-variance column(s) set to zero", dead.len());
        debug!("zero-variance columns: {dead:?}");
    }
    let mut values = Vec::with_capacity(m.values.len());
    for r in m.rows() {
        for (j, sd) in std.iter().enumerate() {
            values.push(if dead.binary_search(&j).is_ok() {
                0.0
            } else {
                center(r, j) / sd
            });
        }
    }
    let mut out = EmbeddingMatrix::new(m.doc_ids.clone(), d, values)?;
    out.standardized = true;
    Ok((out, dead))
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Draws, embeds and pools passages for one prepared document.
pub fn embed_document(
    doc: &Document,
    embedder: &mut Embedder,
    draws: usize,
    len: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let set = passage::draw_passages(doc, draws, len, seed)?;
    mean_pool(&embedder.embed(&set.passages)?)
}

#[derive(Debug)]
pub struct CorpusEmbedding {
    pub matrix: EmbeddingMatrix,
    /// Documents skipped because they are shorter than one passage.
    pub skipped: Vec<String>,
}

/// Document embeddings for every prepared document of the corpus, each drawn
/// with `doc_seed(seed, doc_id)`. Rows follow ascending `doc_id`.
pub fn embed_corpus(
    corpus: &Corpus,
    embedder: &mut Embedder,
    draws: usize,
    len: usize,
    seed: u64,
) -> Result<CorpusEmbedding> {
    let docs: Vec<&Document> = corpus.documents().collect();
    let results: Vec<(String, Result<Vec<f64>>)> = match embedder {
        Embedder::Hash(h) => {
            let h = *h;
            docs.par_iter()
                .map(|d| {
                    let mut e = Embedder::Hash(h);
                    (
                        d.doc_id.clone(),
                        embed_document(d, &mut e, draws, len, rng::doc_seed(seed, &d.doc_id)),
                    )
                })
                .collect()
        }
        _ => docs
            .iter()
            .map(|d| {
                (
                    d.doc_id.clone(),
                    embed_document(d, embedder, draws, len, rng::doc_seed(seed, &d.doc_id)),
                )
            })
            .collect(),
    };
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (id, r) in results {
        match r {
            Ok(v) => {
                ids.push(id);
                rows.push(v);
            }
            Err(Error::DocumentTooShort { .. }) => skipped.push(id),
            Err(e) => return Err(e),
        }
    }
    if ids.is_empty() {
        return Err(Error::NoEligibleDocuments(len));
    }
    Ok(CorpusEmbedding {
        matrix: EmbeddingMatrix::from_rows(ids, rows)?,
        skipped,
    })
}
