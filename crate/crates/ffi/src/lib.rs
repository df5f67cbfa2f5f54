//! C ABI for the intertext library.
//!
//! Every fallible function returns an [`ItStatus`]. On failure a message is
//! available from [`it_last_error`] on the calling thread until its next
//! call into the library. Objects are opaque handles owned by the caller and
//! released with the matching `_free` function; results are written through
//! out-pointers only on success.
//!
//! Pointer arguments must be null or valid for the access described by the
//! function. Strings are NUL-terminated UTF-8. Panics never cross the
//! boundary; they surface as [`ItStatus::Panic`].
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;

use intertext::corpus::{self, Corpus, IngestOptions};
use intertext::embedding::{self, EmbeddingMatrix};
use intertext::similarity::{self, MaskPolicy, SimilarityMatrix};
use intertext::temporal::{self, Bounds, CurveConfig, OffsetCurve};
use intertext::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Format = 5,
    UnknownDoc = 6,
    /// Input data rejected by an analysis (too short, unstandardized, ...).
    Data = 7,
    Panic = 8,
}

pub struct ItCorpus(Corpus);

pub struct ItEmbeddings(EmbeddingMatrix);

pub struct ItSimilarity(SimilarityMatrix);

pub struct ItCurve(OffsetCurve);

/// Parameters of an offset curve. See [`it_curve_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ItCurveParams {
    pub window: i32,
    pub repeats: usize,
    pub min_per_year: usize,
    pub max_per_year: usize,
    pub seed: u64,
}

/// One offset of a curve. `mean` and `se` are NaN where no pair contributed.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ItCurvePoint {
    pub offset: i32,
    pub mean: f64,
    pub se: f64,
    pub n_pairs: usize,
    pub repeats_with_data: usize,
}

struct Fail(ItStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidArgument(_) | Error::Config(_) | Error::UnknownLabel(_) | Error::LabelQuery(_) => {
                ItStatus::InvalidArgument
            }
            Error::Io { .. } => ItStatus::Io,
            Error::Format { .. } | Error::Parse { .. } | Error::Json(_) | Error::Schema { .. } => ItStatus::Format,
            Error::UnknownDoc(_) => ItStatus::UnknownDoc,
            _ => ItStatus::Data,
        };
        Fail(code, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', "?")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn run(f: impl FnOnce() -> Result<(), Fail>) -> ItStatus {
    let outcome = panic::catch_unwind(AssertUnwindSafe(f));
    let (status, msg) = match outcome {
        Ok(Ok(())) => (ItStatus::Ok, String::new()),
        Ok(Err(Fail(code, msg))) => (code, msg),
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            (ItStatus::Panic, format!("internal error: {msg}"))
        }
    };
    set_last_error(&msg);
    status
}

fn null(name: &str) -> Fail {
    Fail(ItStatus::NullArgument, format!("{name} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(ItStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(name))
}

fn invalid(msg: String) -> Fail {
    Fail(ItStatus::InvalidArgument, msg)
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn it_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn it_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// Corpus

/// Loads a corpus written by `intertext ingest`.
#[no_mangle]
pub unsafe extern "C" fn it_corpus_load(path: *const c_char, out: *mut *mut ItCorpus) -> ItStatus {
    run(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let c = Corpus::load_json(Path::new(path))?;
        *out = Box::into_raw(Box::new(ItCorpus(c)));
        Ok(())
    })
}

/// Reads a metadata table and its text directory. Row errors are skipped;
/// `dedup` keeps only the earliest edition of each work.
#[no_mangle]
pub unsafe extern "C" fn it_corpus_ingest(
    metadata: *const c_char,
    texts: *const c_char,
    dedup: bool,
    out: *mut *mut ItCorpus,
) -> ItStatus {
    run(|| {
        let metadata = str_arg(metadata, "metadata")?;
        let texts = str_arg(texts, "texts")?;
        let out = out_arg(out, "out")?;
        let report = corpus::ingest(Path::new(metadata), Path::new(texts), &IngestOptions::default())?;
        let c = if dedup {
            corpus::dedup(&report.corpus).0
        } else {
            report.corpus
        };
        *out = Box::into_raw(Box::new(ItCorpus(c)));
        Ok(())
    })
}

/// Number of documents; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn it_corpus_len(c: *const ItCorpus) -> usize {
    c.as_ref().map_or(0, |c| c.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn it_corpus_free(c: *mut ItCorpus) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

// Embeddings

/// Builds a raw (unstandardized) matrix from `n` ids and `n * dim`
/// row-major values.
#[no_mangle]
pub unsafe extern "C" fn it_embeddings_new(
    ids: *const *const c_char,
    n: usize,
    dim: usize,
    values: *const f64,
    out: *mut *mut ItEmbeddings,
) -> ItStatus {
    run(|| {
        let out = out_arg(out, "out")?;
        if n > 0 && (ids.is_null() || values.is_null()) {
            return Err(null(if ids.is_null() { "ids" } else { "values" }));
        }
        let len = n.checked_mul(dim).ok_or_else(|| invalid("n * dim overflows".into()))?;
        let mut names = Vec::with_capacity(n);
        for i in 0..n {
            names.push(str_arg(*ids.add(i), "ids[i]")?.to_string());
        }
        let vals = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(values, len).to_vec()
        };
        let m = EmbeddingMatrix::new(names, dim, vals)?;
        *out = Box::into_raw(Box::new(ItEmbeddings(m)));
        Ok(())
    })
}

/// Loads an embedding file. With `standardized` the values are taken as
/// already standardized.
#[no_mangle]
pub unsafe extern "C" fn it_embeddings_load(
    path: *const c_char,
    standardized: bool,
    out: *mut *mut ItEmbeddings,
) -> ItStatus {
    run(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let mut m = EmbeddingMatrix::load(Path::new(path))?;
        if standardized {
            m = m.assume_standardized();
        }
        *out = Box::into_raw(Box::new(ItEmbeddings(m)));
        Ok(())
    })
}

/// Column z-scores of `m` as a new handle. `dead_columns`, when not null,
/// receives the number of zero-variance columns.
#[no_mangle]
pub unsafe extern "C" fn it_embeddings_standardize(
    m: *const ItEmbeddings,
    out: *mut *mut ItEmbeddings,
    dead_columns: *mut usize,
) -> ItStatus {
    run(|| {
        let m = handle(m, "m")?;
        let out = out_arg(out, "out")?;
        let (z, dead) = embedding::standardize(&m.0)?;
        if let Some(d) = dead_columns.as_mut() {
            *d = dead.len();
        }
        *out = Box::into_raw(Box::new(ItEmbeddings(z)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn it_embeddings_len(m: *const ItEmbeddings) -> usize {
    m.as_ref().map_or(0, |m| m.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn it_embeddings_dim(m: *const ItEmbeddings) -> usize {
    m.as_ref().map_or(0, |m| m.0.dim())
}

#[no_mangle]
pub unsafe extern "C" fn it_embeddings_free(m: *mut ItEmbeddings) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

// Similarity

/// Cosine similarity over standardized embeddings. With a corpus, pairs
/// sharing an author are masked; a null corpus gives an unmasked matrix.
#[no_mangle]
pub unsafe extern "C" fn it_similarity_build(
    m: *const ItEmbeddings,
    corpus: *const ItCorpus,
    out: *mut *mut ItSimilarity,
) -> ItStatus {
    run(|| {
        let m = handle(m, "m")?;
        let out = out_arg(out, "out")?;
        let s = match corpus.as_ref() {
            Some(c) => similarity::build(&m.0, &c.0, MaskPolicy::SameAuthor)?,
            None => similarity::build_unmasked(&m.0)?,
        };
        *out = Box::into_raw(Box::new(ItSimilarity(s)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn it_similarity_load(path: *const c_char, out: *mut *mut ItSimilarity) -> ItStatus {
    run(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let s = SimilarityMatrix::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(ItSimilarity(s)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn it_similarity_save(s: *const ItSimilarity, path: *const c_char) -> ItStatus {
    run(|| {
        let s = handle(s, "s")?;
        let path = str_arg(path, "path")?;
        Ok(s.0.save(Path::new(path))?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn it_similarity_len(s: *const ItSimilarity) -> usize {
    s.as_ref().map_or(0, |s| s.0.len())
}

/// Row index of `doc_id`.
#[no_mangle]
pub unsafe extern "C" fn it_similarity_index_of(
    s: *const ItSimilarity,
    doc_id: *const c_char,
    index: *mut usize,
) -> ItStatus {
    run(|| {
        let s = handle(s, "s")?;
        let id = str_arg(doc_id, "doc_id")?;
        let index = out_arg(index, "index")?;
        *index = s.0.index_of(id).ok_or_else(|| Error::UnknownDoc(id.to_string()))?;
        Ok(())
    })
}

/// Entry `(i, j)`. Masked entries report `masked = true` and value 0.
#[no_mangle]
pub unsafe extern "C" fn it_similarity_get(
    s: *const ItSimilarity,
    i: usize,
    j: usize,
    value: *mut f64,
    masked: *mut bool,
) -> ItStatus {
    run(|| {
        let s = handle(s, "s")?;
        let value = out_arg(value, "value")?;
        let masked = out_arg(masked, "masked")?;
        let n = s.0.len();
        if i >= n || j >= n {
            return Err(invalid(format!("index ({i}, {j}) outside a {n}x{n} matrix")));
        }
        *value = s.0.value(i, j);
        *masked = s.0.is_masked(i, j);
        Ok(())
    })
}

/// Up to `k` nearest unmasked neighbors of `doc_id`, best first. The caller
/// provides room for `k` entries in `indices` and `values`; `count`
/// receives the number written.
#[no_mangle]
pub unsafe extern "C" fn it_similarity_neighbors(
    s: *const ItSimilarity,
    doc_id: *const c_char,
    k: usize,
    indices: *mut usize,
    values: *mut f64,
    count: *mut usize,
) -> ItStatus {
    run(|| {
        let s = handle(s, "s")?;
        let id = str_arg(doc_id, "doc_id")?;
        let count = out_arg(count, "count")?;
        if indices.is_null() || values.is_null() {
            return Err(null(if indices.is_null() { "indices" } else { "values" }));
        }
        let found = s.0.neighbors(id, k)?;
        for (slot, (nid, v)) in found.iter().enumerate() {
            *indices.add(slot) = s.0.index_of(nid).expect("neighbor ids come from the matrix");
            *values.add(slot) = *v;
        }
        *count = found.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn it_similarity_free(s: *mut ItSimilarity) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

// Offset curves

/// Library defaults: window 30, 10 repeats, 25 to 50 documents per year, seed 42.
#[no_mangle]
pub extern "C" fn it_curve_params_default() -> ItCurveParams {
    ItCurveParams {
        window: temporal::DEFAULT_WINDOW,
        repeats: temporal::DEFAULT_REPEATS,
        min_per_year: temporal::DEFAULT_MIN_PER_YEAR,
        max_per_year: temporal::DEFAULT_MAX_PER_YEAR,
        seed: intertext::config::DEFAULT_SEED,
    }
}

/// Mean similarity by publication offset for the documents matching
/// `query` (a label expression such as `"canon AND NOT adventure"`), or
/// for every document in the matrix when `query` is null.
#[no_mangle]
pub unsafe extern "C" fn it_curve_compute(
    s: *const ItSimilarity,
    corpus: *const ItCorpus,
    query: *const c_char,
    params: *const ItCurveParams,
    out: *mut *mut ItCurve,
) -> ItStatus {
    run(|| {
        let s = handle(s, "s")?;
        let c = handle(corpus, "corpus")?;
        let query = opt_str_arg(query, "query")?;
        let p = handle(params, "params")?;
        let out = out_arg(out, "out")?;
        let docs = match query {
            Some(q) => corpus::filter_by_labels(&c.0, q)?,
            None => s.0.doc_ids().to_vec(),
        };
        let cfg = CurveConfig {
            window: p.window,
            repeats: p.repeats,
            bounds: Bounds::new(p.min_per_year, p.max_per_year)?,
            seed: p.seed,
        };
        let curve = temporal::offset_curve(&docs, &s.0, &c.0, &cfg)?;
        *out = Box::into_raw(Box::new(ItCurve(curve)));
        Ok(())
    })
}

/// Number of offsets, `2 * window + 1`.
#[no_mangle]
pub unsafe extern "C" fn it_curve_len(c: *const ItCurve) -> usize {
    c.as_ref().map_or(0, |c| c.0.points.len())
}

#[no_mangle]
pub unsafe extern "C" fn it_curve_point(c: *const ItCurve, index: usize, point: *mut ItCurvePoint) -> ItStatus {
    run(|| {
        let c = handle(c, "c")?;
        let point = out_arg(point, "point")?;
        let p =
            c.0.points
                .get(index)
                .ok_or_else(|| invalid(format!("index {index} outside {} points", c.0.points.len())))?;
        *point = ItCurvePoint {
            offset: p.offset,
            mean: p.mean.unwrap_or(f64::NAN),
            se: p.se.unwrap_or(f64::NAN),
            n_pairs: p.n_pairs,
            repeats_with_data: p.repeats_with_data,
        };
        Ok(())
    })
}

/// Offset with the highest mean. Fails with `Data` when no offset has data.
#[no_mangle]
pub unsafe extern "C" fn it_curve_argmax(c: *const ItCurve, offset: *mut i32) -> ItStatus {
    run(|| {
        let c = handle(c, "c")?;
        let offset = out_arg(offset, "offset")?;
        *offset =
            c.0.argmax()
                .ok_or_else(|| Fail(ItStatus::Data, "curve has no data".into()))?;
        Ok(())
    })
}

/// Writes the curve as CSV `offset,mean,se,n_pairs`.
#[no_mangle]
pub unsafe extern "C" fn it_curve_write_csv(c: *const ItCurve, path: *const c_char) -> ItStatus {
    run(|| {
        let c = handle(c, "c")?;
        let path = str_arg(path, "path")?;
        let mut buf = Vec::new();
        c.0.write_csv(&mut buf).expect("writing to memory");
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn it_curve_free(c: *mut ItCurve) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}
