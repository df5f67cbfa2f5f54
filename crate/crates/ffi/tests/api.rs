use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use intertext::corpus::Corpus;
use intertext::embedding::{embed_corpus, standardize, Embedder, EmbedderSpec};
use intertext::passage::prepare_corpus;
use intertext::similarity::{self, MaskPolicy};
use intertext::temporal::{self, Bounds, CurveConfig};
use intertext_ffi::*;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn cs(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn p(path: &Path) -> CString {
    cs(path.to_str().unwrap())
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(it_last_error()) }.to_str().unwrap().to_string()
}

struct Setup {
    _dir: tempfile::TempDir,
    emb_path: PathBuf,
    corpus_path: PathBuf,
    corpus: Corpus,
}

fn setup() -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let report = intertext::corpus::ingest(&fx.join("metadata.tsv"), &fx.join("texts"), &Default::default()).unwrap();
    let (corpus, _) = intertext::corpus::dedup(&report.corpus);
    let prepared = prepare_corpus(&corpus).unwrap();
    let mut e = Embedder::from_spec(&EmbedderSpec::HashTest { dim: 32 }).unwrap();
    let emb = embed_corpus(&prepared, &mut e, 10, 3, 42).unwrap();
    let emb_path = dir.path().join("emb.emb");
    emb.matrix.save(&emb_path).unwrap();
    let corpus_path = dir.path().join("corpus.json");
    corpus.save_json(&corpus_path).unwrap();
    Setup {
        _dir: dir,
        emb_path,
        corpus_path,
        corpus,
    }
}

#[test]
fn results_match_the_library() {
    let s = setup();
    unsafe {
        let mut corpus = ptr::null_mut();
        assert_eq!(it_corpus_load(p(&s.corpus_path).as_ptr(), &mut corpus), ItStatus::Ok);
        assert_eq!(it_corpus_len(corpus), 11);

        let mut raw = ptr::null_mut();
        assert_eq!(
            it_embeddings_load(p(&s.emb_path).as_ptr(), false, &mut raw),
            ItStatus::Ok
        );
        let (n, d) = (it_embeddings_len(raw), it_embeddings_dim(raw));
        assert_eq!(d, 32);

        let mut unstd = ptr::null_mut();
        assert_eq!(it_similarity_build(raw, corpus, &mut unstd), ItStatus::Data);
        assert!(unstd.is_null());
        assert!(last_error().contains("standardized"), "{}", last_error());

        let mut z = ptr::null_mut();
        let mut dead = usize::MAX;
        assert_eq!(it_embeddings_standardize(raw, &mut z, &mut dead), ItStatus::Ok);
        let mut sim = ptr::null_mut();
        assert_eq!(it_similarity_build(z, corpus, &mut sim), ItStatus::Ok);
        assert_eq!(it_similarity_len(sim), n);

        let native_m = intertext::embedding::EmbeddingMatrix::load(&s.emb_path).unwrap();
        let (native_z, native_dead) = standardize(&native_m).unwrap();
        assert_eq!(dead, native_dead.len());
        let native = similarity::build(&native_z, &s.corpus, MaskPolicy::SameAuthor).unwrap();
        for i in 0..n {
            for j in 0..n {
                let (mut v, mut masked) = (f64::NAN, false);
                assert_eq!(it_similarity_get(sim, i, j, &mut v, &mut masked), ItStatus::Ok);
                assert_eq!(v.to_bits(), native.value(i, j).to_bits());
                assert_eq!(masked, native.is_masked(i, j));
            }
        }

        let (mut idx, mut vals, mut count) = ([0usize; 4], [0f64; 4], 0usize);
        let f01 = cs("f01");
        assert_eq!(
            it_similarity_neighbors(sim, f01.as_ptr(), 4, idx.as_mut_ptr(), vals.as_mut_ptr(), &mut count),
            ItStatus::Ok
        );
        let expect = native.neighbors("f01", 4).unwrap();
        assert_eq!(count, expect.len());
        for (k, (id, v)) in expect.iter().enumerate() {
            assert_eq!(native.doc_ids()[idx[k]], *id);
            assert_eq!(vals[k], *v);
        }

        let mut params = it_curve_params_default();
        assert_eq!((params.window, params.repeats, params.seed), (30, 10, 42));
        params.window = 3;
        params.repeats = 3;
        params.min_per_year = 1;
        params.max_per_year = 2;
        let mut curve = ptr::null_mut();
        let q = cs("canon");
        assert_eq!(
            it_curve_compute(sim, corpus, q.as_ptr(), &params, &mut curve),
            ItStatus::Ok
        );
        let cfg = CurveConfig {
            window: 3,
            repeats: 3,
            bounds: Bounds::new(1, 2).unwrap(),
            seed: 42,
        };
        let docs = intertext::corpus::filter_by_labels(&s.corpus, "canon").unwrap();
        let native_curve = temporal::offset_curve(&docs, &native, &s.corpus, &cfg).unwrap();
        assert_eq!(it_curve_len(curve), 7);
        for (k, np) in native_curve.points.iter().enumerate() {
            let mut pt = std::mem::zeroed::<ItCurvePoint>();
            assert_eq!(it_curve_point(curve, k, &mut pt), ItStatus::Ok);
            assert_eq!(pt.offset, np.offset);
            assert_eq!(pt.n_pairs, np.n_pairs);
            match np.mean {
                Some(m) => assert_eq!(pt.mean, m),
                None => assert!(pt.mean.is_nan()),
            }
        }
        let mut arg = 99;
        assert_eq!(it_curve_argmax(curve, &mut arg), ItStatus::Ok);
        assert_eq!(Some(arg), native_curve.argmax());

        let csv = s.emb_path.with_file_name("curve.csv");
        assert_eq!(it_curve_write_csv(curve, p(&csv).as_ptr()), ItStatus::Ok);
        let mut expect_csv = Vec::new();
        native_curve.write_csv(&mut expect_csv).unwrap();
        assert_eq!(std::fs::read(&csv).unwrap(), expect_csv);

        let mut pt = std::mem::zeroed::<ItCurvePoint>();
        assert_eq!(it_curve_point(curve, 7, &mut pt), ItStatus::InvalidArgument);

        it_curve_free(curve);
        it_similarity_free(sim);
        it_embeddings_free(z);
        it_embeddings_free(raw);
        it_corpus_free(corpus);
    }
}

#[test]
fn matrix_survives_a_file_round_trip() {
    let ids = [c"x".as_ptr(), c"y".as_ptr(), c"z".as_ptr()];
    let vals = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
    let dir = tempfile::tempdir().unwrap();
    let path = p(&dir.path().join("m.sim"));
    unsafe {
        let (mut m, mut z, mut s, mut back) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(
            it_embeddings_new(ids.as_ptr(), 3, 2, vals.as_ptr(), &mut m),
            ItStatus::Ok
        );
        assert_eq!(it_embeddings_standardize(m, &mut z, ptr::null_mut()), ItStatus::Ok);
        assert_eq!(it_similarity_build(z, ptr::null(), &mut s), ItStatus::Ok);
        assert_eq!(it_similarity_save(s, path.as_ptr()), ItStatus::Ok);
        assert_eq!(it_similarity_load(path.as_ptr(), &mut back), ItStatus::Ok);
        let mut i = 0;
        assert_eq!(it_similarity_index_of(back, c"z".as_ptr(), &mut i), ItStatus::Ok);
        assert_eq!(i, 2);
        for a in 0..3 {
            for b in 0..3 {
                let (mut v1, mut v2, mut m1, mut m2) = (0.0, 0.0, true, true);
                it_similarity_get(s, a, b, &mut v1, &mut m1);
                it_similarity_get(back, a, b, &mut v2, &mut m2);
                assert_eq!((v1.to_bits(), m1), (v2.to_bits(), m2));
                assert!(!m1);
            }
        }
        it_similarity_free(back);
        it_similarity_free(s);
        it_embeddings_free(z);
        it_embeddings_free(m);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut c = ptr::null_mut();
        assert_eq!(
            it_corpus_load(c"/nonexistent/corpus.json".as_ptr(), &mut c),
            ItStatus::Io
        );
        assert!(last_error().contains("/nonexistent/corpus.json"));
        assert!(c.is_null());

        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(it_corpus_load(bad.as_ptr().cast(), &mut c), ItStatus::InvalidUtf8);
        assert_eq!(it_corpus_load(c"x".as_ptr(), ptr::null_mut()), ItStatus::NullArgument);
        assert_eq!(last_error(), "out is null");

        let dir = tempfile::tempdir().unwrap();
        let junk = dir.path().join("junk.sim");
        std::fs::write(&junk, b"not a matrix").unwrap();
        let mut s = ptr::null_mut();
        assert_eq!(it_similarity_load(p(&junk).as_ptr(), &mut s), ItStatus::Format);

        let corpus_path = dir.path().join("c.json");
        Corpus::from_documents([
            intertext::corpus::Document::new("a", "x", 1850, "One."),
            intertext::corpus::Document::new("b", "y", 1851, "Two."),
        ])
        .unwrap()
        .save_json(&corpus_path)
        .unwrap();
        assert_eq!(it_corpus_load(p(&corpus_path).as_ptr(), &mut c), ItStatus::Ok);
        let ids = [c"a".as_ptr(), c"b".as_ptr()];
        let vals = [1.0, 2.0, 3.0, 5.0];
        let (mut m, mut z) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(
            it_embeddings_new(ids.as_ptr(), 2, 2, vals.as_ptr(), &mut m),
            ItStatus::Ok
        );
        assert_eq!(
            it_embeddings_new(ids.as_ptr(), 2, 2, ptr::null(), &mut z),
            ItStatus::NullArgument
        );
        assert_eq!(it_embeddings_standardize(m, &mut z, ptr::null_mut()), ItStatus::Ok);
        assert_eq!(it_similarity_build(z, c, &mut s), ItStatus::Ok);

        let (mut idx, mut v, mut n) = ([0usize; 1], [0f64; 1], 0);
        assert_eq!(
            it_similarity_neighbors(s, c"q".as_ptr(), 1, idx.as_mut_ptr(), v.as_mut_ptr(), &mut n),
            ItStatus::UnknownDoc
        );
        assert_eq!(
            it_similarity_neighbors(s, c"a".as_ptr(), 0, idx.as_mut_ptr(), v.as_mut_ptr(), &mut n),
            ItStatus::InvalidArgument
        );
        let (mut val, mut masked) = (0.0, false);
        assert_eq!(
            it_similarity_get(s, 2, 0, &mut val, &mut masked),
            ItStatus::InvalidArgument
        );

        let params = it_curve_params_default();
        let mut curve = ptr::null_mut();
        assert_eq!(
            it_curve_compute(s, c, c"canon OR".as_ptr(), &params, &mut curve),
            ItStatus::InvalidArgument
        );
        assert_eq!(
            it_curve_compute(s, c, c"sci-fi".as_ptr(), &params, &mut curve),
            ItStatus::InvalidArgument
        );
        let mut bad_params = params;
        bad_params.min_per_year = 9;
        bad_params.max_per_year = 3;
        assert_eq!(
            it_curve_compute(s, c, ptr::null(), &bad_params, &mut curve),
            ItStatus::InvalidArgument
        );

        // Defaults need 25 documents a year: every year is excluded.
        assert_eq!(it_curve_compute(s, c, ptr::null(), &params, &mut curve), ItStatus::Ok);
        let mut off = 0;
        assert_eq!(it_curve_argmax(curve, &mut off), ItStatus::Data);
        assert_eq!(last_error(), "curve has no data");

        assert_eq!(it_similarity_len(ptr::null()), 0);
        it_curve_free(curve);
        it_corpus_free(c);
        it_similarity_free(s);
        it_embeddings_free(z);
        it_embeddings_free(m);
        it_corpus_free(ptr::null_mut());
    }
}

#[test]
fn ingest_applies_dedup() {
    let fx = fixtures();
    let (md, tx) = (p(&fx.join("metadata.tsv")), p(&fx.join("texts")));
    unsafe {
        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(it_corpus_ingest(md.as_ptr(), tx.as_ptr(), true, &mut a), ItStatus::Ok);
        assert_eq!(it_corpus_ingest(md.as_ptr(), tx.as_ptr(), false, &mut b), ItStatus::Ok);
        assert_eq!((it_corpus_len(a), it_corpus_len(b)), (11, 12));
        it_corpus_free(a);
        it_corpus_free(b);
    }
}
