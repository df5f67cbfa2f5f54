use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use intertext::classify::{self, LinearModel, TrainParams};
use intertext::corpus::{Corpus, Document};
use intertext::embedding::{standardize, EmbeddingMatrix};
use intertext::passage::{mask_names, segment, NAME_TOKEN};
use intertext::similarity::{self, MaskPolicy, SimilarityMatrix};
use intertext::synth;
use intertext::temporal::{decade, downsample_year, stratified_sample, Bounds, YearSet};
use intertext::Error;

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("d{i:03}")).collect()
}

fn matrix(max_n: usize, max_d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2..=max_n, 1..=max_d).prop_flat_map(|(n, d)| prop::collection::vec(prop::collection::vec(-10.0..10.0f64, d), n))
}

/// Rows with per-column offsets and scales spanning several orders of magnitude.
fn skewed_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (3..20usize, 1..10usize).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(-1e4..1e4f64, d),
            prop::collection::vec(-3i32..4, d),
            prop::collection::vec(prop::collection::vec(-1.0..1.0f64, d), n),
        )
            .prop_map(|(offsets, scales, rows)| {
                rows.into_iter()
                    .map(|r| {
                        r.iter()
                            .enumerate()
                            .map(|(j, x)| offsets[j] + 10f64.powi(scales[j]) * x)
                            .collect()
                    })
                    .collect()
            })
    })
}

fn corpus_with_authors(authors: &[usize]) -> Corpus {
    let docs = authors
        .iter()
        .enumerate()
        .map(|(i, a)| Document::new(format!("d{i:03}"), format!("a{a}"), 1850, "Text."));
    Corpus::from_documents(docs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardized_columns_have_unit_moments(rows in skewed_matrix()) {
        let n = rows.len() as f64;
        let m = EmbeddingMatrix::from_rows(ids(rows.len()), rows).unwrap();
        let (z, dead) = standardize(&m).unwrap();
        prop_assert!(z.is_standardized());
        for j in 0..z.dim() {
            let col: Vec<f64> = z.rows().map(|r| r[j]).collect();
            if dead.contains(&j) {
                prop_assert!(col.iter().all(|&x| x == 0.0));
                continue;
            }
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9, "column {j} mean {mean}");
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-9, "column {j} std {}", var.sqrt());
        }
    }

    #[test]
    fn similarity_is_symmetric_and_bounded(rows in matrix(12, 8)) {
        let m = EmbeddingMatrix::from_rows(ids(rows.len()), rows).unwrap().assume_standardized();
        let s = similarity::build_unmasked(&m);
        // A zero row has no cosine; nothing else to check.
        prop_assume!(s.is_ok());
        let s = s.unwrap();
        for i in 0..s.len() {
            prop_assert!((s.value(i, i) - 1.0).abs() < 1e-12);
            for j in 0..s.len() {
                prop_assert_eq!(s.value(i, j).to_bits(), s.value(j, i).to_bits());
                prop_assert!(s.value(i, j).abs() <= 1.0 + 1e-12);
                prop_assert!(!s.is_masked(i, j));
            }
        }
    }

    #[test]
    fn same_author_mask_matches_authors(
        rows in matrix(10, 4),
        authors in prop::collection::vec(0..4usize, 10),
    ) {
        let n = rows.len();
        let authors = &authors[..n];
        let m = EmbeddingMatrix::from_rows(ids(n), rows).unwrap().assume_standardized();
        let c = corpus_with_authors(authors);
        let s = similarity::build(&m, &c, MaskPolicy::SameAuthor);
        prop_assume!(s.is_ok());
        let s = s.unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(s.is_masked(i, j), authors[i] == authors[j]);
                prop_assert_eq!(s.get(i, j).is_none(), s.is_masked(i, j));
            }
        }
        let back = SimilarityMatrix::from_bytes(&s.to_bytes()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn neighbors_are_sorted_unmasked_and_exact(
        rows in matrix(15, 5),
        authors in prop::collection::vec(0..6usize, 15),
        k in 1..20usize,
    ) {
        let n = rows.len();
        let m = EmbeddingMatrix::from_rows(ids(n), rows).unwrap().assume_standardized();
        let c = corpus_with_authors(&authors[..n]);
        let s = similarity::build(&m, &c, MaskPolicy::SameAuthor);
        prop_assume!(s.is_ok());
        let s = s.unwrap();
        for (i, id) in s.doc_ids().iter().enumerate() {
            let got = s.neighbors(id, k).unwrap();
            let mut all: Vec<(String, f64)> = (0..n)
                .filter(|&j| j != i && !s.is_masked(i, j))
                .map(|j| (s.doc_ids()[j].clone(), s.value(i, j)))
                .collect();
            all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            all.truncate(k);
            prop_assert_eq!(got, all);
        }
    }

    #[test]
    fn embedding_file_round_trips(rows in matrix(10, 6)) {
        let m = EmbeddingMatrix::from_rows(ids(rows.len()), rows).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.emb");
        m.save(&p).unwrap();
        let back = EmbeddingMatrix::load(&p).unwrap();
        prop_assert_eq!(back.doc_ids(), m.doc_ids());
        for (a, b) in back.rows().zip(m.rows()) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn downsampling_respects_bounds(
        len in 0..120usize,
        min in 0..30usize,
        extra in 0..40usize,
        seed in any::<u64>(),
    ) {
        let bounds = Bounds::new(min, (min + extra).max(1)).unwrap();
        let items: Vec<usize> = (0..len).collect();
        let got = downsample_year(&items, bounds, seed);
        prop_assert_eq!(&got, &downsample_year(&items, bounds, seed));
        match got {
            YearSet::Excluded { size } => {
                prop_assert!(len < bounds.min);
                prop_assert_eq!(size, len);
            }
            YearSet::Kept(kept) => {
                prop_assert!(len >= bounds.min);
                prop_assert_eq!(kept.len(), len.min(bounds.max));
                prop_assert!(kept.windows(2).all(|w| w[0] < w[1]), "subset in input order");
            }
        }
    }

    #[test]
    fn stratified_sample_matches_decades(
        members in prop::collection::vec(1800..1900i32, 1..30),
        pool_years in prop::collection::vec(1800..1900i32, 0..120),
        seed in any::<u64>(),
        repeat in 0..5usize,
    ) {
        let pool: Vec<(usize, i32)> = pool_years.iter().copied().enumerate().collect();
        let need = members.iter().fold(BTreeMap::new(), |mut m, &y| {
            *m.entry(decade(y)).or_insert(0usize) += 1;
            m
        });
        let have = pool.iter().fold(BTreeMap::new(), |mut m, &(_, y)| {
            *m.entry(decade(y)).or_insert(0usize) += 1;
            m
        });
        let feasible = need.iter().all(|(d, k)| have.get(d).copied().unwrap_or(0) >= *k);
        match stratified_sample(&members, &pool, seed, repeat) {
            Ok(picked) => {
                prop_assert!(feasible);
                let distinct: BTreeSet<usize> = picked.iter().copied().collect();
                prop_assert_eq!(distinct.len(), picked.len());
                let got = picked.iter().fold(BTreeMap::new(), |mut m, &i| {
                    *m.entry(decade(pool[i].1)).or_insert(0usize) += 1;
                    m
                });
                prop_assert_eq!(got, need);
            }
            Err(Error::InsufficientPool { decade, needed, available }) => {
                prop_assert!(!feasible);
                prop_assert_eq!(need[&decade], needed);
                prop_assert_eq!(have.get(&decade).copied().unwrap_or(0), available);
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn folds_partition_and_stratify(
        n_pos in 0..60usize,
        n_neg in 0..200usize,
        folds in 2..10usize,
        seed in any::<u64>(),
    ) {
        let f = classify::stratified_folds(n_pos, n_neg, folds, seed);
        prop_assert_eq!(f.len(), folds);
        let mut all: Vec<usize> = f.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n_pos + n_neg).collect::<Vec<_>>());
        let pos: Vec<usize> = f.iter().map(|v| v.iter().filter(|&&i| i < n_pos).count()).collect();
        let neg: Vec<usize> = f.iter().map(|v| v.iter().filter(|&&i| i >= n_pos).count()).collect();
        for counts in [pos, neg] {
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn positive_rescaling_never_flips_a_prediction(
        seed in any::<u64>(),
        alpha in 1e-6..1e6f64,
    ) {
        let (m, pos, neg) = synth::two_clusters(40, 6, 0.5, 1.0, seed).unwrap();
        let params = TrainParams { lambda: 0.01, epochs: 10, seed };
        let model = classify::train(&m, &pos, &neg, params).unwrap();
        let again = classify::train(&m, &pos, &neg, params).unwrap();
        prop_assert_eq!(&model.weights, &again.weights);
        let scaled = LinearModel::new(model.weights.iter().map(|w| w * alpha).collect(), model.bias * alpha);
        let a = classify::predict(&model, &m).unwrap();
        let b = classify::predict(&scaled, &m).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.positive, y.positive, "{} margin {}", x.doc_id, x.margin);
        }
    }

    #[test]
    fn masking_names_is_idempotent(
        sentences in prop::collection::vec(prop::collection::vec("[a-z]{1,8}", 1..8), 1..6),
        cuts in prop::collection::vec((0..400usize, 1..12usize), 0..8),
    ) {
        let text = sentences
            .iter()
            .map(|words| {
                let mut s = words.join(" ");
                s[..1].make_ascii_uppercase();
                s + "."
            })
            .collect::<Vec<_>>()
            .join(" ");
        let len = text.chars().count();
        let mut spans: Vec<(usize, usize)> = Vec::new();
        let mut sorted = cuts.clone();
        sorted.sort_unstable();
        for (start, width) in sorted {
            let start = start % len;
            let end = (start + width).min(len);
            if spans.last().is_none_or(|&(_, e)| start >= e) && start < end {
                spans.push((start, end));
            }
        }
        let doc = Document::new("d", "a", 1850, text).with_name_spans(spans.clone()).unwrap();
        let seg = segment(&doc).unwrap();
        let once = mask_names(&seg).unwrap();
        let twice = mask_names(&once).unwrap();
        prop_assert_eq!(&once, &twice);
        let pieces: usize = seg
            .sentences
            .iter()
            .map(|s| spans.iter().filter(|&&(a, b)| a < s.end && b > s.start).count())
            .sum();
        let tokens: usize = once.sentences.iter().map(|s| s.text.matches(NAME_TOKEN).count()).sum();
        prop_assert_eq!(tokens, pieces);
        if spans.is_empty() {
            prop_assert_eq!(&once.sentences, &seg.sentences);
        }
    }
}
