mod common;

use std::time::{Duration, Instant};

use intertext::embedding::{Embedder, EmbedderSpec};
use intertext::passage::Passage;
use intertext::Error;

const DIM: usize = 8;

fn passages(n: usize) -> Vec<Passage> {
    (0..n)
        .map(|i| Passage {
            doc_id: format!("d{}", i % 3),
            start_sentence: i,
            sentences: vec![format!("Sentence number {i}.")],
            text: format!("Sentence number {i}."),
        })
        .collect()
}

fn bridge(extra: &[&str]) -> Embedder {
    let mut command = vec!["python3".to_string(), common::mock_bridge(), DIM.to_string()];
    command.extend(extra.iter().map(|s| s.to_string()));
    Embedder::from_spec(&EmbedderSpec::Bridge { command, dim: DIM }).unwrap()
}

#[test]
fn replies_arrive_in_order() {
    let mut e = bridge(&[]);
    assert_eq!(e.dim(), DIM);
    let p = passages(50);
    let first = e.embed(&p).unwrap();
    assert_eq!(first.len(), 50);
    assert!(first.iter().all(|v| v.len() == DIM));
    // Same process, new ids, same vectors for the same texts.
    let again = e.embed(&p[10..20]).unwrap();
    assert_eq!(again, first[10..20]);
    assert_ne!(first[0], first[1]);
}

#[test]
fn large_batches_do_not_deadlock() {
    let mut e = bridge(&[]);
    let mut p = passages(3000);
    for x in &mut p {
        x.text = x.text.repeat(40);
    }
    assert_eq!(e.embed(&p).unwrap().len(), 3000);
}

#[test]
fn early_exit_is_a_count_mismatch() {
    let mut e = bridge(&["--stop-after", "4"]);
    match e.embed(&passages(10)) {
        Err(Error::Bridge { index: 4, message }) => assert!(message.contains("4 replies for 10"), "{message}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn error_object_names_the_passage() {
    let mut e = bridge(&["--error-at", "2"]);
    match e.embed(&passages(5)) {
        Err(Error::Bridge { index: 2, message }) => assert_eq!(message, "model failure"),
        other => panic!("unexpected {other:?}"),
    }
    assert!(e.embed(&passages(1)).is_err(), "a failed bridge is not reused");
}

#[test]
fn wrong_dimension_is_rejected() {
    let mut e = bridge(&["--bad-dim-at", "1"]);
    match e.embed(&passages(3)) {
        Err(Error::DimensionMismatch { expected, got }) => assert_eq!((expected, got), (DIM, DIM + 1)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn mismatched_id_is_rejected() {
    let mut e = bridge(&["--wrong-id-at", "0"]);
    match e.embed(&passages(3)) {
        Err(Error::Bridge { index: 0, message }) => assert!(message.contains("does not match"), "{message}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn failure_mid_batch_returns_promptly() {
    // The bridge keeps answering after the error; the pipe must not stall us.
    let mut e = bridge(&["--error-at", "1"]);
    let mut p = passages(5000);
    for x in &mut p {
        x.text = x.text.repeat(40);
    }
    let t = Instant::now();
    assert!(matches!(e.embed(&p), Err(Error::Bridge { index: 1, .. })));
    drop(e);
    assert!(t.elapsed() < Duration::from_secs(30));
}

#[test]
fn missing_program_is_an_embedder_error() {
    let spec = EmbedderSpec::Bridge {
        command: vec!["/nonexistent/bridge".into()],
        dim: DIM,
    };
    assert!(matches!(Embedder::from_spec(&spec), Err(Error::Embedder(_))));
    let empty = EmbedderSpec::Bridge {
        command: vec![],
        dim: DIM,
    };
    assert!(matches!(Embedder::from_spec(&empty), Err(Error::Embedder(_))));
}
