mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn intertext(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_intertext"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn ok(args: &[&str]) -> String {
    let o = intertext(args);
    assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&intertext(&["--help"])), 0);
    assert_eq!(code(&intertext(&["temporal", "curve", "--help"])), 0);
    let v = ok(&["--version"]);
    assert!(v.starts_with("intertext "), "{v}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&intertext(&[])), 1);
    assert_eq!(code(&intertext(&["frobnicate"])), 1);
    assert_eq!(code(&intertext(&["ingest", "--metadata", "m.tsv"])), 1);
    assert_eq!(
        code(&intertext(&["plot", "--kind", "pie", "x.csv", "--out", "x.svg"])),
        1
    );
}

#[test]
fn data_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = intertext(&[
        "ingest",
        "--metadata",
        "/nonexistent.tsv",
        "--texts",
        "/nonexistent",
        "--out",
        "c.json",
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent.tsv"));

    let csv = tmp.path().join("bad.csv");
    fs::write(&csv, "x,y\n1,2\n").unwrap();
    let svg = tmp.path().join("bad.svg");
    let o = intertext(&["plot", "--kind", "bar", s(&csv), "--out", s(&svg)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema"));
    assert!(!svg.exists());
}

#[test]
fn step_by_step_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = common::fixtures();
    let t = |name: &str| tmp.path().join(name);

    let out = ok(&[
        "ingest",
        "--metadata",
        s(&fx.join("metadata.tsv")),
        "--texts",
        s(&fx.join("texts")),
        "--out",
        s(&t("corpus.json")),
    ]);
    assert!(out.starts_with("11 documents"), "{out}");
    assert!(out.contains("1 duplicates removed"), "{out}");

    let out = ok(&[
        "ocr",
        "filter",
        "--corpus",
        s(&t("corpus.json")),
        "--lexicon",
        s(&fx.join("lexicon.txt")),
        "--out",
        s(&t("kept.json")),
        "--retention",
        s(&t("retention.csv")),
    ]);
    assert_eq!(out.trim(), "kept 10 of 11 documents at threshold 0.95");
    assert!(fs::read_to_string(t("retention.csv")).unwrap().contains("1852,2,3"));

    ok(&[
        "embed",
        "--corpus",
        s(&t("kept.json")),
        "--dim",
        "32",
        "--draws",
        "10",
        "--len",
        "4",
        "--out",
        s(&t("emb.emb")),
    ]);
    ok(&[
        "matrix",
        "build",
        "--embeddings",
        s(&t("emb.emb")),
        "--corpus",
        s(&t("kept.json")),
        "--out",
        s(&t("sim.sim")),
    ]);

    let out = ok(&[
        "--jobs",
        "2",
        "matrix",
        "neighbors",
        "--matrix",
        s(&t("sim.sim")),
        "--doc",
        "f01",
        "-k",
        "3",
    ]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    let sims: Vec<f64> = lines
        .iter()
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(sims.windows(2).all(|w| w[0] >= w[1]));
    // f04 shares an author with f01 and is masked.
    assert!(lines.iter().all(|l| !l.starts_with("f01\t") && !l.starts_with("f04\t")));

    let o = intertext(&["matrix", "neighbors", "--matrix", s(&t("sim.sim")), "--doc", "nope"]);
    assert_eq!(code(&o), 2);

    ok(&[
        "matrix",
        "export-csv",
        "--matrix",
        s(&t("sim.sim")),
        "--out",
        s(&t("pairs.csv")),
    ]);
    let pairs = fs::read_to_string(t("pairs.csv")).unwrap();
    // 10 docs, 45 pairs, 2 same-author pairs masked.
    assert_eq!(pairs.lines().count(), 1 + 43);

    ok(&[
        "temporal",
        "curve",
        "--matrix",
        s(&t("sim.sim")),
        "--corpus",
        s(&t("kept.json")),
        "--window",
        "2",
        "--repeats",
        "2",
        "--min-per-year",
        "1",
        "--max-per-year",
        "2",
        "--query",
        "canon",
        "--out",
        s(&t("curve.csv")),
        "--svg",
        s(&t("curve.svg")),
    ]);
    let curve = fs::read_to_string(t("curve.csv")).unwrap();
    assert!(curve.starts_with("offset,mean,se,n_pairs\n"));
    assert!(fs::read_to_string(t("curve.svg")).unwrap().contains("class=\"line\""));

    let o = intertext(&[
        "temporal",
        "curve",
        "--matrix",
        s(&t("sim.sim")),
        "--corpus",
        s(&t("kept.json")),
        "--query",
        "canonical",
        "--out",
        s(&t("x.csv")),
    ]);
    assert_eq!(code(&o), 1, "unknown label is a usage error");

    ok(&[
        "plot",
        "--kind",
        "offset-curve",
        s(&t("curve.csv")),
        "--out",
        s(&t("replot.svg")),
    ]);
    assert_eq!(fs::read(t("curve.svg")).unwrap(), fs::read(t("replot.svg")).unwrap());
}

#[test]
fn pipeline_reports_stage_status() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::fixture_copy(&tmp.path().join("in"));
    let out = tmp.path().join("run");
    let first = ok(&["pipeline", s(&cfg), "--out", s(&out)]);
    assert_eq!(first.lines().count(), 12);
    assert!(first.lines().all(|l| l.ends_with(" ran")), "{first}");
    let second = ok(&["pipeline", s(&cfg), "--out", s(&out)]);
    assert!(second.lines().all(|l| l.ends_with(" cached")), "{second}");

    let o = intertext(&["pipeline", s(&cfg), "--out", s(&out), "--threshold", "2"]);
    assert_eq!(code(&o), 1);
    fs::remove_file(tmp.path().join("in/metadata.tsv")).unwrap();
    let o = intertext(&["pipeline", s(&cfg), "--out", s(&tmp.path().join("other"))]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("input not found"));
}
