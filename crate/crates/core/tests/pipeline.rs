mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use intertext::config::Overrides;
use intertext::pipeline::{run_pipeline, sha256_file, RunManifest, StageStatus};
use intertext::Error;

const STAGES: [&str; 12] = [
    "ingest",
    "ocr",
    "sample",
    "embed",
    "pool",
    "standardize",
    "matrix",
    "offset-curve",
    "trajectory",
    "compare-canon",
    "sanity",
    "classify",
];

fn statuses(m: &RunManifest) -> Vec<(&str, StageStatus)> {
    m.stages.iter().map(|s| (s.name.as_str(), s.status)).collect()
}

fn all(status: StageStatus) -> Vec<(&'static str, StageStatus)> {
    STAGES.iter().map(|s| (*s, status)).collect()
}

#[test]
fn second_run_is_fully_cached() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::fixture_copy(&tmp.path().join("in"));
    let out = tmp.path().join("run");
    let first = run_pipeline(&cfg, &out, &Overrides::default()).unwrap();
    assert_eq!(statuses(&first), all(StageStatus::Ran));
    let second = run_pipeline(&cfg, &out, &Overrides::default()).unwrap();
    assert_eq!(statuses(&second), all(StageStatus::Cached));
    assert_eq!(first.outputs, second.outputs);
}

#[test]
fn changed_parameter_reruns_only_downstream() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::fixture_copy(&tmp.path().join("in"));
    let out = tmp.path().join("run");
    run_pipeline(&cfg, &out, &Overrides::default()).unwrap();
    let o = Overrides {
        window: Some(3),
        ..Default::default()
    };
    let m = run_pipeline(&cfg, &out, &o).unwrap();
    for s in &m.stages {
        let expect = match s.name.as_str() {
            "offset-curve" | "compare-canon" => StageStatus::Ran,
            _ => StageStatus::Cached,
        };
        assert_eq!(s.status, expect, "stage {}", s.name);
    }
}

#[test]
fn damaged_output_is_rebuilt() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::fixture_copy(&tmp.path().join("in"));
    let out = tmp.path().join("run");
    let first = run_pipeline(&cfg, &out, &Overrides::default()).unwrap();
    fs::write(out.join("similarity.sim"), b"junk").unwrap();
    let second = run_pipeline(&cfg, &out, &Overrides::default()).unwrap();
    assert_eq!(second.stage("matrix").unwrap().status, StageStatus::Ran);
    // Rebuilt bytes are identical, so consumers stay cached.
    assert_eq!(second.stage("offset-curve").unwrap().status, StageStatus::Cached);
    assert_eq!(first.outputs["similarity.sim"], second.outputs["similarity.sim"]);
}

#[test]
fn missing_input_fails_before_any_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::fixture_copy(&tmp.path().join("in"));
    let lexicon = tmp.path().join("in/lexicon.txt");
    fs::remove_file(&lexicon).unwrap();
    let out = tmp.path().join("run");
    match run_pipeline(&cfg, &out, &Overrides::default()) {
        Err(Error::Config(msg)) => assert!(msg.contains(&lexicon.display().to_string()), "{msg}"),
        other => panic!("expected config error, got {other:?}"),
    }
    assert!(!out.join("corpus.json").exists());
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn failed_stage_leaves_marker_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::fixture_copy(&tmp.path().join("in"));
    let bridge = common::mock_bridge();
    common::set_embed(
        &cfg,
        &format!("kind = \"bridge\"\ncommand = [\"python3\", \"{bridge}\", \"64\", \"--error-at\", \"3\"]\ndim = 64\n"),
    );
    let out = tmp.path().join("run");
    let err = run_pipeline(&cfg, &out, &Overrides::default()).unwrap_err();
    match &err {
        Error::Stage { stage, source } => {
            assert_eq!(stage, "embed");
            assert!(matches!(**source, Error::Bridge { index: 3, .. }), "{source}");
        }
        other => panic!("expected stage error, got {other}"),
    }
    assert_eq!(err.exit_code(), 2);
    let marker = fs::read_to_string(out.join("embed.failed")).unwrap();
    assert!(marker.contains("model failure"), "{marker}");
    let m = RunManifest::load(&out.join("manifest.json")).unwrap();
    let st = statuses(&m);
    assert_eq!(&st[..3], &all(StageStatus::Ran)[..3]);
    assert_eq!(st[3], ("embed", StageStatus::Failed));
    assert_eq!(st.len(), 4);

    // Fixing the bridge reruns the failed stage and removes the marker.
    common::set_embed(
        &cfg,
        &format!("kind = \"bridge\"\ncommand = [\"python3\", \"{bridge}\", \"64\"]\ndim = 64\n"),
    );
    let m = run_pipeline(&cfg, &out, &Overrides::default()).unwrap();
    assert_eq!(m.stage("ingest").unwrap().status, StageStatus::Cached);
    assert_eq!(m.stage("embed").unwrap().status, StageStatus::Ran);
    assert!(!out.join("embed.failed").exists());
}

#[test]
fn manifest_covers_every_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::fixture_copy(&tmp.path().join("in"));
    let out = tmp.path().join("run");
    let m = run_pipeline(&cfg, &out, &Overrides::default()).unwrap();
    assert_eq!(m, RunManifest::load(&out.join("manifest.json")).unwrap());

    let on_disk: BTreeSet<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    let listed: BTreeSet<String> = m.outputs.keys().cloned().collect();
    assert_eq!(on_disk, listed);
    for (name, digest) in &m.outputs {
        assert_eq!(&sha256_file(&out.join(name)).unwrap(), digest, "{name}");
    }
    assert_eq!(fs::read(&cfg).unwrap(), fs::read(out.join("config.toml")).unwrap());
    assert_eq!(m.config_sha256, m.outputs["config.toml"]);
    assert!(m.inputs.contains_key("metadata.tsv"));
    assert!(m.inputs.contains_key("lexicon.txt"));
    assert!(m.inputs.keys().any(|k| k.starts_with("texts")));
    assert_eq!(
        m.seeds.keys().map(String::as_str).collect::<Vec<_>>(),
        ["classify", "sample", "sanity", "temporal"]
    );
    for s in &m.stages {
        assert!(!s.outputs.is_empty(), "stage {} lists no outputs", s.name);
        assert_eq!(s.key.len(), 64);
    }
}

fn seeds_for(cfg: &Path, o: &Overrides) -> RunManifest {
    let tmp = tempfile::tempdir().unwrap();
    run_pipeline(cfg, tmp.path(), o).unwrap()
}

#[test]
fn command_line_beats_config_beats_default() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::fixture_copy(&tmp.path().join("in"));
    let defaults = seeds_for(&cfg, &Overrides::default());
    assert_eq!(defaults.seeds["sample"], intertext::rng::stage_seed(42, "sample"));

    let text = fs::read_to_string(&cfg).unwrap();
    fs::write(&cfg, text.replace("seed = 42", "seed = 9") + "\n[seeds]\nsanity = 5\n").unwrap();
    let file = seeds_for(&cfg, &Overrides::default());
    assert_eq!(file.seeds["sample"], intertext::rng::stage_seed(9, "sample"));
    assert_eq!(file.seeds["sanity"], 5);

    let cli = seeds_for(
        &cfg,
        &Overrides {
            seed: Some(3),
            ..Default::default()
        },
    );
    assert_eq!(cli.seeds["sample"], intertext::rng::stage_seed(3, "sample"));
    assert_eq!(cli.seeds["sanity"], 5, "a pinned stage seed survives a master override");
}

#[test]
fn invalid_override_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::fixture_copy(&tmp.path().join("in"));
    let o = Overrides {
        threshold: Some(1.5),
        ..Default::default()
    };
    let err = run_pipeline(&cfg, &tmp.path().join("run"), &o).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert_eq!(err.exit_code(), 1);
}
