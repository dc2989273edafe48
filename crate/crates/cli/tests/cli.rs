use std::path::Path;
use std::process::{Command, Output};

use pointnet_kan::config::KEYS;
use pointnet_kan::models::{Model, ModelConfig};

fn pkan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pkan"))
        .args(args)
        .output()
        .expect("run pkan")
}

fn ok(args: &[&str]) -> String {
    let out = pkan(args);
    assert!(
        out.status.success(),
        "pkan {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &[&str] = &[
    "--set",
    "model.input_dim=3",
    "--set",
    "model.num_classes=4",
    "--set",
    "model.encoder_widths=16",
    "--set",
    "model.degree=2",
    "--set",
    "train.epochs=2",
    "--set",
    "train.batch_size=16",
];

fn synth_small(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out", s(dir), "--train", "8", "--test", "3", "--points", "32", "--seed", "4"];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn count_default_classifier() {
    let out = ok(&["count"]);
    let expected = Model::build(&ModelConfig::classification(), 0).unwrap().param_count();
    assert!(out.contains(&format!("total_params\t{expected}")), "{out}");
    assert!(out.contains("convention:"));
    assert!(out.contains("kan(n=4)"));
}

#[test]
fn help_lists_every_key_with_provenance() {
    let out = ok(&["--help"]);
    for k in KEYS {
        let line = out
            .lines()
            .find(|l| l.trim_start().starts_with(k.key))
            .unwrap_or_else(|| panic!("{} missing from --help", k.key));
        assert!(line.contains(&format!("[{}]", k.provenance.as_str())), "{line}");
    }
}

#[test]
fn unknown_key_exits_with_config_code() {
    let out = pkan(&["--set", "model.widht=3", "count"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error[config]:"), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn missing_dataset_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--dataset", "/nonexistent/pkan-ds", "--checkpoint"];
    let ck = dir.path().join("m.pkan");
    args.push(s(&ck));
    args.extend_from_slice(SMALL);
    let out = pkan(&args);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[data]:"));
}

#[test]
fn train_is_reproducible_and_eval_checks_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ds = d.join("ds");
    synth_small(&ds, &[]);
    let mut bytes = Vec::new();
    for run in ["a", "b"] {
        let ck = d.join(format!("{run}.pkan"));
        let mut args = vec!["train", "--dataset", s(&ds), "--checkpoint", s(&ck), "--seed", "9"];
        args.extend_from_slice(SMALL);
        ok(&args);
        bytes.push((
            std::fs::read(&ck).unwrap(),
            std::fs::read(ck.with_extension("csv")).unwrap(),
        ));
    }
    assert_eq!(bytes[0], bytes[1]);
    let log = String::from_utf8(bytes[0].1.clone()).unwrap();
    assert_eq!(log.lines().count(), 3);

    let ck = d.join("a.pkan");
    let report = ok(&["eval", "--checkpoint", s(&ck), "--dataset", s(&ds)]);
    assert!(report.contains("overall_accuracy"));

    let ds6 = d.join("ds6");
    synth_small(&ds6, &["--normals"]);
    let out = pkan(&["eval", "--checkpoint", s(&ck), "--dataset", s(&ds6)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[config]:"));

    let pred = d.join("pred.txt");
    ok(&["predict", "--checkpoint", s(&ck), "--dataset", s(&ds), "--out", s(&pred)]);
    assert_eq!(std::fs::read_to_string(&pred).unwrap().lines().count(), 12);

    let curve = ok(&["robustness", "--checkpoint", s(&ck), "--dataset", s(&ds), "--keeps", "32,16,8", "--seed", "1"]);
    assert_eq!(curve, ok(&["robustness", "--checkpoint", s(&ck), "--dataset", s(&ds), "--keeps", "32,16,8", "--seed", "1"]));
    assert_eq!(curve.lines().count(), 4);
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = ok(&["synth", "--kind", "mug", "--out", s(&dir.path().join("a")), "--train", "3", "--test", "1", "--seed", "2"]);
    let b = ok(&["synth", "--kind", "mug", "--out", s(&dir.path().join("b")), "--train", "3", "--test", "1", "--seed", "2"]);
    let hash = |o: &str| o.lines().find(|l| l.starts_with("sha256")).unwrap().to_string();
    assert_eq!(hash(&a), hash(&b));
}

#[test]
fn part_seg_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ds = d.join("mug");
    ok(&["synth", "--kind", "mug", "--out", s(&ds), "--train", "6", "--test", "2", "--points", "32"]);
    let ck = d.join("seg.pkan");
    ok(&[
        "train",
        "--dataset",
        s(&ds),
        "--checkpoint",
        s(&ck),
        "--set",
        "model.branch=part_seg",
        "--set",
        "model.encoder_widths=8,16",
        "--set",
        "model.decoder_widths=8",
        "--set",
        "model.one_hot_size=1",
        "--set",
        "model.num_classes=2",
        "--set",
        "train.epochs=1",
        "--set",
        "train.batch_size=3",
    ]);
    let report = ok(&["eval", "--checkpoint", s(&ck), "--dataset", s(&ds)]);
    assert!(report.contains("iou/mug"), "{report}");
}

#[test]
fn ablate_emits_one_row_per_setting() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    synth_small(&ds, &[]);
    let mut args = vec!["ablate", "--dataset", s(&ds), "--degrees", "2..3", "--set", "train.epochs=1"];
    args.extend_from_slice(&SMALL[..8]);
    let out = ok(&args);
    assert_eq!(out.lines().count(), 3, "{out}");
}
