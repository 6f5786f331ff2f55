//! The `rfq` binary end to end: exit codes, emitted files and golden outputs.

mod common;

use common::{check_golden, quick_models, rfq, rfq_ok};
use rfq_core::io::{load_model_file, read_dataset, ModelKind};

#[test]
fn simulate_writes_the_default_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let text = rfq_ok(dir.path(), &["simulate", "--seed", "42"]);
    assert_eq!(text.lines().count(), 10_006);
    let head: String = text.lines().take(11).map(|l| format!("{l}\n")).collect();
    check_golden("simulate_seed42_head.csv", &head).unwrap();

    rfq_ok(dir.path(), &["simulate", "--out", "d.csv"]);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("d.csv")).unwrap(),
        text
    );
    assert_eq!(
        read_dataset(&dir.path().join("d.csv")).unwrap().len(),
        10_005
    );
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["bogus"],
        vec!["simulate", "--bogus"],
        vec!["train", "--data", "x.csv"],
        vec!["train", "--data", "x.csv", "--model", "forest"],
        vec!["quote", "--data", "x.csv"],
    ] {
        let out = rfq(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn runtime_errors_exit_with_one_and_say_why() {
    let dir = tempfile::tempdir().unwrap();
    let out = rfq(dir.path(), &["featurize", "--data", "missing.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));

    std::fs::write(dir.path().join("bad.csv"), "Time,Bond\n1,2\n").unwrap();
    let out = rfq(dir.path(), &["featurize", "--data", "bad.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv"));

    std::fs::write(dir.path().join("cfg.toml"), "n_record = 5\n").unwrap();
    let out = rfq(dir.path(), &["simulate", "--config", "cfg.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_record"));
}

#[test]
fn config_and_flag_seeds() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), "seed = 7\nn_records = 200\n").unwrap();
    let from_config = rfq_ok(dir.path(), &["simulate", "--config", "cfg.toml"]);
    assert_eq!(from_config.lines().count(), 201);
    let from_flag = rfq_ok(
        dir.path(),
        &["simulate", "--n-records", "200", "--seed", "7"],
    );
    assert_eq!(from_config, from_flag);
    let overridden = rfq_ok(
        dir.path(),
        &["simulate", "--config", "cfg.toml", "--seed", "8"],
    );
    assert_ne!(from_config, overridden);
}

#[test]
fn train_quote_and_compete() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    quick_models(d);
    let bnt = load_model_file(&d.join("bnt.json")).unwrap();
    assert_eq!(bnt.payload.kind(), ModelKind::Bnt);
    assert_eq!(bnt.seed, 42);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("bnt.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["hyperparameters"]["initial_relative_stiffness"], 6.0);
    assert_eq!(
        load_model_file(&d.join("next_mid.json"))
            .unwrap()
            .payload
            .kind(),
        ModelKind::NextMid
    );

    let quotes = rfq_ok(
        d,
        &[
            "quote",
            "--data",
            "data.csv",
            "--models",
            "bnt.json,next_mid.json",
            "--curves",
            "curves.csv",
        ],
    );
    assert_eq!(quotes.lines().count(), 6);
    assert_eq!(
        std::fs::read_to_string(d.join("curves.csv"))
            .unwrap()
            .lines()
            .count(),
        2011
    );
    let offsets: String = quotes
        .lines()
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            format!("{},{},{},{}\n", c[0], c[1], c[2], c[5])
        })
        .collect();
    check_golden("quote_offsets.csv", &offsets).unwrap();

    let compete = rfq_ok(
        d,
        &[
            "compete",
            "--data",
            "data.csv",
            "--models",
            "bnt.json,next_mid.json",
        ],
    );
    let competitors: String = compete
        .lines()
        .filter(|l| !l.contains(",us,"))
        .map(|l| format!("{l}\n"))
        .collect();
    check_golden("competitor_quotes.csv", &competitors).unwrap();
    // the order of model paths does not matter
    let swapped = rfq_ok(
        d,
        &[
            "compete",
            "--data",
            "data.csv",
            "--models",
            "next_mid.json,bnt.json",
        ],
    );
    assert_eq!(compete, swapped);
}

#[test]
fn featurize_curve_and_boundary_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    rfq_ok(d, &["simulate", "--n-records", "1500", "--out", "data.csv"]);
    let features = rfq_ok(d, &["featurize", "--data", "data.csv"]);
    assert_eq!(features.lines().count(), 1501);
    let curves = rfq_ok(
        d,
        &[
            "curve",
            "--data",
            "data.csv",
            "--features",
            "response",
            "--bins",
            "10",
        ],
    );
    assert!(curves.lines().count() >= 2);
    rfq_ok(
        d,
        &[
            "train", "--data", "data.csv", "--model", "bnt", "--n-iter", "2", "--out", "m.json",
        ],
    );
    let grid = rfq_ok(
        d,
        &[
            "boundary",
            "--model",
            "m.json",
            "--feature-i",
            "response",
            "--feature-j",
            "mom5",
            "--n",
            "5",
        ],
    );
    assert_eq!(grid.lines().count(), 26);
    let out = rfq(
        d,
        &[
            "boundary",
            "--model",
            "m.json",
            "--feature-i",
            "nope",
            "--feature-j",
            "mom5",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}
