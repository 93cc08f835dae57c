use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ecgnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecgnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = ecgnet(args);
    assert!(
        out.status.success(),
        "ecgnet {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(String::from)
        .collect()
}

const SMALL: [&str; 10] = [
    "--seed", "5", "--leads", "I,II", "--nsteps", "500", "--fs", "250", "--folds", "5",
];

fn with<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    SMALL.iter().copied().chain(extra.iter().copied()).collect()
}

/// Synthesizes 30 records and trains round 0 for two epochs.
fn trained() -> (TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let train = dir.path().join("train");
    ok(&with(&[
        "synth",
        "--out",
        data.to_str().unwrap(),
        "--n",
        "30",
        "--classes",
        "normal,af,pvc",
        "--n-leads",
        "2",
    ]));
    let manifest = data.join("manifest.csv");
    ok(&with(&[
        "train",
        "--data",
        manifest.to_str().unwrap(),
        "--out",
        train.to_str().unwrap(),
        "--no-cv",
        "--epochs",
        "2",
        "--base-channels",
        "4",
        "--blocks",
        "1",
    ]));
    (dir, manifest, train)
}

#[test]
fn usage_errors_exit_with_status_2() {
    let out = ecgnet(&["synth"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));
    assert_eq!(ecgnet(&["transmogrify"]).status.code(), Some(2));
    assert_eq!(
        ecgnet(&["train", "--epochs", "many"]).status.code(),
        Some(2)
    );
}

#[test]
fn runtime_errors_exit_with_status_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = ecgnet(&[
        "train",
        "--data",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: train:"));
}

#[test]
fn synth_is_deterministic_and_honours_config_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&with(&[
            "synth",
            "--out",
            d.to_str().unwrap(),
            "--n",
            "6",
            "--n-leads",
            "2",
        ]));
    }
    assert_eq!(lines(&a.join("manifest.csv")).len(), 7);
    for entry in std::fs::read_dir(a.join("records")).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            std::fs::read(a.join("records").join(&name)).unwrap(),
            std::fs::read(b.join("records").join(&name)).unwrap()
        );
    }

    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "seed = 5\n[synth]\nn_records = 4\nn_leads = 2\n[data]\nnsteps = 300\nfs = 250.0\n",
    )
    .unwrap();
    let c = dir.path().join("c");
    ok(&[
        "synth",
        "--config",
        config.to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
    ]);
    assert_eq!(lines(&c.join("manifest.csv")).len(), 5);
    let d = dir.path().join("d");
    ok(&[
        "synth",
        "--config",
        config.to_str().unwrap(),
        "--n",
        "3",
        "--out",
        d.to_str().unwrap(),
    ]);
    assert_eq!(lines(&d.join("manifest.csv")).len(), 4);
    let saved = std::fs::read_to_string(d.join("run_config.toml")).unwrap();
    assert!(saved.contains("n_records = 3"), "{saved}");
}

#[test]
fn unknown_lead_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecgnet(&[
        "train",
        "--leads",
        "I,X9",
        "--data",
        "m.csv",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("X9"));
}

#[test]
fn train_evaluate_explain_outputs() {
    let (dir, manifest, train) = trained();
    let round = train.join("round_00");
    for f in [
        "model.ckpt",
        "history.csv",
        "thresholds.csv",
        "test_report.csv",
    ] {
        assert!(round.join(f).is_file(), "{f}");
    }
    assert_eq!(lines(&round.join("history.csv")).len(), 3);
    assert_eq!(lines(&round.join("thresholds.csv")).len(), 10);
    let report = lines(&train.join("report.csv"));
    assert_eq!(report.len(), 11);
    assert_eq!(report[0], "class,Precision,Recall,F1,AUC,Accuracy");
    assert!(report[10].starts_with("AVG,"));

    let ckpt = round.join("model.ckpt");
    let eval = dir.path().join("eval");
    ok(&[
        "evaluate",
        "--data",
        manifest.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--thresholds",
        round.join("thresholds.csv").to_str().unwrap(),
        "--records",
        "test",
        "--out",
        eval.to_str().unwrap(),
    ]);
    assert_eq!(lines(&eval.join("report.csv")).len(), 11);
    // 30 records in 5 folds: 6 in the test fold.
    assert_eq!(lines(&eval.join("scores.csv")).len(), 7);
    assert!(std::fs::read_to_string(eval.join("confusion.svg"))
        .unwrap()
        .contains("<svg"));
    // Scoring the held-out fold with the saved thresholds reproduces the training report.
    assert_eq!(
        lines(&eval.join("report.csv")),
        lines(&round.join("test_report.csv"))
    );

    let expl = dir.path().join("explain");
    ok(&[
        "explain",
        "--data",
        manifest.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--records",
        "test",
        "--mc",
        "10",
        "--background",
        "5",
        "--out",
        expl.to_str().unwrap(),
    ]);
    let population = lines(&expl.join("population.csv"));
    assert_eq!(population[0], "class,I,II");
    assert_eq!(population.len(), 11);
    for row in &population[1..] {
        let sum: f64 = row
            .split(',')
            .skip(1)
            .map(|v| v.parse::<f64>().unwrap())
            .sum();
        assert!((sum - 1.0).abs() < 1e-6, "{row}");
    }
    let patients = lines(&expl.join("patients.csv"));
    assert_eq!(patients.len(), 7);
    assert_eq!(std::fs::read_dir(expl.join("patients")).unwrap().count(), 6);
}

#[test]
fn baseline_comparison_table() {
    let (dir, manifest, train) = trained();
    let out = dir.path().join("baseline");
    ok(&with(&[
        "baseline",
        "--data",
        manifest.to_str().unwrap(),
        "--no-cv",
        "--deep-report",
        train.join("report.csv").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    let table = lines(&out.join("comparison.csv"));
    assert_eq!(table[0], "model,class,Precision,Recall,F1,AUC,Accuracy");
    assert_eq!(table.len(), 1 + 3 * 10);
    for (i, model) in ["deep", "lr", "mlp"].iter().enumerate() {
        let block = &table[1 + 10 * i..11 + 10 * i];
        assert!(block.iter().all(|r| r.starts_with(&format!("{model},"))));
        assert!(block[9].starts_with(&format!("{model},AVG,")));
    }
    assert_eq!(lines(&out.join("features.csv")).len(), 31);
    assert_eq!(lines(&out.join("lr_scores.csv")).len(), 7);

    let out = ecgnet(&with(&[
        "baseline",
        "--data",
        manifest.to_str().unwrap(),
        "--model",
        "rf",
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rf"));
}
