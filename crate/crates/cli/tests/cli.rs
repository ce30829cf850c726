use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn stmr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stmr"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = stmr(args);
    assert!(
        out.status.success(),
        "stmr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn info_lists_layers_and_accuracy() {
    let model = fixtures().join("mlp");
    let data = fixtures().join("mnist1k.nnd");
    let text = ok(&["info", "--model", s(&model), "--dataset", s(&data)]);
    assert!(text.contains("weights: 52544"));
    assert!(text.contains("samples: 1000"));
    assert!(text.contains("accuracy: 0.9470"));
}

#[test]
fn tmr_eval_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let model = fixtures().join("mlp");
    let data = fixtures().join("mnist1k.nnd");
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        ok(&[
            "tmr-eval",
            "--model",
            s(&model),
            "--dataset",
            s(&data),
            "--out",
            s(&out),
            "--seed",
            "5",
            "--trials",
            "2",
            "--ber",
            "1e-4,1e-3",
            "--calibration",
            "20",
        ]);
        for f in ["report.json", "curves.csv", "overhead.csv", "summary.txt"] {
            assert!(out.join(f).exists(), "{f} missing");
        }
        reports.push(std::fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn config_file_and_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("c.json");
    let body = serde_json::json!({
        "model_path": fixtures().join("mlp"),
        "dataset_path": fixtures().join("mnist1k.nnd"),
        "ber_grid": [1e-3],
        "strategies": ["random", "magnitude"],
        "trials": 2,
    });
    std::fs::write(&config, body.to_string()).unwrap();
    let out = tmp.path().join("o");
    ok(&[
        "sensitivity",
        "--config",
        s(&config),
        "--out",
        s(&out),
        "--bit",
        "random",
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["bit_mode"], "uniform");
    assert_eq!(report["cells"].as_array().unwrap().len(), 2);
}

#[test]
fn score_then_targeted_inject_and_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let model = fixtures().join("mlp");
    let data = fixtures().join("mnist1k.nnd");
    let scores = tmp.path().join("scores");
    ok(&[
        "score",
        "--model",
        s(&model),
        "--dataset",
        s(&data),
        "--calibration",
        "10",
        "--out",
        s(&scores),
    ]);
    assert_eq!(
        std::fs::metadata(scores.join("scores.bin")).unwrap().len(),
        52544 * 8
    );

    let hit = tmp.path().join("hit");
    ok(&[
        "inject",
        "--model",
        s(&model),
        "--ber",
        "1e-4",
        "--strategy",
        "xai",
        "--scores",
        s(&scores),
        "--out",
        s(&hit),
    ]);
    let log = std::fs::read_to_string(hit.join("applied.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 5);
    assert!(log.contains("\"bit_index\":29"));

    // Replaying the recorded plan against the original reproduces the mutated model.
    let replay = tmp.path().join("replay");
    ok(&[
        "inject",
        "--model",
        s(&model),
        "--plan",
        s(&hit.join("applied.jsonl")),
        "--out",
        s(&replay),
    ]);
    assert_eq!(
        std::fs::read(hit.join("weights.bin")).unwrap(),
        std::fs::read(replay.join("weights.bin")).unwrap()
    );

    // Against the mutated model the recorded before-values no longer match.
    let out = stmr(&[
        "inject",
        "--model",
        s(&hit),
        "--plan",
        s(&hit.join("applied.jsonl")),
        "--out",
        s(&tmp.path().join("x")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("plan expects"));
}

#[test]
fn errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    let out = stmr(&["info", "--model", s(&missing)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let model = fixtures().join("mlp");
    let out = stmr(&[
        "inject",
        "--model",
        s(&model),
        "--ber",
        "1e-4",
        "--strategy",
        "xai",
        "--out",
        s(&missing),
    ]);
    assert!(!out.status.success(), "xai without scores must fail");

    let data = fixtures().join("mnist1k.nnd");
    let out = stmr(&[
        "tmr-eval",
        "--model",
        s(&model),
        "--dataset",
        s(&data),
        "--out",
        s(&missing),
        "--ber",
        "1e-3,1e-4",
    ]);
    assert!(!out.status.success(), "unsorted grid must fail");
}
