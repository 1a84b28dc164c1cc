use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn egohoi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_egohoi")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/corpus")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const NOISY: &str = r#"
triggers = ["oracle", "30", "60"]
iou_thresholds = [0.01, 0.1, 0.3]
seed = 4

[recognizer_noise]
miss_prob = 0.2
lead_frames = [0, 40]
false_positive_rate = 0.01

[detector_noise]
box_sigma = 3.0
confidence_sigma = 0.05
drop_prob = 0.05
"#;

#[test]
fn evaluate_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    std::fs::write(&cfg, NOISY).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = egohoi(&["evaluate", "--config", s(&cfg), "--corpus", s(&fixture()), "--out", s(out), "--threads", "4"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["results.json", "events.jsonl"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("results.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 9);
    assert_eq!(report["rows"][3]["label"], "window@30/iou=0.01");
    assert!(a.join("timings.json").exists() && a.join("tables.txt").exists());
}

#[test]
fn config_file_overrides_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    std::fs::write(&cfg, "triggers = [\"oracle\"]\niou_thresholds = [0.05]\n").unwrap();
    let out = tmp.path().join("out");
    let o = egohoi(&[
        "evaluate", "--config", s(&cfg), "--corpus", s(&fixture()), "--out", s(&out), "--iou-threshold", "0.2,0.3", "--window", "60",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("results.json")).unwrap()).unwrap();
    let labels: Vec<&str> = report["rows"].as_array().unwrap().iter().map(|r| r["label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["oracle/iou=0.05"]);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let code = |args: &[&str]| egohoi(args).status.code().unwrap();

    assert_eq!(code(&["evaluate", "--corpus", s(&fixture()), "--iou-threshold", "0.3,0.1", "--out", s(&out)]), 2);
    assert_eq!(code(&["evaluate", "--corpus", s(&fixture()), "--window", "soon", "--out", s(&out)]), 2);
    assert_eq!(code(&["evaluate", "--corpus", s(&fixture()), "--recognizer", "yolo", "--out", s(&out)]), 2);
    assert_eq!(code(&["evaluate", "--config", s(&tmp.path().join("missing.toml")), "--corpus", s(&fixture())]), 2);
    assert_eq!(code(&["evaluate", "--corpus", s(&tmp.path().join("nowhere")), "--out", s(&out)]), 3);

    // empty corpus fails before any backend connection is attempted
    let empty = tmp.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    std::fs::write(empty.join("manifest.json"), r#"{"schema_version":1,"videos":[]}"#).unwrap();
    let o = egohoi(&["evaluate", "--corpus", s(&empty), "--detector", "external:tcp://127.0.0.1:1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!String::from_utf8_lossy(&o.stderr).contains("refused"));

    let o = egohoi(&["evaluate", "--corpus", s(&fixture()), "--detector", "external:tcp://127.0.0.1:1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(4));
    // failed rows are still reported
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("results.json")).unwrap()).unwrap();
    assert!(report["rows"][0]["error"].as_str().unwrap().contains("v000"));

    assert_eq!(code(&["report", "--results", s(&tmp.path().join("nothing"))]), 2);
}

#[test]
fn report_renders_tables_and_overlays() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    let o = egohoi(&["synth", "--out", s(&corpus), "--videos", "1", "--frames", "40", "--contacts", "2", "--images"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let res = tmp.path().join("res");
    assert!(egohoi(&["evaluate", "--corpus", s(&corpus), "--out", s(&res), "--window", "oracle"]).status.success());

    let ov = tmp.path().join("ov");
    let o = egohoi(&["report", "--results", s(&res), "--overlays", s(&ov), "--corpus", s(&corpus)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("AP Hand+State(%)") && stdout.contains("oracle/iou=0.01"));
    let jpgs: Vec<_> = std::fs::read_dir(ov.join("oracle_iou_0.01/v000")).unwrap().collect();
    assert_eq!(jpgs.len(), 2);

    // overlays against a different corpus are refused
    let other = tmp.path().join("other");
    assert!(egohoi(&["synth", "--out", s(&other), "--videos", "1", "--frames", "40", "--seed", "99"]).status.success());
    let o = egohoi(&["report", "--results", s(&res), "--overlays", s(&ov), "--corpus", s(&other)]);
    assert_eq!(o.status.code(), Some(3));
}
