use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "synth": {"class_count": 3, "videos_per_class": 4, "width": 16, "height": 16, "frame_count": 12},
  "extract": {"hof": {"window_len": 4, "stride": 2}, "logc": {"window_len": 4, "stride": 2}},
  "codebook": {"words": 4},
  "split": {"repeats": 3}
}"#;

fn egomkl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_egomkl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = egomkl(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn config(dir: &Path) -> PathBuf {
    let p = dir.join("cfg.json");
    std::fs::write(&p, SMALL).unwrap();
    p
}

/// Runs synth through train into `dir`, returning the model path.
fn pipeline(dir: &Path, cfg: &Path, workers: &str) -> PathBuf {
    let data = dir.join("data");
    let manifest = data.join("manifest.json");
    let (dsc, cbk, hist, model) = (dir.join("dsc"), dir.join("cbk"), dir.join("hist.json"), dir.join("model.json"));
    let common = ["--config", s(cfg), "--workers", workers, "--seed", "7"];
    let run = |extra: &[&str]| ok(&[&common[..], extra].concat());
    run(&["synth", "--out", s(&data)]);
    run(&["extract", "--manifest", s(&manifest), "--out", s(&dsc)]);
    run(&["codebook", "--manifest", s(&manifest), "--descriptors", s(&dsc), "--out", s(&cbk)]);
    run(&["encode", "--manifest", s(&manifest), "--descriptors", s(&dsc), "--codebooks", s(&cbk), "--out", s(&hist)]);
    run(&["train", "--histograms", s(&hist), "--manifest", s(&manifest), "--method", "simple_mkl", "--out", s(&model)]);
    model
}

fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "cfg.json" {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn every_stage_is_byte_identical_across_runs_and_worker_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), &config(a.path()), "1");
    pipeline(b.path(), &config(b.path()), "8");
    let (ta, tb) = (tree_bytes(a.path()), tree_bytes(b.path()));
    assert!(ta.len() > 40);
    assert_eq!(ta, tb);
}

#[test]
fn evaluate_twice_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let mut runs = Vec::new();
    for (name, workers) in [("r1", "1"), ("r2", "1"), ("r3", "8")] {
        let out = dir.path().join(name);
        ok(&["evaluate", "--config", s(&cfg), "--method", "simple_mkl", "--seed", "42", "--workers", workers, "--out", s(&out)]);
        runs.push((
            std::fs::read(out.join("report.json")).unwrap(),
            std::fs::read(out.join("confusion.csv")).unwrap(),
        ));
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
    let other = dir.path().join("r4");
    ok(&["evaluate", "--config", s(&cfg), "--seed", "43", "--out", s(&other)]);
    assert_ne!(std::fs::read(other.join("report.json")).unwrap(), runs[0].0);
}

#[test]
fn training_on_a_single_class_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    pipeline(dir.path(), &cfg, "2");
    let text = std::fs::read_to_string(dir.path().join("data/manifest.json")).unwrap();
    let mut m: serde_json::Value = serde_json::from_str(&text).unwrap();
    m["classes"] = serde_json::json!(["only"]);
    let videos: Vec<serde_json::Value> = m["videos"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|v| v["class_index"] == 0)
        .cloned()
        .collect();
    m["videos"] = videos.into();
    let one = dir.path().join("data/one_class.json");
    std::fs::write(&one, m.to_string()).unwrap();

    let model = dir.path().join("one.json");
    let out = egomkl(&["train", "--histograms", s(&dir.path().join("hist.json")), "--manifest", s(&one), "--out", s(&model)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("single class"));
    assert!(!model.exists());
}

#[test]
fn inspect_shows_simplex_weights() {
    let dir = tempfile::tempdir().unwrap();
    let model = pipeline(dir.path(), &config(dir.path()), "2");
    let text = ok(&["inspect", s(&model)]);
    let lines: Vec<&str> = text.lines().filter(|l| l.contains("mkl weights")).collect();
    assert_eq!(lines.len(), 3, "{text}");
    for line in lines {
        let inner = line.split('[').nth(1).unwrap().split(']').next().unwrap();
        let w: Vec<f64> = inner.split(", ").map(|v| v.parse().unwrap()).collect();
        assert_eq!(w.len(), 6);
        assert!((w.iter().sum::<f64>() - 1.0).abs() <= 0.003, "{line}");
        assert!(line.contains("(sum 1.000)"), "{line}");
    }
    for artifact in ["data/manifest.json", "hist.json", "cbk/hof.cbk"] {
        ok(&["inspect", s(&dir.path().join(artifact))]);
    }
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(egomkl(&["inspect", s(&missing)]).status.code(), Some(2));

    let bad_cfg = dir.path().join("bad.json");
    std::fs::write(&bad_cfg, r#"{"svm": {"c": 1}}"#).unwrap();
    let out = egomkl(&["synth", "--config", s(&bad_cfg), "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("x").exists());

    assert_eq!(egomkl(&["evaluate", "--method", "nope", "--out", "y"]).status.code(), Some(1));
    assert_eq!(egomkl(&["evaluate", "--repeats", "0", "--out", "y"]).status.code(), Some(1));

    let truncated = dir.path().join("t.fsq");
    let mut bytes = b"FSQ1".to_vec();
    for v in [16u32, 16, 12] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.extend([0u8; 100]);
    std::fs::write(&truncated, bytes).unwrap();
    let out = egomkl(&["inspect", s(&truncated)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());

    let garbage = dir.path().join("g.json");
    std::fs::write(&garbage, "{\"kind\": \"model\"}").unwrap();
    assert_eq!(egomkl(&["inspect", s(&garbage)]).status.code(), Some(2));
}
