use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::OnceLock;

fn tsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsa"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn tsa_stdin(args: &[&str], input: &str) -> Output {
    use std::io::Write;
    let mut child = Command::new(env!("CARGO_BIN_EXE_tsa"))
        .args(args)
        .env("RUST_LOG", "warn")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small dataset shared by the tests, generated once.
fn shared_dataset() -> &'static PathBuf {
    static DS: OnceLock<PathBuf> = OnceLock::new();
    DS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        let o = tsa(&["generate", "--seed", "11", "--n", "160", "--out", p(&dir)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        dir.join("dataset.csv")
    })
}

#[test]
fn generate_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let out = p(dir.path());
    for (file, threads) in [(&a, "1"), (&b, "3")] {
        let o = tsa(&[
            "generate",
            "--seed",
            "4",
            "--n",
            "24",
            "--threads",
            threads,
            "--dataset",
            p(file),
            "--out",
            out,
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("generation.json")).unwrap())
            .unwrap();
    assert_eq!(report["result"]["accepted"], 24);
    assert_eq!(report["config"]["seed"], 4);
    assert!(report["case_digest"].is_string());
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        tsa(&["generate", "--n", "5", "--out", p(dir.path())])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(
        tsa(&["train", "--seed", "1", "--dataset", "/nonexistent/ds.csv"])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(tsa(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(tsa(&["--help"]).status.code(), Some(0));
    assert_eq!(tsa(&["--version"]).status.code(), Some(0));
    let ds = shared_dataset();
    let o = tsa(&["eval", "--dataset", p(ds), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(64));
    assert!(stderr(&o).contains("--seed"));
}

#[test]
fn malformed_row_reports_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(shared_dataset()).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // line 0 is the header, so data row 17 is line 17
    let mut fields: Vec<&str> = lines[17].split(',').collect();
    fields[3] = "abc";
    lines[17] = fields.join(",");
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let o = tsa(&[
        "train",
        "--seed",
        "1",
        "--dataset",
        p(&bad),
        "--iterations",
        "2",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 17"), "{}", stderr(&o));
}

#[test]
fn one_stump_model_and_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let o = tsa(&[
        "train",
        "--seed",
        "3",
        "--dataset",
        p(shared_dataset()),
        "--iterations",
        "1",
        "--depth",
        "1",
        "--model",
        p(&model),
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(m["trees"].as_array().unwrap().len(), 1);
    assert_eq!(m["trees"][0]["leaf_values"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("m_report.json").exists());
    let summary = std::fs::read_to_string(dir.path().join("train_summary.csv")).unwrap();
    assert!(summary.starts_with("GHM-Plain, "));

    let row = std::fs::read_to_string(shared_dataset())
        .unwrap()
        .lines()
        .nth(1)
        .unwrap()
        .to_string();
    let features: Vec<&str> = row.split(',').take(170).collect();
    let o = tsa_stdin(
        &["predict", "--model", p(&model)],
        &(features.join(",") + "\n"),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    let (prob, label) = out.trim().split_once(',').unwrap();
    let prob: f64 = prob.parse().unwrap();
    assert!((0.0..=1.0).contains(&prob));
    assert_eq!(label, if prob >= 0.5 { "1" } else { "0" });

    let o = tsa_stdin(
        &["predict", "--model", p(&model)],
        &(features[..169].join(",") + "\n"),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("expected 170, got 169"),
        "{}",
        stderr(&o)
    );

    // the dataset file itself (with header and label columns) is accepted too
    let o = tsa(&[
        "predict",
        "--model",
        p(&model),
        "--input",
        p(shared_dataset()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 160);
}

#[test]
fn corrupted_model_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let o = tsa(&[
        "train",
        "--seed",
        "3",
        "--dataset",
        p(shared_dataset()),
        "--iterations",
        "3",
        "--depth",
        "2",
        "--model",
        p(&model),
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&model).unwrap().replacen(
        "\"learning_rate\":1",
        "\"learning_rate\":2",
        1,
    );
    std::fs::write(&model, text).unwrap();
    let o = tsa(&[
        "eval",
        "--dataset",
        p(shared_dataset()),
        "--model",
        p(&model),
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));
}

#[test]
fn zero_noise_sweep_matches_cross_validation() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path());
    let common = [
        "--dataset",
        p(shared_dataset()),
        "--seed",
        "5",
        "--k",
        "3",
        "--iterations",
        "15",
        "--depth",
        "3",
    ];
    let mut a = vec!["eval", "--out", out];
    a.extend_from_slice(&common);
    assert_eq!(tsa(&a).status.code(), Some(0));
    let mut b = vec!["sweep-noise", "--levels", "0", "--out", out];
    b.extend_from_slice(&common);
    assert_eq!(tsa(&b).status.code(), Some(0));
    let eval: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("eval.json")).unwrap())
            .unwrap();
    let sweep = std::fs::read_to_string(dir.path().join("noise_sweep.csv")).unwrap();
    let acc: f64 = sweep
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((acc - eval["result"]["metrics"]["acc"].as_f64().unwrap()).abs() < 1e-9);
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# defaults\nseed = 4\nn = 30\n").unwrap();
    let o = tsa(&[
        "generate",
        "--config",
        p(&cfg),
        "--n",
        "12",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("dataset.csv")).unwrap();
    assert_eq!(text.lines().count(), 13);
}
