use std::path::Path;
use std::process::{Command, Output};

fn titletopic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_titletopic"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("TITLETOPIC_OUT")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = titletopic(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    ok(&["synth", "--per-label", "6", "--out", s(&p("synth"))]);
    let data = p("synth").join("synthetic.csv");
    let before = std::fs::read(&data).unwrap();

    ok(&["ingest", "--data", s(&data), "--out", s(&p("ingest"))]);
    ok(&["split", "--data", s(&data), "--out", s(&p("split"))]);
    for f in ["train.csv", "validation.csv", "test.csv", "run.cfg"] {
        assert!(p("split").join(f).exists(), "{f}");
    }
    let small = [
        "--hidden",
        "8",
        "--embed-dim",
        "8",
        "--lr",
        "0.01",
        "--max-epochs",
        "3",
    ];
    let (split, trained) = (p("split"), p("train"));
    let mut args = vec![
        "train",
        "--model",
        "gru",
        "--data",
        s(&split),
        "--out",
        s(&trained),
    ];
    args.extend_from_slice(&small);
    ok(&args);
    for f in [
        "epochs.csv",
        "result.txt",
        "model.cfg",
        "model.ckpt",
        "vocab.tsv",
        "run.cfg",
    ] {
        assert!(p("train").join(f).exists(), "{f}");
    }

    // the echoed config alone reproduces the run
    let cfg = p("train").join("run.cfg");
    ok(&["train", "--config", s(&cfg), "--out", s(&p("rerun"))]);
    assert_eq!(
        std::fs::read(p("train").join("epochs.csv")).unwrap(),
        std::fs::read(p("rerun").join("epochs.csv")).unwrap()
    );

    let report = ok(&[
        "eval",
        "--checkpoint",
        s(&p("train")),
        "--data",
        s(&p("split")),
        "--out",
        s(&p("eval")),
    ]);
    assert!(report.starts_with("macro_auroc="));
    ok(&[
        "eval",
        "--baseline",
        "knn",
        "--k",
        "3",
        "--data",
        s(&p("split")),
        "--out",
        s(&p("knn")),
    ]);

    let shown = ok(&[
        "explain",
        "--title",
        "neural machine translation by jointly learning to align and translate",
        "--checkpoint",
        s(&p("train")),
        "--out",
        s(&p("explain")),
    ]);
    assert!(p("explain").join("saliency.html").exists());
    assert!(shown.lines().count() >= 3);

    ok(&[
        "embed",
        "--data",
        s(&data),
        "--embedding",
        "skipgram",
        "--embed-dim",
        "8",
        "--out",
        s(&p("embed")),
    ]);
    assert!(p("embed").join("vectors.txt").exists());

    assert_eq!(
        std::fs::read(&data).unwrap(),
        before,
        "input file was modified"
    );
}

#[test]
fn transformer_grid_has_thirty_six_rows() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    ok(&["synth", "--per-label", "8", "--out", s(&p("synth"))]);
    ok(&[
        "split",
        "--data",
        s(&p("synth").join("synthetic.csv")),
        "--out",
        s(&p("split")),
    ]);
    let out = ok(&[
        "grid",
        "--family",
        "transformer",
        "--data",
        s(&p("split")),
        "--embed-dim",
        "16",
        "--max-epochs",
        "1",
        "--out",
        s(&p("grid")),
    ]);
    let summary = std::fs::read_to_string(p("grid").join("summary.csv")).unwrap();
    assert_eq!(summary, out);
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 36);
    assert!(rows.iter().all(|r| r.starts_with("transformer,")));
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    assert_eq!(titletopic(&["bogus"]).status.code(), Some(1));
    assert_eq!(
        titletopic(&["train", "--hidden", "lots"]).status.code(),
        Some(1)
    );
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    assert_eq!(
        titletopic(&["train", "--model", "cnn", "--out", out])
            .status
            .code(),
        Some(1)
    );
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        titletopic(&["train", "--data", s(&missing), "--out", out])
            .status
            .code(),
        Some(2)
    );
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "title,nonsense\nx,1\n").unwrap();
    assert_eq!(
        titletopic(&["ingest", "--data", s(&bad), "--out", out])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_titletopic"))
        .args(["synth", "--per-label", "1"])
        .env("TITLETOPIC_OUT", dir.path())
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("synthetic.csv").exists());
    assert!(dir.path().join("run.cfg").exists());
}

#[test]
fn diverging_training_exits_with_trial_failure() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    ok(&["synth", "--per-label", "3", "--out", s(&p("synth"))]);
    let out = titletopic(&[
        "train",
        "--model",
        "rnn",
        "--hidden",
        "8",
        "--embed-dim",
        "8",
        "--lr",
        "1e308",
        "--max-epochs",
        "2",
        "--data",
        s(&p("synth").join("synthetic.csv")),
        "--out",
        s(&p("train")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let result = std::fs::read_to_string(p("train").join("result.txt")).unwrap();
    assert!(result.contains("status=failed"));
}
