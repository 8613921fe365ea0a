use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_streamgconv")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
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

fn counts(stdout: &str) -> Vec<(String, usize)> {
    stdout
        .lines()
        .filter_map(|l| l.split_once(','))
        .map(|(k, v)| (k.to_string(), v.parse().unwrap()))
        .collect()
}

#[test]
fn full_pipeline_on_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["generate-synthetic", "--out", s(d), "--hours", "500", "--seed", "4"]);
    let (series, graph) = (d.join("series.csv"), d.join("graph.csv"));
    assert!(series.exists() && graph.exists());

    let cache = d.join("cache.bin");
    let built = counts(&ok(&["build-dataset", "--series", s(&series), "--graph", s(&graph), "--cache", s(&cache)]));
    let names: Vec<&str> = built.iter().map(|(k, _)| k.as_str()).collect();
    assert_eq!(names, ["train", "validation", "test"]);
    assert!(built.iter().all(|(_, n)| *n > 0));
    let first = fs::read(&cache).unwrap();

    let again = d.join("again.bin");
    ok(&["build-dataset", "--series", s(&series), "--graph", s(&graph), "--cache", s(&again)]);
    assert_eq!(fs::read(&again).unwrap(), first);

    let common = ["--cache", s(&cache), "--graph", s(&graph)];
    let mut reports = Vec::new();
    for model in ["stream_gconvgru", "conv_bigru"] {
        let ckpt = d.join(format!("{model}.ckpt"));
        let mut args = vec!["train", "--model", model, "--checkpoint", s(&ckpt), "--epochs", "1", "--hidden-size", "2"];
        args.extend(common);
        let out = ok(&args);
        assert!(out.contains("best_epoch,1"), "{out}");
        assert!(ckpt.exists());

        let report = d.join(format!("{model}.csv"));
        let mut args = vec!["evaluate", "--model", model, "--checkpoint", s(&ckpt), "--split", "test", "--report", s(&report)];
        args.extend(common);
        ok(&args);
        reports.push(report);
    }

    let report = d.join("persistence.csv");
    let out = ok(&["evaluate", "--model", "persistence", "--cache", s(&cache), "--split", "test", "--report", s(&report)]);
    assert!(out.starts_with("model,persistence,split,test"), "{out}");
    let text = fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().count(), 37);
    reports.push(report);

    let pred = d.join("pred.csv");
    let ckpt = d.join("stream_gconvgru.ckpt");
    let mut args = vec![
        "predict",
        "--model",
        "stream_gconvgru",
        "--checkpoint",
        s(&ckpt),
        "--anchor",
        "2011-10-15T00:00:00Z",
        "--out",
        s(&pred),
    ];
    args.extend(common);
    ok(&args);
    let text = fs::read_to_string(&pred).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 36);
    let stamps: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(stamps[0], "2011-10-15T01:00:00Z");
    assert!(stamps.windows(2).all(|w| w[0] < w[1]));
    assert!(rows.iter().all(|r| r.split(',').nth(1).unwrap().parse::<f64>().unwrap().is_finite()));

    let svg = d.join("plots/nse.svg");
    let joined = reports.iter().map(|p| s(p)).collect::<Vec<_>>().join(",");
    ok(&["plot", "--reports", &joined, "--svg", s(&svg)]);
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<g class=\"series\"").count(), 3);
    assert!(text.matches("<polyline").count() >= 3);
}

#[test]
fn missing_graph_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no_such_graph.csv");
    let out = run(&[
        "build-dataset",
        "--series",
        s(&dir.path().join("series.csv")),
        "--graph",
        s(&missing),
        "--cache",
        s(&dir.path().join("c.bin")),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(s(&missing)), "{err}");
    assert!(!dir.path().join("c.bin").exists());
}

#[test]
fn model_evaluation_requires_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["generate-synthetic", "--out", s(d), "--hours", "300"]);
    let cache = d.join("c.bin");
    let graph = d.join("graph.csv");
    ok(&["build-dataset", "--series", s(&d.join("series.csv")), "--graph", s(&graph), "--cache", s(&cache)]);
    let out = run(&[
        "evaluate",
        "--model",
        "stream_gconvgru",
        "--cache",
        s(&cache),
        "--graph",
        s(&graph),
        "--report",
        s(&d.join("r.csv")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
}
