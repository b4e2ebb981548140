use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

const SPECS: &str = r#"
[[models]]
model = "pythia-mock"
steps = [0, 1000, 2000, 3000, 4000]

[models.settings.gold]
kind = "curve"
base = 0.55
slope = 0.3

[models.settings.random]
kind = "curve"
base = 0.5
slope = 0.1
bursts = [{ interval = 2, delta = 0.1 }]

[models.settings.abstract]
kind = "curve"
base = 0.6
bursts = [{ interval = 2, delta = -0.1 }]
"#;

fn duality(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_duality")).args(args).output().unwrap()
}

fn write_dataset(path: &Path, n: usize) {
    let mut text = String::from("id,input,label\n");
    for i in 0..n {
        let label = if i % 2 == 0 { "negative" } else { "positive" };
        text.push_str(&format!("r{i},\"review {i}, mostly about pacing\",{label}\n"));
    }
    fs::write(path, text).unwrap();
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

#[test]
fn full_run_through_the_binary() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("reviews.csv");
    write_dataset(&data, 160);
    let out = dir.path().join("out");
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        format!(
            "datasets = [{:?}]\nk = 4\nseeds = [0, 1]\ntest_n = 80\ndev_n = 40\noutput_dir = {:?}\n",
            data.display().to_string(),
            out.display().to_string()
        ),
    )
    .unwrap();
    let specs = dir.path().join("mocks.toml");
    fs::write(&specs, SPECS).unwrap();
    let cfg = config.to_str().unwrap();

    let build = duality(&["build", "--config", cfg]);
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    assert_eq!(String::from_utf8_lossy(&build.stdout).lines().count(), 6);

    let score = duality(&["mock-score", "--config", cfg, "--specs", specs.to_str().unwrap()]);
    assert!(score.status.success(), "{}", String::from_utf8_lossy(&score.stderr));
    assert!(out.join("logs/pythia-mock.jsonl").is_file());

    let metrics = duality(&["metrics", "--config", cfg]);
    assert!(metrics.status.success(), "{}", String::from_utf8_lossy(&metrics.stderr));
    let summary = fs::read_to_string(out.join("metrics/summary.csv")).unwrap();
    assert!(summary.starts_with("model,avg_ratio,avg_intensity,final_gold_acc\npythia-mock,0.25,"));

    let fuse = duality(&["fuse", "--config", cfg]);
    assert!(fuse.status.success(), "{}", String::from_utf8_lossy(&fuse.stderr));
    let table = fs::read_to_string(out.join("fusion/table.csv")).unwrap();
    assert!(table.starts_with("row,reviews,average\n"));
    assert!(table.contains("fusion (adaptive)"));

    let report = duality(&["report", "--config", cfg]);
    assert!(report.status.success(), "{}", String::from_utf8_lossy(&report.stderr));
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("pythia-mock"));
    assert!(text.contains("Fusion accuracy"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("reviews.csv");
    write_dataset(&data, 160);
    let config = dir.path().join("run.json");
    fs::write(&config, r#"{"k": 4, "seeds": [0, 1, 2], "test_n": 80, "dev_n": 40}"#).unwrap();
    let out = dir.path().join("o");
    let build = duality(&[
        "build",
        "--config",
        config.to_str().unwrap(),
        "--dataset",
        data.to_str().unwrap(),
        "--seeds",
        "5",
        "--settings",
        "gold,abstract",
        "--abstract-pool",
        "letters",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let files = String::from_utf8_lossy(&build.stdout).lines().count();
    assert_eq!(files, 2);
    let bundle = fs::read_to_string(out.join("bundles/reviews.abstract.seed5.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(bundle.lines().next().unwrap()).unwrap();
    assert_eq!(first["abstract_pool"], "letters");
    assert_eq!(first["demo_ids"].as_array().unwrap().len(), 4);
}

#[test]
fn errors_are_json_on_stderr() {
    let dir = tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let out = duality(&[
        "build",
        "--dataset",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(out.stdout.is_empty());
    let err = stderr_json(&out);
    assert_eq!(err["error"], "io");
    assert!(err["message"].as_str().unwrap().contains("nope.jsonl"));

    let out = duality(&["metrics", "--epsilon", "0", "--logs", missing.to_str().unwrap()]);
    assert_eq!(stderr_json(&out)["error"], "config");

    let out = duality(&["build", "--k", "many"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let out = duality(&["build", "--settings", "shuffled"]);
    assert_eq!(stderr_json(&out)["error"], "usage");
}

#[test]
fn fuse_reports_missing_abstract_logs() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("reviews.csv");
    write_dataset(&data, 160);
    let out = dir.path().join("out");
    let common = [
        "--dataset",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--k",
        "2",
        "--seeds",
        "0",
        "--test-n",
        "60",
        "--dev-n",
        "30",
    ];
    let with = |cmd: &str, extra: &[&str]| {
        let mut args = vec![cmd];
        args.extend(common);
        args.extend(extra);
        duality(&args)
    };
    assert!(with("build", &["--settings", "gold,random"]).status.success());
    let specs = dir.path().join("mocks.toml");
    fs::write(&specs, SPECS).unwrap();
    assert!(with("mock-score", &["--specs", specs.to_str().unwrap()])
        .status
        .success());
    let fuse = with("fuse", &[]);
    assert!(!fuse.status.success());
    let err = stderr_json(&fuse);
    assert_eq!(err["error"], "coverage");
    assert!(err["message"].as_str().unwrap().contains("abstract"));
}

#[test]
fn help_succeeds() {
    let out = duality(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["build", "mock-score", "metrics", "fuse", "report"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}
