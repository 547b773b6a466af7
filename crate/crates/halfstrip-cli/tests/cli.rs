//! End-to-end checks of the `halfstrip` binary: exit codes, report
//! formats, and byte-identical output under a fixed seed.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_halfstrip")
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn classify_transient_walk_exits_zero() {
    let dir = std::env::temp_dir().join("halfstrip-cli-test-classify");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = write_config(
        &dir,
        "transient.toml",
        "seed = 1\n[model]\nkind = \"correlated-walk\"\nc = 1.0\n",
    );
    let out = run(&["classify", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"verdict\": \"Transient\""), "{text}");
    assert!(text.contains("config_hash"));
}

#[test]
fn classify_inconclusive_exits_two() {
    let dir = std::env::temp_dir().join("halfstrip-cli-test-inconclusive");
    std::fs::create_dir_all(&dir).unwrap();
    // Constant-drift mode on the symmetric walk: mean drift zero, outside
    // the criterion.
    let cfg = write_config(
        &dir,
        "zero.toml",
        "seed = 1\n[model]\nkind = \"correlated-walk\"\nc = 0.0\n",
    );
    let out = run(&[
        "classify",
        "--config",
        cfg.to_str().unwrap(),
        "--mode",
        "constant",
        "--grid",
        "100,1000,10000",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("Inconclusive"), "{text}");
}

#[test]
fn weak_limit_periodic_q_exits_two() {
    let dir = std::env::temp_dir().join("halfstrip-cli-test-periodic");
    std::fs::create_dir_all(&dir).unwrap();
    // a = b = swap matrix: the limit matrix is periodic.
    let cfg = write_config(
        &dir,
        "periodic.toml",
        r#"
seed = 3
[model]
kind = "modulated-queue"
c = [0.0, 0.0]
a = [[0.0, 1.0], [1.0, 0.0]]
b = [[0.0, 1.0], [1.0, 0.0]]
[weak-limit]
n = 100
trials = 10
"#,
    );
    let out = run(&["weak-limit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("periodic"), "{text}");
}

#[test]
fn bad_config_exits_one_with_all_errors() {
    let dir = std::env::temp_dir().join("halfstrip-cli-test-bad");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = write_config(
        &dir,
        "bad.toml",
        "[model]\nkind = \"modulated-queue\"\na = [[0.9, 0.2], [0.5, 0.5]]\nb = [[0.5, 0.5], [0.5, 0.5]]\n",
    );
    let out = run(&["classify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("seed"), "{err}");
    assert!(err.contains("model.a"), "{err}");
    assert!(err.contains("model.c"), "{err}");
}

#[test]
fn simulate_fixed_seed_is_byte_identical() {
    let cfg = configs().join("reflected_walk.toml");
    let base = ["simulate", "--config", cfg.to_str().unwrap()];
    let first = run(&base);
    let second = run(&base);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    assert!(!first.stdout.is_empty());

    // Reports are independent of the worker count.
    let one = run(&["simulate", "--config", cfg.to_str().unwrap(), "--jobs", "1"]);
    let four = run(&["simulate", "--config", cfg.to_str().unwrap(), "--jobs", "4"]);
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(first.stdout, one.stdout);
}

#[test]
fn excursion_stats_csv_and_text_formats() {
    let dir = std::env::temp_dir().join("halfstrip-cli-test-formats");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = write_config(
        &dir,
        "walk.toml",
        r#"
seed = 5
[model]
kind = "correlated-walk"
c = 0.0
[excursion-stats]
x0 = 100
trials = 500
r-max = 20
path-steps = 5000
"#,
    );
    let csv = run(&[
        "excursion-stats",
        "--config",
        cfg.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert!(csv.status.success(), "{}", String::from_utf8_lossy(&csv.stderr));
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(
        text.lines().any(|l| l.starts_with("start_x,end_x,duration,max_dev,occ_")),
        "{text}"
    );

    let human = run(&[
        "excursion-stats",
        "--config",
        cfg.to_str().unwrap(),
        "--format",
        "text",
    ]);
    let text = String::from_utf8(human.stdout).unwrap();
    assert!(text.contains("embedded m1"), "{text}");
}

#[test]
fn out_dir_writes_report_and_tables() {
    let dir = std::env::temp_dir().join("halfstrip-cli-test-outdir");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = write_config(
        &dir,
        "walk.toml",
        r#"
seed = 9
[model]
kind = "correlated-walk"
c = 0.5
[coupling]
x0 = 100
horizon = 30
trials = 200
"#,
    );
    let out_dir = dir.join("reports");
    let out = run(&[
        "coupling",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let files: Vec<String> = std::fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(
        files.iter().any(|f| f.starts_with("coupling-") && f.ends_with(".json")),
        "{files:?}"
    );
    assert!(
        files.iter().any(|f| f.ends_with("-survival.csv")),
        "{files:?}"
    );
}

#[test]
fn seed_flag_overrides_config() {
    let cfg = configs().join("correlated_walk.toml");
    let a = run(&[
        "classify",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "123",
    ]);
    assert!(a.status.success());
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.contains("\"seed\": 123"), "{text}");
}
