//! End-to-end tests of the `semcache` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use semcache::workload;
use tempfile::TempDir;

fn semcache(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semcache"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = semcache(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn gen(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["gen-workload", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    ok(&args);
    dir.join("workload.json")
}

fn records(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

#[test]
fn default_workload_loads_back() {
    let dir = TempDir::new().unwrap();
    let stdout = ok(&["gen-workload", "--out", dir.path().to_str().unwrap()]);
    let path = dir.path().join("workload.json");
    assert_eq!(stdout.trim(), path.to_str().unwrap());
    let w = workload::load(&path).unwrap();
    assert_eq!((w.space.m(), w.space.dim()), (20, 384));
    assert_eq!(w.noise_sigma, Some(0.05));
}

#[test]
fn small_workload_without_k_check() {
    let dir = TempDir::new().unwrap();
    let path = gen(dir.path(), &["--m", "3", "--k", "5", "--k-check", "off"]);
    assert_eq!(workload::load(&path).unwrap().space.m(), 3);
    let checked = semcache(&[
        "gen-workload",
        "--m",
        "3",
        "--k",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(checked.status.code(), Some(2));
}

#[test]
fn negative_noise_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let out = semcache(&[
        "gen-workload",
        "--noise-sigma",
        "-1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("noise sigma"));
    assert!(!dir.path().join("workload.json").exists());
}

#[test]
fn malformed_workload_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"m":1,"d_e":1,"metric":{"type":"euclidean"},"queries":[{"id":0,"embedding":[0.0],"p":1.0,"c":0.0}]}"#)
        .unwrap();
    let out = semcache(&[
        "solve",
        "--workload",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("queries[0].c"));
    let missing = semcache(&["solve", "--workload", "/nonexistent/w.json"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn solve_rows_are_consistent() {
    let dir = TempDir::new().unwrap();
    let wl = gen(dir.path(), &["--m", "9", "--seed", "4"]);
    ok(&[
        "solve",
        "--workload",
        wl.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let rows = records(&dir.path().join("solve.csv"));
    assert_eq!(rows.len(), 9);
    for r in &rows {
        let rg: f64 = r[1].parse().unwrap();
        let bf: f64 = r[2].parse().unwrap();
        assert!(bf <= rg + 1e-12);
        if let Ok(alpha) = r[4].parse::<f64>() {
            if alpha.is_finite() {
                assert!(rg <= alpha * bf + 1e-12);
            }
        }
    }
    let last = &rows[8];
    assert_eq!((&last[1], &last[2], &last[3]), ("0", "0", "0"));
}

#[test]
fn solve_leaves_bf_empty_over_budget() {
    let dir = TempDir::new().unwrap();
    let wl = gen(dir.path(), &["--m", "8"]);
    let out = semcache(&[
        "solve",
        "--workload",
        wl.to_str().unwrap(),
        "--ks",
        "4",
        "--budget",
        "10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert_eq!(&records(&dir.path().join("solve.csv"))[0][2], "");
}

#[test]
fn offline_report_covers_every_algorithm_and_n() {
    let dir = TempDir::new().unwrap();
    let wl = gen(dir.path(), &["--m", "8"]);
    let out = dir.path().join("off");
    let args = [
        "offline",
        "--workload",
        wl.to_str().unwrap(),
        "--k",
        "3",
        "--runs",
        "4",
        "--n-grid",
        "50,500",
        "--nu",
        "1",
        "--out",
        out.to_str().unwrap(),
    ];
    ok(&args);
    let rows = records(&out.join("offline.csv"));
    assert_eq!(rows.len(), 8);
    for algo in ["cucb", "clcb", "eps-greedy", "lfu"] {
        for n in ["50", "500"] {
            let row = rows.iter().find(|r| &r[0] == algo && &r[1] == n).unwrap();
            assert_eq!(&row[4], "4");
        }
    }
    assert_eq!(records(&out.join("offline_runs.csv")).len(), 32);
}

#[test]
fn online_outputs_and_stride() {
    let dir = TempDir::new().unwrap();
    let wl = gen(dir.path(), &["--m", "10"]);
    let out = dir.path().join("on");
    ok(&[
        "online",
        "--workload",
        wl.to_str().unwrap(),
        "--k",
        "3",
        "--T",
        "100000",
        "--stride",
        "1000",
        "--runs",
        "2",
        "--algos",
        "clcb-ls,lfu-static",
        "--out",
        out.to_str().unwrap(),
    ]);
    let runs = records(&out.join("curves_runs.csv"));
    assert_eq!(
        runs.iter()
            .filter(|r| &r[0] == "clcb-ls" && &r[1] == "0")
            .count(),
        100
    );
    assert_eq!(records(&out.join("curves.csv")).len(), 200);
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    let list = summary["runs"].as_array().unwrap();
    assert_eq!(list.len(), 4);
    for s in list {
        assert!(s["cum_regret"].is_number() && s["cum_regret_no_switch"].is_number());
        assert_eq!(s["T"], 100_000);
    }
    assert!(out.join("runtime.json").exists());
}

#[test]
fn online_traces_and_json_format() {
    let dir = TempDir::new().unwrap();
    let wl = gen(dir.path(), &["--m", "6"]);
    let out = dir.path().join("on");
    ok(&[
        "online",
        "--workload",
        wl.to_str().unwrap(),
        "--k",
        "2",
        "--T",
        "300",
        "--runs",
        "1",
        "--algos",
        "clcb",
        "--traces",
        "--format",
        "json",
        "--confidence-variant",
        "lemma",
        "--out",
        out.to_str().unwrap(),
    ]);
    let trace = fs::read(out.join("traces/clcb_run0.csv")).unwrap();
    assert_eq!(
        semcache::online::read_csv(trace.as_slice(), 6)
            .unwrap()
            .len(),
        300
    );
    let curves: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("curves.json")).unwrap()).unwrap();
    assert_eq!(curves["metric"], "avg_regret");
    assert_eq!(curves["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn sweep_over_m_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "sweep",
            "--var",
            "m",
            "--values",
            "6,9",
            "--k",
            "2",
            "--T",
            "500",
            "--runs",
            "2",
            "--d-e",
            "16",
            "--out",
            out.to_str().unwrap(),
        ]);
        fs::read(out.join("sweep.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    let rows = records(&dir.path().join("a/sweep.csv"));
    assert_eq!(rows.len(), 10);
}

#[test]
fn sweep_over_k_reuses_the_workload() {
    let dir = TempDir::new().unwrap();
    let wl = gen(dir.path(), &["--m", "8"]);
    let out = dir.path().join("sk");
    ok(&[
        "sweep",
        "--var",
        "k",
        "--values",
        "2,5",
        "--workload",
        wl.to_str().unwrap(),
        "--T",
        "400",
        "--runs",
        "1",
        "--algos",
        "clcb-ls",
        "--out",
        out.to_str().unwrap(),
    ]);
    let rows = records(&out.join("sweep.csv"));
    assert_eq!(
        rows.iter().map(|r| r[1].to_string()).collect::<Vec<_>>(),
        ["2", "5"]
    );
}

#[test]
fn unknown_sweep_variable_is_a_config_error() {
    let out = semcache(&["sweep", "--var", "delta", "--values", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sweep variable"));
}

#[test]
fn out_of_range_parameters_are_rejected() {
    let dir = TempDir::new().unwrap();
    let wl = gen(dir.path(), &["--m", "5"]);
    let w = wl.to_str().unwrap();
    for args in [
        vec!["online", "--workload", w, "--k", "6"],
        vec!["online", "--workload", w, "--runs", "0", "--k", "2"],
        vec!["online", "--workload", w, "--delta", "1.5", "--k", "2"],
        vec!["offline", "--workload", w, "--k", "2", "--epsilon-g", "2"],
        vec!["offline", "--workload", w, "--k", "2", "--nu", "-0.5"],
        vec![
            "online",
            "--workload",
            w,
            "--k",
            "2",
            "--confidence-variant",
            "loose",
        ],
    ] {
        assert_eq!(semcache(&args).status.code(), Some(2), "{args:?}");
    }
}
