use std::path::Path;
use std::process::{Command, Output};

use leoroute::segmentation::parse_plan_dump;
use leoroute::topology::parse_edge_list;

fn leoroute(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leoroute"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).expect("error is JSON")
}

#[test]
fn out_of_range_fraction_is_rejected_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = leoroute(
        &["run", "--preset", "iridium-random-f15", "--fraction", "1.5"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let err = error_json(&out);
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("fraction"));
    assert!(
        std::fs::read_dir(dir.path()).unwrap().next().is_none(),
        "nothing written"
    );
}

#[test]
fn config_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(
        &cfg,
        "constellation = \"iridium\"\nhorizon_s = 600.0\nfraction = -0.2\n",
    )
    .unwrap();
    let out = leoroute(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["line"], 3);

    std::fs::write(&cfg, "constellation = \"iridium\"\nbogus_key = 1\n").unwrap();
    let out = leoroute(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["line"], 2);
}

#[test]
fn unknown_preset_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = leoroute(&["partition", "--preset", "nope"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "config");
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.toml");
    std::fs::write(
        &cfg,
        "preset = \"iridium-random-f15\"\nhorizon_s = 60.0\ndrain_s = 60.0\nground_stations = 32\n",
    )
    .unwrap();
    let out = leoroute(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--paradigm",
            "neighbor",
            "--seed",
            "4",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["paradigm"], "neighbor");
    assert_eq!(summary["seed"], 4);
    for f in ["messages.csv", "summary.json", "series.csv"] {
        assert!(dir.path().join("o").join(f).is_file(), "{f}");
    }
}

#[test]
fn batch_writes_comparison_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.toml");
    std::fs::write(
        &cfg,
        "preset = \"iridium-random-f15\"\nhorizon_s = 30.0\ndrain_s = 30.0\nground_stations = 32\n",
    )
    .unwrap();
    let out = leoroute(
        &[
            "batch",
            "--config",
            cfg.to_str().unwrap(),
            "--paradigm",
            "source,global",
            "--fraction",
            "0,0.15",
            "--seeds",
            "1,2",
            "--jobs",
            "2",
            "--out",
            "b",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("b/comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 4);
    assert!(dir.path().join("b/global-f15-s2/summary.json").is_file());
}

#[test]
fn partition_and_topology_dumps_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = leoroute(&["partition", "--preset", "iridium-random-f00"], dir.path());
    assert!(out.status.success());
    let dump = parse_plan_dump(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(dump.assignment.len(), 66);

    let out = leoroute(
        &[
            "topology",
            "--preset",
            "iridium-random-f00",
            "--time",
            "30",
            "--out",
            "edges.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let rows = parse_edge_list(&std::fs::read_to_string(dir.path().join("edges.csv")).unwrap()).unwrap();
    assert!(rows.len() >= 120);
}
