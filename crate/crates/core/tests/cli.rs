use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;
use siteselect::demo;

fn siteselect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_siteselect"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Single point layer at (0.5, 0.5) on a 2x2 grid over (0,0)-(2,2).
fn micro_project(dir: &Path, threshold: f64) -> PathBuf {
    fs::write(dir.join("plant.csv"), "x,y\n0.5,0.5\n").unwrap();
    let cfg = json!({
        "version": 1,
        "layers": [{"name": "plant", "kind": "point", "path": "plant.csv", "d_cut": 2.0}],
        "grid": {"nx": 2, "ny": 2, "bbox": [0.0, 0.0, 2.0, 2.0]},
        "weights": [1.0],
        "threshold": threshold,
        "search": {"population_size": 4, "crossover_points": 1, "seed": 5, "max_evaluations": 200},
        "output": {"remarks_path": "remarks.csv", "deterministic_clock": true}
    });
    let path = dir.join("project.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn demo_project(dir: &Path) -> PathBuf {
    demo::write_project(dir, 8, 8).unwrap()
}

fn edit_config(path: &Path, edit: impl FnOnce(&mut serde_json::Value)) {
    let mut v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    edit(&mut v);
    fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

#[test]
fn validate_reports_layers_and_extent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo_project(dir.path());
    let o = siteselect(&["validate", arg(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("layer ")).count(), 6);
    assert!(out.contains("layer power (point): 2 features"));
    assert!(out.contains("bbox: min (0, 0) max (100, 100)"));
}

#[test]
fn validate_rejects_weight_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo_project(dir.path());
    edit_config(&cfg, |v| v["weights"] = json!([1, 1, 1, 1, 1]));
    let o = siteselect(&["validate", arg(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("weight count mismatch"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn validate_names_missing_layer_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo_project(dir.path());
    fs::remove_file(dir.path().join("rail.csv")).unwrap();
    let o = siteselect(&["validate", arg(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rail.csv"), "{}", stderr(&o));
}

#[test]
fn validate_points_at_malformed_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo_project(dir.path());
    fs::write(dir.path().join("power.csv"), "x,y\n1,2\n3,oops\n").unwrap();
    let o = siteselect(&["validate", arg(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("power.csv:3"), "{}", stderr(&o));
}

#[test]
fn validate_rejects_wrong_version() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo_project(dir.path());
    edit_config(&cfg, |v| v["version"] = json!(2));
    assert_eq!(siteselect(&["validate", arg(&cfg)]).status.code(), Some(2));
}

#[test]
fn score_on_power_plant_is_one_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo_project(dir.path());
    let (x, y) = demo::POWER_PLANTS[0];
    let o = siteselect(&["score", arg(&cfg), "--at", &format!("{x},{y}")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);

    let score_lines: Vec<(String, f64, f64)> = out
        .lines()
        .filter(|l| l.contains(" weight ") && l.contains(" score "))
        .map(|l| {
            let parts: Vec<&str> = l.split_whitespace().collect();
            (
                parts[0].to_string(),
                parts[2].parse().unwrap(),
                parts[4].parse().unwrap(),
            )
        })
        .collect();
    assert_eq!(score_lines.len(), 6);
    let power = score_lines.iter().find(|(n, _, _)| n == "power").unwrap();
    assert!(out
        .lines()
        .any(|l| l.trim_start().starts_with("power") && l.ends_with("score 1.000000000")));
    assert_eq!(power.2, 1.0);

    let fitness: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("fitness "))
        .unwrap()
        .parse()
        .unwrap();
    let dot: f64 = score_lines.iter().map(|(_, w, s)| w * s).sum();
    assert!((fitness - dot).abs() < 1e-8, "{fitness} vs {dot}");
}

#[test]
fn score_outside_extent_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo_project(dir.path());
    let o = siteselect(&["score", arg(&cfg), "--at", "150,-20"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn brute_on_micro_instance_appends_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_project(dir.path(), 0.4);
    let o = siteselect(&["brute", arg(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let remarks = fs::read_to_string(dir.path().join("remarks.csv")).unwrap();
    let lines: Vec<&str> = remarks.lines().collect();
    assert_eq!(
        lines[0],
        "run_id,timestamp,method,seed,col,row,x,y,fitness,accepted"
    );
    assert_eq!(
        &lines[1..],
        [
            "brute-force-none-000001,DETERMINISTIC,brute-force,,0,0,0.500000,0.500000,1.000000000,true",
            "brute-force-none-000001,DETERMINISTIC,brute-force,,1,0,1.500000,0.500000,0.500000000,true",
            "brute-force-none-000001,DETERMINISTIC,brute-force,,0,1,0.500000,1.500000,0.500000000,true",
        ]
    );

    // a second run appends without rewriting and uses a fresh run id
    siteselect(&["brute", arg(&cfg)]);
    let again = fs::read_to_string(dir.path().join("remarks.csv")).unwrap();
    assert!(again.starts_with(&remarks));
    assert_eq!(again.lines().count(), 7);
    assert!(again.contains("brute-force-none-000002"));
}

#[test]
fn impossible_threshold_exits_one_without_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_project(dir.path(), 1.1);
    let o = siteselect(&["search", arg(&cfg)]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let remarks = fs::read_to_string(dir.path().join("remarks.csv")).unwrap_or_default();
    assert!(remarks.lines().count() <= 1, "{remarks}");
    assert!(stdout(&o).contains("200 evaluations, 0 accepted"));
}

#[test]
fn same_seed_produces_identical_appended_bytes() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let cfg = demo_project(dir.path());
        let o = siteselect(&["search", arg(&cfg), "--seed", "17"]);
        assert!(o.status.code() != Some(2), "{}", stderr(&o));
        (o.stdout, fs::read(dir.path().join("remarks.csv")).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn compare_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo_project(dir.path());
    let o = siteselect(&["compare", arg(&cfg), "--seeds", "1,2,3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("Best feasible solution"));
    let table = fs::read_to_string(dir.path().join("comparison.txt")).unwrap();
    assert_eq!(table, stdout(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("comparison.json")).unwrap())
            .unwrap();
    assert_eq!(report["verdicts"]["brute_optimal"], json!(true));
    assert_eq!(report["weighted"]["seeds"], json!([1, 2, 3]));
    assert_eq!(report["brute"]["evaluations"], json!(64));
}

#[test]
fn compare_rejects_empty_seed_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo_project(dir.path());
    let o = siteselect(&["compare", arg(&cfg), "--seeds", ""]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn export_csv_covers_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo_project(dir.path());
    let o = siteselect(&["export", arg(&cfg), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().next(), Some("col,row,x,y,fitness"));
    assert_eq!(out.lines().count(), 1 + 64);

    let out_path = dir.path().join("visited.csv");
    let o = siteselect(&[
        "export",
        arg(&cfg),
        "--format",
        "csv",
        "--method",
        "weighted-sum",
        "--out",
        arg(&out_path),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let visited = fs::read_to_string(out_path).unwrap();
    assert!(visited.lines().count() > 1 && visited.lines().count() <= 65);
}

#[test]
fn export_ascii_map_of_uniform_field_is_all_top_glyph() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("pop.csv"), "x,y,value\n0,0,4\n10,10,4\n").unwrap();
    let cfg = json!({
        "version": 1,
        "layers": [{"name": "pop", "kind": "density", "path": "pop.csv"}],
        "grid": {"nx": 5, "ny": 3},
        "weights": [2.0],
        "threshold": 0.5,
        "output": {"remarks_path": "remarks.csv"}
    });
    let path = dir.path().join("project.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let o = siteselect(&["export", arg(&path), "--format", "ascii-map"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "@@@@@\n@@@@@\n@@@@@\n");
}

#[test]
fn export_ascii_map_micro_instance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_project(dir.path(), 0.4);
    let o = siteselect(&["export", arg(&cfg), "--format", "ascii-map"]);
    assert_eq!(stdout(&o), "+:\n@+\n");
}

#[test]
fn refilter_applies_second_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_project(dir.path(), 0.4);
    siteselect(&["brute", arg(&cfg)]);
    let remarks = dir.path().join("remarks.csv");
    let o = siteselect(&["refilter", arg(&remarks), "--threshold", "0.9"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 2);
    let o = siteselect(&["refilter", arg(&remarks), "--threshold", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn init_demo_writes_loadable_project() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("demo");
    let o = siteselect(&["init-demo", arg(&target), "--nx", "16", "--ny", "12"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = siteselect(&["validate", arg(&target.join("project.json"))]);
    assert!(stdout(&o).contains("grid: 16 x 12 cells"));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(siteselect(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(siteselect(&["--help"]).status.code(), Some(0));
}
