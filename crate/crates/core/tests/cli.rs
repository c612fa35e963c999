//! End-to-end checks of the `ias` binary: outputs, exit codes and config
//! precedence.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/example1.json");

fn ias(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ias"))
        .args(args)
        .env_remove("IAS_SEED")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn page_ids(v: &Value) -> Vec<u64> {
    v["page"].as_array().unwrap().iter().map(|e| e["id"].as_u64().unwrap()).collect()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config: {"));
    lines.skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

fn stdout_text(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn example1_prints_both_tables() {
    let out = ias(&["example1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(page_ids(&v["fixed_slots"]), vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 10]);
    assert_eq!(page_ids(&v["integrated"]), vec![3, 4, 5, 2, 6, 1, 7, 8, 9, 10]);
    assert!((v["fixed_slots"]["revenue"].as_f64().unwrap() - 21.9).abs() < 1e-9);
    assert!((v["integrated"]["gmv"].as_f64().unwrap() - 465.8).abs() < 1e-9);
    assert_eq!(v["fixed_slots"]["page"][1]["actual_payment"].as_f64(), Some(9.9));
}

#[test]
fn heuristic_run_gives_the_integrated_table() {
    let out = ias(&["run", "--scenario", FIXTURE, "--mechanism", "heuristic"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(page_ids(&json(&out)), vec![3, 4, 5, 2, 6, 1, 7, 8, 9, 10]);
}

#[test]
fn zero_alpha_ranks_by_volume_and_charges_nothing() {
    let v = json(&ias(&["run", "--scenario", FIXTURE, "--alpha", "0"]));
    // volumes: organics 100, 90, 85, 80, 75, 70, 68 and ads 70, 75, 90
    assert_eq!(page_ids(&v), vec![4, 3, 5, 6, 7, 2, 8, 1, 9, 10]);
    let pays: Vec<f64> = v["page"].as_array().unwrap().iter().filter_map(|e| e["payment"].as_f64()).collect();
    assert!(pays.iter().all(|&p| p == 0.0));
}

#[test]
fn lambda_one_equals_alpha_half_byte_for_byte() {
    let a = ias(&["run", "--scenario", FIXTURE, "--alpha", "0.5"]);
    let b = ias(&["run", "--scenario", FIXTURE, "--lambda", "1"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn explicit_bids_override_the_file() {
    let v = json(&ias(&["run", "--scenario", FIXTURE, "--mechanism", "gsp", "--m", "3", "--bids", "1,2,3"]));
    assert_eq!(page_ids(&v)[..3], [3, 2, 1]);
}

#[test]
fn tradeoff_is_required_exactly_once() {
    assert_eq!(ias(&["run", "--scenario", FIXTURE]).status.code(), Some(2));
    assert_eq!(ias(&["run", "--scenario", FIXTURE, "--alpha", "0.5", "--lambda", "1"]).status.code(), Some(2));
    assert_eq!(ias(&["sweep-alpha", "--v0", "3"]).status.code(), Some(2));
}

#[test]
fn schema_errors_name_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\n  \"slots\": [1.0],\n  \"items\": [{\"id\": 1, \"kind\": \"ad\", \"w\": \"heavy\"}]\n}\n").unwrap();
    let out = ias(&["run", "--scenario", broken.to_str().unwrap(), "--alpha", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    let missing = dir.path().join("missing.json");
    std::fs::write(&missing, r#"{"slots": [1.0], "items": [{"id": 1, "kind": "ad", "w": 1.0, "g": 2.0}]}"#).unwrap();
    let out = ias(&["run", "--scenario", missing.to_str().unwrap(), "--alpha", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no value distribution"));
}

#[test]
fn infeasible_layout_exits_three() {
    // two ads and seven organics cannot fill ten slots
    let out = ias(&["run", "--scenario", FIXTURE, "--alpha", "1", "--family", "budget", "--c", "2"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn dump_network_writes_to_stderr() {
    let out = ias(&["run", "--scenario", FIXTURE, "--alpha", "0.5", "--family", "budget", "--c", "3", "--dump-network"]);
    assert_eq!(out.status.code(), Some(0));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("node 0 "));
    assert!(err.lines().any(|l| l.starts_with("arc ")));
    json(&out);
}

#[test]
fn sweep_on_the_example_has_one_row_per_alpha() {
    let out = ias(&["sweep-alpha", "--scenario", FIXTURE, "--alphas", "0,0.5,1", "--reps", "50"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout_text(&out);
    assert!(text.lines().nth(1).unwrap() == "abscissa,mean_revenue,se_revenue,mean_gmv,se_gmv");
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][1], "0");
}

#[test]
fn zero_floor_gives_alpha_one() {
    let out = ias(&["solve-constrained", "--v0", "0", "--mc-samples", "50"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&stdout_text(&out));
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0][5].as_str(), rows[0][6].as_str(), rows[0][7].as_str()), ("0", "1", "true"));
}

#[test]
fn unreachable_floor_names_the_maximum() {
    let out = ias(&["solve-constrained", "--v0", "1e9", "--mc-samples", "50"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("maximum achievable volume"));
}

#[test]
fn compare_writes_one_paired_row_per_slot_count() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("compare.csv");
    let out = ias(&["compare", "--reps", "60", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["rows"], 8);
    let rows = csv_rows(&std::fs::read_to_string(&path).unwrap());
    assert_eq!(rows.len(), 8);
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["1", "2", "3", "4", "5", "6", "7", "8"]);
}

#[test]
fn experiment4_prefixes_the_correlation() {
    let out = ias(&["experiment4", "--reps", "40", "--ms", "1,2", "--rs", "-1,1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout_text(&out);
    assert!(text.lines().nth(1).unwrap().starts_with("r,abscissa,"));
    let rows = csv_rows(&text);
    assert_eq!(rows.iter().map(|r| (r[0].as_str(), r[1].as_str())).collect::<Vec<_>>(), [("-1", "1"), ("-1", "2"), ("1", "1"), ("1", "2")]);
}

#[test]
fn seed_falls_back_to_the_environment() {
    let run = |env: Option<&str>, args: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_ias"));
        cmd.args(["sweep-alpha", "--alphas", "0.5", "--reps", "30"]).args(args);
        match env {
            Some(s) => cmd.env("IAS_SEED", s),
            None => cmd.env_remove("IAS_SEED"),
        };
        cmd.output().unwrap().stdout
    };
    assert_eq!(run(Some("7"), &[]), run(None, &["--seed", "7"]));
    assert_ne!(run(Some("7"), &[]), run(Some("8"), &[]));
    // the flag wins over the environment
    assert_eq!(run(Some("8"), &["--seed", "7"]), run(None, &["--seed", "7"]));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"alphas": [0.0, 1.0], "reps": 20, "seed": 3}"#).unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(csv_rows(&stdout_text(&ias(&["sweep-alpha", "--config", c]))).len(), 2);
    assert_eq!(csv_rows(&stdout_text(&ias(&["sweep-alpha", "--config", c, "--alphas", "0,0.5,1"]))).len(), 3);
    std::fs::write(&cfg, r#"{"alpha_grid": [0.0]}"#).unwrap();
    assert_eq!(ias(&["sweep-alpha", "--config", c]).status.code(), Some(2));
}

#[test]
fn oracle_check_reports_per_family_counts() {
    let out = ias(&["oracle-check", "--family", "budget", "--reps", "100"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["families"][0]["family"], "budget");
    assert_eq!(v["families"][0]["mechanism_mismatches"], 0);
    assert_eq!(v["families"][0]["flow_mismatches"], 0);
}

#[test]
fn oracle_check_flags_column_greedy_suboptimality_separately() {
    let out = ias(&["oracle-check", "--family", "column-sparse", "--reps", "300"]);
    let v = json(&out);
    let family = &v["families"][0];
    assert_eq!(family["flow_mismatches"], 0);
    let greedy = family["mechanism_mismatches"].as_u64().unwrap();
    assert_eq!(out.status.code(), Some(if greedy > 0 { 5 } else { 0 }));
    if greedy > 0 {
        let ex = &family["counterexample"];
        assert!(ex["mechanism_objective"].as_f64() < ex["brute_force_objective"].as_f64());
    }
}

#[test]
fn csv_output_is_written_only_to_the_requested_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let out = ias(&["sweep-alpha", "--alphas", "1", "--reps", "10", "--out", path.to_str().unwrap()]);
    assert_eq!(json(&out)["out"], path.to_str().unwrap());
    assert!(Path::new(&path).exists());
}
