mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixtures_dir;

fn ordopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ordopt")).args(args).output().expect("binary runs")
}

fn fixture_args(name: &str) -> Vec<String> {
    let d = fixtures_dir();
    vec![
        "--catalog".into(),
        d.join(format!("{name}.json")).display().to_string(),
        "--query".into(),
        d.join(format!("{name}_query.json")).display().to_string(),
    ]
}

fn run_with(cmd: &[&str], name: &str, extra: &[&str]) -> Output {
    let fa = fixture_args(name);
    let mut args: Vec<&str> = cmd.to_vec();
    args.extend(fa.iter().map(String::as_str));
    args.extend_from_slice(extra);
    ordopt(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn optimize_example1_prints_a_plan_with_shared_prefixes() {
    let out = run_with(&["optimize"], "example1", &["--heuristic", "favorable", "--refine"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let joins: Vec<&str> = text.lines().filter(|l| l.trim_start().starts_with("MergeJoin")).collect();
    assert_eq!(joins.len(), 2, "{text}");
    assert!(joins.iter().all(|l| l.contains("on (make,year")), "{text}");
}

#[test]
fn output_is_deterministic() {
    let a = run_with(&["optimize"], "q4", &["--json"]);
    let b = run_with(&["optimize"], "q4", &["--json"]);
    assert_eq!(a.stdout, b.stdout);
    let s = ["sort", "--algo", "srs", "--rows", "5000", "--segment-rows", "50", "--mem-blocks", "4", "--seed", "3", "--json"];
    assert_eq!(ordopt(&s).stdout, ordopt(&s).stdout);
}

#[test]
fn json_plan_round_trips_through_refine() {
    let dir = tempfile::tempdir().unwrap();
    let plan_path = dir.path().join("plan.json");
    let out = run_with(
        &["optimize"],
        "postopt",
        &["--json", "--config", &fixtures_dir().join("postopt_params.json").display().to_string()],
    );
    assert!(out.status.success());
    std::fs::write(&plan_path, &out.stdout).unwrap();
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let before = doc["plan"]["cost"].as_f64().unwrap();

    let refined = ordopt(&["refine", "--plan", plan_path.to_str().unwrap(), "--json"]);
    assert!(refined.status.success(), "{}", String::from_utf8_lossy(&refined.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&refined.stdout).unwrap();
    assert!(doc["plan"]["cost"].as_f64().unwrap() < before);
    assert_eq!(doc["refined"], true);

    let text = stdout(&ordopt(&["refine", "--plan", plan_path.to_str().unwrap()]));
    assert!(text.starts_with("accepted: true"), "{text}");
}

#[test]
fn explain_afm_lists_orders_per_node() {
    let out = run_with(&["explain-afm"], "example1", &[]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("Scan(catalog1)\n        - year\n"), "{text}");
    assert!(text.contains("Scan(rating)\n      - make\n"), "{text}");
    let json = run_with(&["explain-afm"], "example1", &["--json"]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 6);
}

#[test]
fn mrs_with_fitting_segments_does_no_io() {
    let out = ordopt(&[
        "sort", "--algo", "mrs", "--rows", "1000", "--segment-rows", "100", "--mem-blocks", "4", "--json",
    ]);
    assert!(out.status.success());
    let m: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(m["run_blocks_written"], 0);
    assert_eq!(m["run_blocks_read"], 0);
    assert_eq!(m["tuples_out"], 1000);
}

#[test]
fn bench_a3_emits_the_sweep() {
    let out = ordopt(&["bench", "a3", "--rows", "10000", "--mem-blocks", "16"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().collect();
    assert!(rows[0].starts_with("segment_rows,srs_blocks_written"));
    let segs: Vec<&str> = rows[1..].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(segs, ["1", "10", "100", "1000", "10000"]);
}

#[test]
fn bench_b3_normalizes_to_exhaustive() {
    let out = ordopt(&["bench", "b3", "--fixtures", fixtures_dir().to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    for line in text.lines().filter(|l| l.contains(",exhaustive,")) {
        assert!(line.ends_with(",100.00"), "{line}");
    }
    assert!(text.lines().any(|l| l.starts_with("q3,favorable,")));
}

#[test]
fn unknown_flag_exits_1_with_usage() {
    let out = ordopt(&["optimize", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn validation_error_exits_1_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("bad_query.json");
    std::fs::write(
        &q,
        r#"{"expr": {"op": "join", "on": ["nope"], "left": {"op": "scan", "relation": "r1"},
            "right": {"op": "scan", "relation": "r2"}}}"#,
    )
    .unwrap();
    let cat = fixtures_dir().join("q4.json");
    let out = ordopt(&["optimize", "--catalog", cat.to_str().unwrap(), "--query", q.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("expr.on[0]"));
}

fn wide_join(dir: &Path) -> (String, String) {
    let cols: Vec<String> = (0..7).map(|i| format!("\"c{i}\"")).collect();
    let distincts: Vec<String> = (0..7).map(|i| format!("\"c{i}\": {}", 2 + i)).collect();
    let (cols, distincts) = (cols.join(","), distincts.join(","));
    let cat = dir.join("wide.json");
    std::fs::write(
        &cat,
        format!(
            r#"{{"relations": [
                {{"name": "l", "row_count": 1000, "tuple_bytes": 56, "columns": [{cols}], "distincts": {{{distincts}}}}},
                {{"name": "r", "row_count": 1000, "tuple_bytes": 56, "columns": [{cols}], "distincts": {{{distincts}}}}}]}}"#
        ),
    )
    .unwrap();
    let q = dir.join("wide_query.json");
    std::fs::write(
        &q,
        format!(r#"{{"expr": {{"op": "join", "on": [{cols}], "left": {{"op": "scan", "relation": "l"}}, "right": {{"op": "scan", "relation": "r"}}}}}}"#),
    )
    .unwrap();
    (cat.display().to_string(), q.display().to_string())
}

#[test]
fn guard_violation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (cat, q) = wide_join(dir.path());
    let out = ordopt(&["optimize", "--catalog", &cat, "--query", &q, "--heuristic", "exhaustive"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds guard"));
    let ok = ordopt(&["optimize", "--catalog", &cat, "--query", &q, "--heuristic", "favorable"]);
    assert!(ok.status.success());
}

#[test]
fn guard_override_lifts_the_limit() {
    let dir = tempfile::tempdir().unwrap();
    let (cat, q) = wide_join(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_ordopt"))
        .args(["optimize", "--catalog", &cat, "--query", &q, "--heuristic", "exhaustive"])
        .env("ORDOPT_GUARD_OVERRIDE", "1")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_exits_0() {
    let out = ordopt(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("explain-afm"));
}
