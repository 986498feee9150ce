use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn factorplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_factorplan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Two factors of ten values each, base `v0`.
fn write_two_by_ten(dir: &Path) -> String {
    let values: Vec<_> = (0..10).map(|i| serde_json::json!({ "id": format!("v{i}") })).collect();
    let factors: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| serde_json::json!({ "name": name, "base": "v0", "values": values }))
        .collect();
    let space = serde_json::json!({ "name": "two_by_ten", "factors": factors });
    let p = path(dir, "space.json");
    std::fs::write(&p, serde_json::to_string_pretty(&space).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn stair_plan_has_sixteen_entries_of_ten() {
    let dir = tempfile::tempdir().unwrap();
    let plan = path(dir.path(), "plan.json");
    let space = data("tabletop_space.json");
    let out = factorplan(&[
        "plan", "--space", &space, "--strategy", "stair", "--demos", "160", "--seed", "7", "--out",
        plan.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&plan).unwrap()).unwrap();
    let entries = doc["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 16);
    assert!(entries.iter().all(|e| e["demos"] == 10));
}

#[test]
fn full_l_on_two_factors_declares_twenty_changes() {
    let dir = tempfile::tempdir().unwrap();
    let space = write_two_by_ten(dir.path());
    let plan = path(dir.path(), "plan.json");
    let out = factorplan(&[
        "plan", "--space", &space, "--strategy", "l", "--demos", "190", "--out", plan.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = factorplan(&["cost", "--plan", plan.to_str().unwrap(), "--space", &space]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let header = rows.headers().unwrap().clone();
    let col = header.iter().position(|h| h == "declared_total").unwrap();
    let row = rows.records().next().unwrap().unwrap();
    assert_eq!(&row[col], "20");
}

#[test]
fn all_pairs_grid_emits_ninety_configs() {
    let out = factorplan(&["grid", "--space", &data("tabletop_space.json"), "--pairs", "all"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["entries"].as_array().unwrap().len(), 90);
}

#[test]
fn session_walks_a_plan_to_completion() {
    let dir = tempfile::tempdir().unwrap();
    let plan = path(dir.path(), "plan.json");
    let state = path(dir.path(), "state.json");
    let (plan, state) = (plan.to_str().unwrap(), state.to_str().unwrap());
    let space = data("tabletop_space.json");
    factorplan(&["plan", "--space", &space, "--strategy", "stair", "--demos", "160", "--seed", "7", "--out", plan]);

    assert_eq!(factorplan(&["session", "init", "--plan", plan, "--state", state]).status.code(), Some(0));
    let out = factorplan(&["session", "status", "--plan", plan, "--state", state]);
    assert!(stdout(&out).contains("entry 1/16, config = f*, 0/10 demos"));

    let mut last = String::new();
    for _ in 0..160 {
        let out = factorplan(&["session", "step", "--plan", plan, "--state", state, "--event", "demo_done"]);
        assert_eq!(out.status.code(), Some(0));
        last = stdout(&out);
    }
    assert!(last.trim_end().ends_with("session complete"), "{last}");
    let out = factorplan(&["session", "step", "--plan", plan, "--state", state]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(factorplan(&["bogus"]).status.code(), Some(2));
    assert_eq!(factorplan(&["plan", "--bogus"]).status.code(), Some(2));
    assert_eq!(factorplan(&[]).status.code(), Some(2));
}

#[test]
fn validation_errors_exit_one_and_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let bad = path(dir.path(), "bad.json");
    std::fs::write(&bad, "{\"factors\": 3}").unwrap();
    let bad = bad.to_str().unwrap();
    let out = factorplan(&["plan", "--space", bad, "--strategy", "l", "--demos", "10", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(bad));

    let missing = path(dir.path(), "missing.json");
    let out = factorplan(&["grid", "--space", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
