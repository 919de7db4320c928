use std::process::Command;

fn intercept() -> Command {
    Command::new(env!("CARGO_BIN_EXE_intercept"))
}

#[test]
fn montecarlo_writes_rows_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let rows = dir.path().join("rows.csv");
    let stats = dir.path().join("stats.json");
    let out = intercept()
        .args(["montecarlo", "--benchmark", "--episodes", "6", "--seed", "4", "--workers", "2"])
        .arg("--rows")
        .arg(&rows)
        .arg("--stats")
        .arg(&stats)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed["episodes"], 6);
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!(saved, printed);
    let mut reader = csv::Reader::from_path(&rows).unwrap();
    assert_eq!(reader.records().count(), 6);
}

#[test]
fn missing_weights_give_a_machine_readable_fault() {
    let out = intercept()
        .args(["montecarlo", "--episodes", "2", "--controller", "policy", "--weights", "/nonexistent/policy.bin"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let fault: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(fault["status"], "fault");
    assert_eq!(fault["kind"], "load-fault");
}

#[test]
fn simulate_replays_its_own_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("episode.csv");
    let out = intercept()
        .args(["simulate", "--scenario-row", "3", "--seed", "2", "--episode", "1", "--replay", "--out"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["replay_mismatched_rows"], 0);
    assert!(path.exists());
}

#[test]
fn gradcheck_passes_from_the_command_line() {
    let out = intercept().args(["gradcheck", "--seed", "3"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
