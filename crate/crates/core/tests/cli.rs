use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn streamseal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_streamseal"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn corpus(dir: &Path) {
    let o = streamseal(dir, &["gen", "--hours", "6", "--out", "."]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&streamseal(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&streamseal(dir.path(), &["audit", "window", "--id", "x"])), 2);
    let o = streamseal(dir.path(), &["run"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("streamseal.toml"));
    fs::write(dir.path().join("bad.toml"), "[window]\ndurationSeconds = -1\n").unwrap();
    assert_eq!(code(&streamseal(dir.path(), &["--config", "bad.toml", "run"])), 2);
    assert_eq!(code(&streamseal(dir.path(), &["--help"])), 0);
}

#[test]
fn run_then_audit_succeeds_and_tampering_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let run = streamseal(dir.path(), &["--json", "run", "--flush-at-eof"]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let report = json(&run);
    // 6 hours of 2-hour windows for two stations and the region.
    assert_eq!(report["windowsSealed"], 9);
    assert_eq!(report["parked"], 0);

    let all = streamseal(dir.path(), &["--json", "audit", "all", "--strict", "--results", "out/results.ndjson"]);
    assert_eq!(code(&all), 0);
    let summary = json(&all);
    assert_eq!(summary["total"], 9);
    assert_eq!(summary["verified"], 9);

    let id = "Berlin Brandenburg:2025-12-01T02:00:00Z_2025-12-01T04:00:00Z";
    let one = streamseal(dir.path(), &["--json", "audit", "window", "--id", id, "--stream", "BrandenburgCheck"]);
    assert_eq!(code(&one), 0);
    assert_eq!(json(&one)["status"], "Verified");

    // Identical invocations give identical JSON.
    let again = streamseal(dir.path(), &["--json", "audit", "window", "--id", id, "--stream", "BrandenburgCheck"]);
    assert_eq!(one.stdout, again.stdout);

    let payload = dir
        .path()
        .join("Files/payloads/Berlin Brandenburg_2025-12-01T02_00_00Z_2025-12-01T04_00_00Z.json");
    let text = fs::read_to_string(&payload).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.pop();
    fs::write(&payload, lines.join("\n") + "\n").unwrap();
    let tampered = streamseal(dir.path(), &["--json", "audit", "window", "--id", id, "--stream", "BrandenburgCheck"]);
    assert_eq!(code(&tampered), 1);
    let v = json(&tampered);
    assert_eq!(v["status"], "Failed");
    assert_eq!(v["checks"]["countMatch"]["status"], "Fail");
    assert_eq!(code(&streamseal(dir.path(), &["audit", "all"])), 1);
}

#[test]
fn record_membership() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    assert_eq!(code(&streamseal(dir.path(), &["run"])), 0);
    let first = fs::read_to_string(dir.path().join("input/berlin-brandenburg.ndjson")).unwrap();
    fs::write(dir.path().join("r.json"), first.lines().next().unwrap()).unwrap();
    let id = "Berlin Brandenburg:2025-12-01T00:00:00Z_2025-12-01T02:00:00Z";
    let o = streamseal(dir.path(), &["--json", "audit", "record", "--id", id, "--record-file", "r.json"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["status"], "Pass");

    fs::write(dir.path().join("r.json"), first.lines().next().unwrap().replace("\"temperature\":", "\"temperature\":1")).unwrap();
    let o = streamseal(dir.path(), &["audit", "record", "--id", id, "--record-file", "r.json"]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&streamseal(dir.path(), &["audit", "record", "--id", id, "--record-file", "missing.json"])), 3);
}

#[test]
fn ledger_commands() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    assert_eq!(code(&streamseal(dir.path(), &["run"])), 0);
    let list = streamseal(dir.path(), &["--json", "ledger", "list", "--stream", "BerlinCheck"]);
    assert_eq!(code(&list), 0);
    let items = json(&list);
    // The last window stays open without --flush-at-eof.
    assert_eq!(items.as_array().unwrap().len(), 2);
    assert_eq!(items[0]["value"]["blockchainStream"], "BerlinCheck");
    assert_eq!(items[0]["key"], items[0]["value"]["windowId"]);

    let tick = streamseal(dir.path(), &["--json", "ledger", "sim-tick", "--advance", "30"]);
    assert_eq!(code(&tick), 0);
    let before = json(&tick)["height"].as_u64().unwrap();
    let tick = streamseal(dir.path(), &["--json", "ledger", "sim-tick", "--advance", "15"]);
    assert_eq!(json(&tick)["height"].as_u64().unwrap(), before + 1);
    assert_eq!(code(&streamseal(dir.path(), &["ledger", "list", "--stream", "NoSuch"])), 3);
}

#[test]
fn bench_commands_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = streamseal(
        dir.path(),
        &["--json", "bench", "verify", "--corpus", "bc", "--sizes", "5,20,80", "--reps", "2", "--out", "lat.csv"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("lat.csv")).unwrap();
    assert!(csv.starts_with("window_id,record_count,rep,"));
    assert_eq!(csv.lines().count(), 1 + 3 * 2);

    let o = streamseal(
        dir.path(),
        &["--json", "bench", "tps", "--workers", "1,2", "--tx", "6", "--capacity", "2", "--out", "tps.csv"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = json(&o);
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert_eq!(rows[1]["txCount"], 12);
    let csv = fs::read_to_string(dir.path().join("tps.csv")).unwrap();
    assert!(csv.starts_with("stream_name,workers,payload_bytes,"));
}
