//! The `raceforge` binary end to end: run, replay and evaluate, plus exit
//! codes for bad input.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_raceforge");

fn raceforge(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RACEFORGE_LOG", "error").output().expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn run_pilot(out: &Path, pilot: &str, extra: &[&str]) -> Output {
    let out = out.to_str().unwrap();
    let mut args = vec![
        "run", "--as-fast-as-possible", "--no-timestamp", "--set", "service.port=0", "--controller", pilot, "--seed", "3",
        "--out-dir", out,
    ];
    args.extend_from_slice(extra);
    raceforge(&args)
}

fn log_of(dir: &Path) -> PathBuf {
    dir.join("run_3.csv")
}

#[test]
fn repeated_runs_write_identical_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = run_pilot(d, "scripted", &["--set", "race.time_limit=5"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |p: PathBuf| std::fs::read(p).unwrap();
    assert_eq!(read(log_of(&a)), read(log_of(&b)));
    assert_eq!(read(a.join("run_3.record.json")), read(b.join("run_3.record.json")));
    let text = String::from_utf8(read(log_of(&a))).unwrap();
    assert!(text.starts_with("# format: raceforge-log"));
    assert!(!text.contains("# timestamp"));
}

#[test]
fn replay_matches_untouched_logs_and_catches_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_pilot(tmp.path(), "gate-follower", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let record = stdout_json(&o);
    assert_eq!(record["outcome"], "finished");
    let log = log_of(tmp.path());

    let r = raceforge(&["replay", log.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(stdout_json(&r), record["record"]);

    let text = std::fs::read_to_string(&log).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let i = lines.iter().position(|l| l.contains("gate_passed:")).expect("a gate was passed");
    let mut cols: Vec<String> = lines[i].split(',').map(str::to_string).collect();
    let py: f64 = cols[3].parse().unwrap();
    cols[3] = (py + 5.0).to_string();
    lines[i] = cols.join(",");
    let tampered = tmp.path().join("tampered.csv");
    std::fs::write(&tampered, lines.join("\n") + "\n").unwrap();
    let rec = log.with_file_name("run_3.record.json");
    let r = raceforge(&["replay", tampered.to_str().unwrap(), "--record", rec.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("mismatch"));
}

#[test]
fn unreadable_logs_exit_with_status_2() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let r = raceforge(&["replay", empty.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    let r = raceforge(&["replay", tmp.path().join("missing.csv").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn config_problems_exit_with_status_2_and_name_the_file() {
    let r = raceforge(&["run", "--config", "/nonexistent/raceforge.json"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("/nonexistent/raceforge.json"));

    let r = raceforge(&["run", "--set", "course.path=/nonexistent/course.json"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("/nonexistent/course.json"));

    let r = raceforge(&["run", "--set", "race.time_limit=-1"]);
    assert_eq!(r.status.code(), Some(2));
    let r = raceforge(&["run", "--controller", "nobody", "--set", "service.port=0"]);
    assert_eq!(r.status.code(), Some(2));
    let r = raceforge(&["fly-to-the-moon"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn a_sixty_second_episode_runs_well_under_real_time() {
    let tmp = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let o = run_pilot(tmp.path(), "hover", &["--set", "race.time_limit=60"]);
    let wall = t0.elapsed().as_secs_f64();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec = stdout_json(&o);
    assert_eq!(rec["outcome"], "timeout");
    assert!(wall < 10.0, "{wall:.1} s");
}

#[test]
fn evaluate_reports_every_seed_in_order() {
    let tmp = tempfile::tempdir().unwrap();
    let o = raceforge(&[
        "evaluate", "--as-fast-as-possible", "--no-timestamp", "--controller", "gate-follower", "--set", "race.seeds=[7,3,11]", "--out-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["seeds"], serde_json::json!([7, 3, 11]));
    let scores: Vec<f64> = v["per_course_scores"].as_array().unwrap().iter().map(|s| s.as_f64().unwrap()).collect();
    assert_eq!(scores.len(), 3);
    assert!(scores.iter().all(|&s| s > 0.0));
    let mean = scores.iter().sum::<f64>() / 3.0;
    assert!((v["final_score"].as_f64().unwrap() - mean).abs() < 1e-9);
    let written: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("evaluation.json")).unwrap()).unwrap();
    assert_eq!(written, v);
    for i in 0..3 {
        assert!(tmp.path().join(format!("course_{i:02}.csv")).exists());
    }
}

#[test]
fn evaluate_drives_an_external_controller_process() {
    let tmp = tempfile::tempdir().unwrap();
    let o = raceforge(&[
        "evaluate", "--as-fast-as-possible", "--no-timestamp", "--set", "race.seeds=[1,2]", "--set", "race.time_limit=3",
        "--out-dir", tmp.path().to_str().unwrap(), "--", BIN, "controller", "hover",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["seeds"], serde_json::json!([1, 2]));
    assert_eq!(v["final_score"], 0.0);
    for c in v["courses"].as_array().unwrap() {
        assert_eq!(c["outcome"], "timeout", "{c}");
        assert_eq!(c["score"], 0.0);
    }
}

#[test]
fn evaluate_scores_a_missing_controller_as_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let o = raceforge(&[
        "evaluate", "--as-fast-as-possible", "--no-timestamp", "--set", "race.seeds=[1]", "--out-dir",
        tmp.path().to_str().unwrap(), "--", "/nonexistent/pilot",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["final_score"], 0.0);
    assert!(v["courses"][0]["note"].as_str().unwrap().contains("/nonexistent/pilot"));
}
