//! End-to-end tests of the `simpool` binary: artifact layout, exit codes,
//! determinism of written files, and sweep mechanics.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_simpool"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config() -> &'static str {
    r#"{
  "horizon_ms": 1800000,
  "seed": 5,
  "metrics_interval_ms": 60000,
  "schedds": [ { "memory_capacity_mb": 1000, "ram_per_running_job_mb": 1 } ],
  "pools": [{
    "name": "global", "role": "global", "schedds": [0],
    "heartbeat_interval_ms": 300000,
    "collector": { "update_cost_ms": 1.0 },
    "negotiators": [ { "match_cost_ms": 1.0, "cycle_delay_ms": 30000 } ],
    "features": { "separate_ccb_host": true }
  }],
  "providers": [{
    "name": "grid", "kind": "grid", "pool": "global", "pledged_cores": 100,
    "glidein": { "startds": 2, "slots_per_startd": 2, "slot_cores": 1, "slot_memory_mb": 2000 },
    "submit_rate_per_min": 600
  }],
  "streams": [{
    "name": "work", "target_schedds": [0],
    "arrival": { "backlog": { "per_schedd": 200, "replenish_interval_ms": 300000 } },
    "duration_ms": { "fixed": { "value": 300000 } }
  }]
}"#
}

fn write_config(dir: &Path) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, small_config()).unwrap();
    p
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process exited")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn validate_accepts_a_good_config_and_rejects_a_bad_one() {
    let dir = tmp("validate");
    let cfg = write_config(&dir);
    let ok = bin().arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(code(&ok), 0, "stderr: {}", String::from_utf8_lossy(&ok.stderr));

    // Unknown key must be rejected, with the error naming the key's path.
    let bad = dir.join("bad.json");
    std::fs::write(&bad, small_config().replace("\"seed\"", "\"sed\"")).unwrap();
    let rej = bin().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(code(&rej), 1);
    let msg = String::from_utf8_lossy(&rej.stderr).to_string();
    assert!(msg.contains("sed"), "error should name the unknown key: {msg}");
}

#[test]
fn missing_config_file_is_an_io_error() {
    let out = bin().arg("validate").arg("/definitely/not/here.json").output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn run_writes_the_three_artifacts_and_is_deterministic() {
    let dir = tmp("run-determinism");
    let cfg = write_config(&dir);
    for sub in ["a", "b"] {
        let out = bin()
            .arg("run")
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join(sub))
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["metrics.csv", "summary.json", "resolved-config.json"] {
        let a = read(&dir.join("a").join(f));
        let b = read(&dir.join("b").join(f));
        assert_eq!(a, b, "{f} must be byte-identical across reruns");
        assert!(!a.is_empty());
    }
}

#[test]
fn rerunning_the_resolved_config_reproduces_the_metrics() {
    let dir = tmp("resolved-roundtrip");
    let cfg = write_config(&dir);
    let first = bin().arg("run").arg(&cfg).arg("--out").arg(dir.join("a")).output().unwrap();
    assert_eq!(code(&first), 0);
    let second = bin()
        .arg("run")
        .arg(dir.join("a").join("resolved-config.json"))
        .arg("--out")
        .arg(dir.join("b"))
        .output()
        .unwrap();
    assert_eq!(code(&second), 0, "stderr: {}", String::from_utf8_lossy(&second.stderr));
    assert_eq!(
        read(&dir.join("a").join("metrics.csv")),
        read(&dir.join("b").join("metrics.csv")),
        "the resolved config alone must reproduce the run"
    );
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tmp("seed-override");
    let cfg = write_config(&dir);
    for (sub, seed) in [("a", "5"), ("b", "6")] {
        let out = bin()
            .arg("run")
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join(sub))
            .arg("--seed")
            .arg(seed)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
    }
    // Same seed as the config -> same bytes; the resolved configs differ.
    let a = read(&dir.join("a").join("resolved-config.json"));
    let b = read(&dir.join("b").join("resolved-config.json"));
    assert_ne!(a, b, "seed override must land in the resolved config");
    assert!(b.contains("\"seed\": 6"));
}

#[test]
fn zero_horizon_yields_a_header_only_csv() {
    let dir = tmp("zero-horizon");
    let cfg = write_config(&dir);
    let out = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("z"))
        .arg("--until")
        .arg("0")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir.join("z").join("metrics.csv"));
    assert_eq!(csv.lines().count(), 1, "expected only the header line");
    assert!(csv.starts_with("t_ms,running_total"));
}

#[test]
fn unknown_scenario_is_a_validation_error() {
    let dir = tmp("unknown-scenario");
    let out =
        bin().arg("scenario").arg("no-such").arg("--out").arg(dir.join("x")).output().unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn scenario_writes_artifacts_and_passes_at_full_horizon() {
    let dir = tmp("scenario-pass");
    let out = bin()
        .arg("scenario")
        .arg("schedd-bottleneck-1to100")
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for f in ["metrics.csv", "summary.json", "resolved-config.json"] {
        assert!(dir.join("baseline").join(f).exists(), "missing baseline/{f}");
    }
    let checks = read(&dir.join("checks.txt"));
    assert!(checks.lines().all(|l| l.starts_with("[ok]")), "checks:\n{checks}");
}

#[test]
fn truncated_scenario_fails_its_assertions() {
    // 10 minutes is not enough to reach the capacity plateau, so the
    // library checks must fail and the exit code must say "assertion".
    let dir = tmp("scenario-truncated");
    let out = bin()
        .arg("scenario")
        .arg("schedd-bottleneck-1to100")
        .arg("--out")
        .arg(&dir)
        .arg("--until")
        .arg("600000")
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let checks = read(&dir.join("checks.txt"));
    assert!(checks.contains("[FAIL]"));
}

#[test]
fn scenario_list_names_every_entry() {
    let out = bin().arg("scenario").arg("--list").output().unwrap();
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    for name in [
        "schedd-bottleneck",
        "schedd-bottleneck-1to100",
        "ccb-bottleneck",
        "collector-saturation",
        "collector-saturation-1to100",
        "optimizations-ablation",
        "nersc-burst",
        "federated-hpc",
    ] {
        assert!(text.contains(name), "--list should mention {name}");
    }
}

#[test]
fn sweep_runs_each_value_in_its_own_directory() {
    let dir = tmp("sweep");
    let cfg = write_config(&dir);
    let out = bin()
        .arg("sweep")
        .arg(&cfg)
        .arg("--param")
        .arg("providers.0.pledged_cores")
        .arg("--values")
        .arg("48,96")
        .arg("--out")
        .arg(dir.join("sw"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for v in ["48", "96"] {
        let sub = dir.join("sw").join(format!("pledged_cores-{v}"));
        assert!(sub.join("metrics.csv").exists());
        let resolved = read(&sub.join("resolved-config.json"));
        assert!(resolved.contains(&format!("\"pledged_cores\": {v}")));
    }
    let summary = read(&dir.join("sw").join("sweep-summary.csv"));
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 3, "header + one row per value:\n{summary}");
    assert!(lines[0].starts_with("param,value,running_peak"));
    // A glidein holds 4 cores, so pledges resolve to peaks of 48 and 96.
    assert!(lines[1].contains(",48,48.0,"));
    assert!(lines[2].contains(",96,96.0,"));
}

#[test]
fn sweep_rejects_non_numeric_and_missing_paths() {
    let dir = tmp("sweep-bad");
    let cfg = write_config(&dir);
    let non_numeric = bin()
        .arg("sweep")
        .arg(&cfg)
        .arg("--param")
        .arg("providers.0.name")
        .arg("--values")
        .arg("1")
        .arg("--out")
        .arg(dir.join("x"))
        .output()
        .unwrap();
    assert_eq!(code(&non_numeric), 1);
    let missing = bin()
        .arg("sweep")
        .arg(&cfg)
        .arg("--param")
        .arg("/nope/q")
        .arg("--values")
        .arg("1")
        .arg("--out")
        .arg(dir.join("y"))
        .output()
        .unwrap();
    assert_eq!(code(&missing), 1);
}

#[test]
fn plot_emits_a_gnuplot_script_for_the_csv() {
    let dir = tmp("plot");
    let cfg = write_config(&dir);
    let run = bin().arg("run").arg(&cfg).arg("--out").arg(dir.join("r")).output().unwrap();
    assert_eq!(code(&run), 0);
    let out = bin().arg("plot").arg(dir.join("r").join("metrics.csv")).output().unwrap();
    assert_eq!(code(&out), 0);
    let script = String::from_utf8_lossy(&out.stdout).to_string();
    for needle in ["set datafile separator ','", "running_total", "duty_top", "plot "] {
        assert!(script.contains(needle), "script missing {needle}:\n{script}");
    }
    let not_csv = bin().arg("plot").arg(&cfg).output().unwrap();
    assert_eq!(code(&not_csv), 1, "a config file is not a metrics CSV");
}

#[test]
fn burst_schedule_csv_is_loaded_relative_to_the_config() {
    let dir = tmp("burst-csv");
    let doc = small_config().replace(
        r#""kind": "grid", "pool": "global", "pledged_cores": 100,"#,
        r#""kind": "hpc", "pool": "global", "integration": "site_extension",
           "burst_schedule_csv": "bursts.csv", "grace_ms": 0,"#,
    );
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, doc).unwrap();
    std::fs::write(dir.join("bursts.csv"), "start_ms,duration_ms,cores\n0,900000,40\n").unwrap();
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(dir.join("r")).output().unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    // The resolved config inlines the schedule: rerunning it elsewhere
    // needs no csv file.
    let resolved = read(&dir.join("r").join("resolved-config.json"));
    assert!(resolved.contains("\"burst_schedule\""));
    assert!(!resolved.contains("bursts.csv"));
}
