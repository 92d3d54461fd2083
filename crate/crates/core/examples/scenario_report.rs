//! Run a library scenario and print its check results with wall-clock
//! timing. Handy while tuning scenario constants:
//!
//! ```text
//! cargo run --release -p simpool-core --example scenario_report -- ccb-bottleneck
//! ```

use std::time::Instant;

use simpool_core::scenario::{run_scenario, scenario_names};

fn main() {
    let mut args = std::env::args().skip(1);
    let Some(name) = args.next() else {
        eprintln!("usage: scenario_report <name> [until_ms]");
        eprintln!("scenarios: {}", scenario_names().join(", "));
        std::process::exit(2);
    };
    let mut until = None;
    let mut dump_dir = None;
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--dump" => dump_dir = args.next(),
            other => until = Some(other.parse::<u64>().expect("until_ms is a number")),
        }
    }
    let t0 = Instant::now();
    match run_scenario(&name, until) {
        Ok(outcome) => {
            println!("scenario {} ({} runs, {:.1}s wall)", outcome.name, outcome.runs.len(), t0.elapsed().as_secs_f64());
            if let Some(dir) = dump_dir {
                std::fs::create_dir_all(&dir).expect("create dump dir");
                for run in &outcome.runs {
                    let base = format!("{dir}/{}", run.label);
                    std::fs::write(format!("{base}.csv"), &run.metrics_csv).unwrap();
                    std::fs::write(format!("{base}.summary.json"), &run.summary_json).unwrap();
                }
            }
            for c in &outcome.checks {
                println!("  [{}] {} — {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
            }
            std::process::exit(if outcome.all_passed() { 0 } else { 1 });
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}
