//! `simpool` — command-line front end for the pool simulator.
//!
//! Subcommands: `run` a config, `validate` one, execute a library
//! `scenario`, `sweep` one numeric parameter across values, and `plot`
//! (emit a gnuplot script for a metrics CSV).
//!
//! Exit codes: 0 success, 1 validation error, 2 I/O error, 3 scenario
//! assertion failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use simpool_core::config::{parse_config, Config, ConfigError};
use simpool_core::engine::Simulation;
use simpool_core::metrics::{parse_series, summarize, summary_json, write_series};
use simpool_core::scenario::{describe, run_scenario, scenario_names};

#[derive(Parser)]
#[command(name = "simpool", version, about = "Deterministic simulator of federated compute pools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write metrics.csv, summary.json, and
    /// resolved-config.json.
    Run {
        /// Path to the configuration document.
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Override the configured RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured horizon (milliseconds).
        #[arg(long, value_name = "MS")]
        until: Option<u64>,
    },
    /// Parse and validate a configuration, printing the first error.
    Validate {
        /// Path to the configuration document.
        config: PathBuf,
    },
    /// Run a library scenario: all of its runs, artifacts, and checks.
    Scenario {
        /// Library entry name; use `--list` to enumerate.
        name: Option<String>,
        /// Output directory (one subdirectory per run).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Truncate every run's horizon (milliseconds).
        #[arg(long, value_name = "MS")]
        until: Option<u64>,
        /// List available scenarios and exit.
        #[arg(long)]
        list: bool,
    },
    /// Run one config repeatedly with a numeric field swept across values.
    Sweep {
        /// Path to the base configuration document.
        config: PathBuf,
        /// Path of the field to vary, e.g. `providers.0.pledged_cores`
        /// or `/providers/0/pledged_cores`.
        #[arg(long)]
        param: String,
        /// Comma-separated values, one run each.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Output directory (one value-suffixed subdirectory per run).
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a gnuplot script that charts a run's metrics CSV.
    Plot {
        /// Path to a metrics.csv produced by `run`, `scenario`, or `sweep`.
        metrics: PathBuf,
    },
}

/// Failure modes mapped to exit codes.
enum CliError {
    /// Bad input: config parse/validation, unknown scenario, bad sweep path.
    Validation(String),
    /// Filesystem trouble: unreadable input, unwritable output.
    Io(String),
    /// A library scenario ran fine but its expectations failed.
    Assertion(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Assertion(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Io(m) | CliError::Assertion(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn main() -> ExitCode {
    // Die quietly when a downstream pipe closes (e.g. `simpool ... | head`)
    // instead of panicking mid-print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, seed, until } => cmd_run(&config, &out, seed, until),
        Command::Validate { config } => cmd_validate(&config),
        Command::Scenario { name, out, until, list } => cmd_scenario(name, out, until, list),
        Command::Sweep { config, param, values, out } => cmd_sweep(&config, &param, &values, &out),
        Command::Plot { metrics } => cmd_plot(&metrics),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn make_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))
}

/// Resolve a parsed config, loading any referenced CSV files relative to
/// the config file's own directory.
fn resolve_near(cfg: Config, config_path: &Path) -> Result<Config, CliError> {
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    cfg.resolve(|rel| {
        let p = base.join(rel);
        std::fs::read_to_string(&p).map_err(|e| format!("cannot read {}: {e}", p.display()))
    })
    .map_err(CliError::from)
}

fn load_config(
    path: &Path,
    seed: Option<u64>,
    until: Option<u64>,
) -> Result<Config, CliError> {
    let mut cfg = parse_config(&read_file(path)?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(h) = until {
        cfg.horizon_ms = h;
    }
    resolve_near(cfg, path)
}

/// Run a resolved config and write the three run artifacts into `dir`.
fn run_to_dir(cfg: Config, dir: &Path) -> Result<Simulation, CliError> {
    make_dir(dir)?;
    let mut sim = Simulation::new(cfg).map_err(|e| CliError::Validation(e.to_string()))?;
    sim.run_to_horizon();
    let csv = write_series(&sim.layout(), sim.frames());
    let columns = parse_series(&csv).expect("generated CSV parses");
    let summary = summary_json(
        &columns,
        sim.config().plateau_window,
        sim.config().plateau_tolerance,
    )
    .expect("summary renders");
    write_file(&dir.join("metrics.csv"), &csv)?;
    write_file(&dir.join("summary.json"), &summary)?;
    write_file(&dir.join("resolved-config.json"), &sim.config().to_json_pretty())?;
    Ok(sim)
}

fn cmd_run(
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    until: Option<u64>,
) -> Result<(), CliError> {
    let cfg = load_config(config, seed, until)?;
    let sim = run_to_dir(cfg, out)?;
    println!(
        "ran {} ms, {} frames, {} jobs submitted -> {}",
        sim.config().horizon_ms,
        sim.frames().len(),
        sim.totals().submitted,
        out.display()
    );
    Ok(())
}

fn cmd_validate(config: &Path) -> Result<(), CliError> {
    load_config(config, None, None)?;
    println!("ok: {}", config.display());
    Ok(())
}

fn cmd_scenario(
    name: Option<String>,
    out: Option<PathBuf>,
    until: Option<u64>,
    list: bool,
) -> Result<(), CliError> {
    if list {
        for n in scenario_names() {
            println!("{n}: {}", describe(n).unwrap_or(""));
        }
        return Ok(());
    }
    let Some(name) = name else {
        return Err(CliError::Validation("scenario name required (or --list)".into()));
    };
    let out = out.ok_or_else(|| CliError::Validation("--out is required".into()))?;
    let outcome = run_scenario(&name, until).map_err(CliError::Validation)?;
    make_dir(&out)?;
    for run in &outcome.runs {
        let dir = out.join(&run.label);
        make_dir(&dir)?;
        write_file(&dir.join("metrics.csv"), &run.metrics_csv)?;
        write_file(&dir.join("summary.json"), &run.summary_json)?;
        write_file(&dir.join("resolved-config.json"), &run.resolved_config_json)?;
    }
    let mut report = String::new();
    for c in &outcome.checks {
        let line =
            format!("[{}] {} — {}\n", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
        print!("{line}");
        report.push_str(&line);
    }
    write_file(&out.join("checks.txt"), &report)?;
    if outcome.all_passed() {
        println!("scenario {name}: all {} checks passed", outcome.checks.len());
        Ok(())
    } else {
        let failed = outcome.checks.iter().filter(|c| !c.passed).count();
        Err(CliError::Assertion(format!(
            "scenario {name}: {failed} of {} checks failed",
            outcome.checks.len()
        )))
    }
}

/// Accept `a.b.0.c` or `/a/b/0/c` and return a JSON pointer.
fn to_pointer(param: &str) -> String {
    if param.starts_with('/') {
        param.to_string()
    } else {
        format!("/{}", param.replace('.', "/"))
    }
}

/// Parse a sweep value, preserving integerness where possible.
fn numeric_value(s: &str) -> Result<Value, CliError> {
    if let Ok(u) = s.parse::<u64>() {
        return Ok(Value::from(u));
    }
    if let Ok(i) = s.parse::<i64>() {
        return Ok(Value::from(i));
    }
    if let Ok(f) = s.parse::<f64>() {
        return Ok(Value::from(f));
    }
    Err(CliError::Validation(format!("sweep value '{s}' is not numeric")))
}

fn cmd_sweep(
    config: &Path,
    param: &str,
    values: &[String],
    out: &Path,
) -> Result<(), CliError> {
    let doc: Value = serde_json::from_str(&read_file(config)?)
        .map_err(|e| CliError::Validation(format!("config is not JSON: {e}")))?;
    let pointer = to_pointer(param);
    match doc.pointer(&pointer) {
        None => {
            return Err(CliError::Validation(format!(
                "sweep path '{pointer}' not found in config"
            )))
        }
        Some(v) if !v.is_number() => {
            return Err(CliError::Validation(format!(
                "sweep path '{pointer}' is not a numeric field"
            )))
        }
        Some(_) => {}
    }
    let leaf = pointer.rsplit('/').next().unwrap_or("value");
    make_dir(out)?;
    let mut rows = String::from(
        "param,value,running_peak,running_plateau,plateau_start_ms,duty_top_last,udp_drops_total,stale_fail_total\n",
    );
    for raw in values {
        let val = numeric_value(raw)?;
        let mut one = doc.clone();
        *one.pointer_mut(&pointer).expect("checked above") = val;
        let cfg = parse_config(&one.to_string())?;
        let cfg = resolve_near(cfg, config)?;
        let dir = out.join(format!("{leaf}-{raw}"));
        let sim = run_to_dir(cfg, &dir)?;
        let series: Vec<(u64, f64)> = sim
            .frames()
            .iter()
            .map(|f| (f.at.as_ms(), f.running_total as f64))
            .collect();
        let stats = summarize(
            &series,
            sim.config().plateau_window,
            sim.config().plateau_tolerance,
        )
        .expect("stats render");
        let (plateau, plateau_at) = stats
            .plateau
            .as_ref()
            .map(|p| (format!("{:.1}", p.value), p.start_ms.to_string()))
            .unwrap_or_default();
        let duty_last = sim.frames().last().map(|f| f.duty_top).unwrap_or(0.0);
        let drops: u64 = sim.frames().iter().map(|f| f.udp_drops_delta).sum();
        let stale: u64 = sim.frames().iter().map(|f| f.stale_fail_delta).sum();
        rows.push_str(&format!(
            "{param},{raw},{:.1},{plateau},{plateau_at},{duty_last:.6},{drops},{stale}\n",
            stats.peak
        ));
        println!("{leaf}={raw}: peak {:.0}, wrote {}", stats.peak, dir.display());
    }
    write_file(&out.join("sweep-summary.csv"), &rows)?;
    Ok(())
}

/// Column groups worth charting, matched against the CSV header.
const PLOT_PANELS: &[(&str, &str)] = &[
    ("jobs", "running_total idle_total"),
    ("cores in use", "cores_"),
    ("collector duty cycle", "duty_"),
    ("update loss and stale claims", "udp_drops stale_fail"),
];

fn cmd_plot(metrics: &Path) -> Result<(), CliError> {
    let text = read_file(metrics)?;
    let header = text
        .lines()
        .next()
        .ok_or_else(|| CliError::Validation("metrics CSV is empty".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"t_ms") {
        return Err(CliError::Validation(
            "not a metrics CSV: first column must be t_ms".into(),
        ));
    }
    // Group columns into panels; indexes are 1-based for gnuplot.
    let mut panels: Vec<(&str, Vec<(usize, &str)>)> = Vec::new();
    for (title, spec) in PLOT_PANELS {
        let mut members: Vec<(usize, &str)> = Vec::new();
        for (i, col) in cols.iter().enumerate() {
            let matched = spec.split_whitespace().any(|w| match w.strip_suffix('_') {
                Some(prefix) => col.starts_with(prefix),
                None => *col == w,
            });
            if matched {
                members.push((i + 1, col));
            }
        }
        if !members.is_empty() {
            panels.push((title, members));
        }
    }
    let stem = metrics.file_stem().and_then(|s| s.to_str()).unwrap_or("metrics");
    println!("# gnuplot script; render with: simpool plot {} | gnuplot", metrics.display());
    println!("set datafile separator ','");
    println!("set terminal pngcairo size 1200,{} enhanced", 300 * panels.len().max(1));
    println!("set output '{stem}.png'");
    println!("set multiplot layout {},1", panels.len().max(1));
    println!("set key outside right");
    println!("set xlabel 'hours'");
    for (title, members) in &panels {
        println!("set title '{title}'");
        let series = members
            .iter()
            .map(|(idx, name)| {
                format!("'{}' using ($1/3.6e6):{idx} with lines title '{name}'", metrics.display())
            })
            .collect::<Vec<_>>()
            .join(", \\\n     ");
        println!("plot {series}");
    }
    println!("unset multiplot");
    Ok(())
}
