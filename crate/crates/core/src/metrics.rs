//! Periodic observables and their export: CSV series, plateau detection,
//! and per-series summary statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::SimTime;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("csv parse: {0}")]
    Csv(String),
}

/// One sample of everything the simulator can report. The CSV projection
/// (see [`write_series`]) is a fixed subset; the remaining fields feed
/// in-process assertions.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsFrame {
    pub at: SimTime,
    pub running_total: u64,
    pub idle_total: u64,
    /// Cores of slots currently running jobs.
    pub cores_total: u64,
    pub cores_per_provider: Vec<u64>,
    /// Slots truly Unclaimed in the global pool.
    pub unclaimed_true: u64,
    /// Unclaimed slots per the global top collector's (possibly stale) view.
    pub unclaimed_viewed: u64,
    pub duty_top: f64,
    pub duty_secondaries: Vec<f64>,
    /// Updates dropped since the previous frame (global pool, all collectors).
    pub udp_drops_delta: u64,
    /// Claims that failed on a stale view since the previous frame.
    pub stale_fail_delta: u64,
    pub ccb_registered: u64,
    /// Duration of the global pool's most recently completed negotiation cycle.
    pub nego_ms: u64,
    pub running_per_schedd: Vec<u64>,
    // -- extended fields, not in the CSV --
    pub submitted_total: u64,
    pub completed_total: u64,
    pub evicted_total: u64,
    /// Cores of live (non-Dead) slots per provider.
    pub live_cores_per_provider: Vec<u64>,
    pub idle_per_schedd: Vec<u64>,
}

/// Column layout for a run: provider names and counts fix the header.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesLayout {
    pub providers: Vec<String>,
    pub secondaries: usize,
    pub schedds: usize,
}

impl SeriesLayout {
    pub fn header(&self) -> String {
        let mut h = String::from("t_ms,running_total,idle_total,cores_total");
        for p in &self.providers {
            write!(h, ",cores_{p}").unwrap();
        }
        h.push_str(",unclaimed_true,unclaimed_viewed,duty_top");
        for i in 0..self.secondaries {
            write!(h, ",duty_secondary_{i}").unwrap();
        }
        h.push_str(",udp_drops,stale_fail,ccb_reg,nego_ms");
        for i in 0..self.schedds {
            write!(h, ",running_{i}").unwrap();
        }
        h
    }
}

fn fmt_real(v: f64) -> String {
    format!("{v:.6}")
}

/// Render frames as CSV: fixed header order, integers exact, reals with six
/// decimals. Deterministic for identical frame sequences.
pub fn write_series(layout: &SeriesLayout, frames: &[MetricsFrame]) -> String {
    let mut out = layout.header();
    out.push('\n');
    for f in frames {
        debug_assert_eq!(f.cores_per_provider.len(), layout.providers.len());
        debug_assert_eq!(f.duty_secondaries.len(), layout.secondaries);
        debug_assert_eq!(f.running_per_schedd.len(), layout.schedds);
        write!(out, "{},{},{},{}", f.at.as_ms(), f.running_total, f.idle_total, f.cores_total)
            .unwrap();
        for c in &f.cores_per_provider {
            write!(out, ",{c}").unwrap();
        }
        write!(out, ",{},{},{}", f.unclaimed_true, f.unclaimed_viewed, fmt_real(f.duty_top))
            .unwrap();
        for d in &f.duty_secondaries {
            write!(out, ",{}", fmt_real(*d)).unwrap();
        }
        write!(
            out,
            ",{},{},{},{}",
            f.udp_drops_delta, f.stale_fail_delta, f.ccb_registered, f.nego_ms
        )
        .unwrap();
        for r in &f.running_per_schedd {
            write!(out, ",{r}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parse a CSV produced by [`write_series`] back into column vectors,
/// keyed by header name. Values come back as f64 (integers exactly).
pub fn parse_series(text: &str) -> Result<BTreeMap<String, Vec<f64>>, MetricsError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| MetricsError::Csv("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let mut table: Vec<Vec<f64>> = vec![Vec::new(); cols.len()];
    for (n, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(MetricsError::Csv(format!(
                "row {}: {} fields, expected {}",
                n + 2,
                fields.len(),
                cols.len()
            )));
        }
        for (i, field) in fields.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|e| MetricsError::Csv(format!("row {}, col {}: {e}", n + 2, cols[i])))?;
            table[i].push(v);
        }
    }
    Ok(cols.iter().zip(table).map(|(c, v)| (c.to_string(), v)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub value: f64,
    pub start_ms: u64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub peak: f64,
    pub peak_at_ms: u64,
    pub time_average: f64,
    pub plateau: Option<Plateau>,
}

/// Find the plateau a series settles into: the longest suffix of at least
/// `window` consecutive samples whose spread (max - min) stays within
/// `tolerance` x the suffix mean. Returns its mean value and start.
pub fn detect_plateau(
    series: &[(u64, f64)],
    window: usize,
    tolerance: f64,
) -> Result<Option<Plateau>, MetricsError> {
    if window < 2 {
        return Err(MetricsError::InvalidParameter("plateau window must be >= 2".into()));
    }
    if !(tolerance > 0.0) {
        return Err(MetricsError::InvalidParameter("plateau tolerance must be > 0".into()));
    }
    if series.len() < window {
        return Ok(None);
    }
    // Extend the suffix backwards from the end while it stays tight.
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut len = 0usize;
    for &(_, v) in series.iter().rev() {
        let nmin = min.min(v);
        let nmax = max.max(v);
        let nsum = sum + v;
        let nlen = len + 1;
        let mean = nsum / nlen as f64;
        if (nmax - nmin).abs() > tolerance * mean.abs() {
            break;
        }
        min = nmin;
        max = nmax;
        sum = nsum;
        len = nlen;
    }
    if len < window {
        return Ok(None);
    }
    let start = series.len() - len;
    Ok(Some(Plateau {
        value: sum / len as f64,
        start_ms: series[start].0,
        samples: len,
    }))
}

/// Summarize one series: peak (earliest occurrence), time average over
/// sample points, and plateau per [`detect_plateau`].
pub fn summarize(
    series: &[(u64, f64)],
    window: usize,
    tolerance: f64,
) -> Result<SummaryStats, MetricsError> {
    if series.is_empty() {
        return Ok(SummaryStats { peak: 0.0, peak_at_ms: 0, time_average: 0.0, plateau: None });
    }
    let mut peak = f64::NEG_INFINITY;
    let mut peak_at = 0;
    let mut sum = 0.0;
    for &(t, v) in series {
        if v > peak {
            peak = v;
            peak_at = t;
        }
        sum += v;
    }
    Ok(SummaryStats {
        peak,
        peak_at_ms: peak_at,
        time_average: sum / series.len() as f64,
        plateau: detect_plateau(series, window, tolerance)?,
    })
}

/// Build summary.json content: one SummaryStats per CSV column (except the
/// time axis), keyed by column name, in lexicographic order.
pub fn summary_json(
    columns: &BTreeMap<String, Vec<f64>>,
    window: usize,
    tolerance: f64,
) -> Result<String, MetricsError> {
    let times: Vec<u64> = columns
        .get("t_ms")
        .map(|v| v.iter().map(|&t| t as u64).collect())
        .unwrap_or_default();
    let mut out: BTreeMap<&str, SummaryStats> = BTreeMap::new();
    for (name, vals) in columns {
        if name == "t_ms" {
            continue;
        }
        let series: Vec<(u64, f64)> =
            times.iter().copied().zip(vals.iter().copied()).collect();
        out.insert(name, summarize(&series, window, tolerance)?);
    }
    Ok(serde_json::to_string_pretty(&out).expect("summary serializes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(at: u64, running: u64) -> MetricsFrame {
        MetricsFrame {
            at: SimTime(at),
            running_total: running,
            idle_total: 3,
            cores_total: running,
            cores_per_provider: vec![running, 0],
            unclaimed_true: 1,
            unclaimed_viewed: 2,
            duty_top: 0.1234567,
            duty_secondaries: vec![0.5],
            udp_drops_delta: 7,
            stale_fail_delta: 0,
            ccb_registered: 4,
            nego_ms: 60,
            running_per_schedd: vec![running],
            submitted_total: 10,
            completed_total: 1,
            evicted_total: 0,
            live_cores_per_provider: vec![running, 0],
            idle_per_schedd: vec![3],
        }
    }

    fn layout() -> SeriesLayout {
        SeriesLayout {
            providers: vec!["site_a".into(), "hpc_b".into()],
            secondaries: 1,
            schedds: 1,
        }
    }

    #[test]
    fn header_matches_documented_order() {
        assert_eq!(
            layout().header(),
            "t_ms,running_total,idle_total,cores_total,cores_site_a,cores_hpc_b,\
             unclaimed_true,unclaimed_viewed,duty_top,duty_secondary_0,\
             udp_drops,stale_fail,ccb_reg,nego_ms,running_0"
        );
    }

    #[test]
    fn zero_frames_give_header_only() {
        let csv = write_series(&layout(), &[]);
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.ends_with('\n'));
    }

    #[test]
    fn two_frames_give_three_lines_and_fixed_precision() {
        let csv = write_series(&layout(), &[frame(60_000, 5), frame(120_000, 8)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("60000,5,3,5,5,0,1,2,0.123457,0.500000,7,0,4,60,5"), "{}", lines[1]);
    }

    #[test]
    fn csv_round_trips_exactly() {
        let frames = vec![frame(60_000, 5), frame(120_000, 8)];
        let csv = write_series(&layout(), &frames);
        let cols = parse_series(&csv).unwrap();
        assert_eq!(cols["t_ms"], vec![60_000.0, 120_000.0]);
        assert_eq!(cols["running_total"], vec![5.0, 8.0]);
        assert_eq!(cols["cores_hpc_b"], vec![0.0, 0.0]);
        assert_eq!(cols["duty_top"], vec![0.123457, 0.123457]);
        // Writing the parsed values back reproduces the text for integers.
        assert_eq!(cols["udp_drops"], vec![7.0, 7.0]);
    }

    #[test]
    fn parse_rejects_ragged_rows() {
        assert!(parse_series("a,b\n1\n").is_err());
        assert!(parse_series("a,b\n1,x\n").is_err());
    }

    #[test]
    fn constant_series_is_a_plateau_from_the_start() {
        let series: Vec<(u64, f64)> = (0..20).map(|i| (i * 60, 500_000.0)).collect();
        let p = detect_plateau(&series, 10, 0.01).unwrap().unwrap();
        assert_eq!(p.value, 500_000.0);
        assert_eq!(p.start_ms, 0);
        assert_eq!(p.samples, 20);
    }

    #[test]
    fn linear_ramp_has_no_plateau() {
        let series: Vec<(u64, f64)> = (0..50).map(|i| (i, 100.0 * i as f64)).collect();
        assert!(detect_plateau(&series, 10, 0.01).unwrap().is_none());
    }

    #[test]
    fn ramp_then_flat_plateaus_at_ramp_end() {
        let mut series: Vec<(u64, f64)> = (0..30).map(|i| (i * 60, 30.0 * i as f64)).collect();
        for i in 30..80 {
            let wobble = if i % 2 == 0 { 1.0 } else { -1.0 };
            series.push((i * 60, 800.0 + wobble));
        }
        let p = detect_plateau(&series, 10, 0.01).unwrap().unwrap();
        assert!((p.value - 800.0).abs() < 1.0, "{p:?}");
        assert_eq!(p.start_ms, 30 * 60);
        assert_eq!(p.samples, 50);
    }

    #[test]
    fn all_zero_series_plateaus_at_zero() {
        let series: Vec<(u64, f64)> = (0..15).map(|i| (i, 0.0)).collect();
        let p = detect_plateau(&series, 10, 0.05).unwrap().unwrap();
        assert_eq!(p.value, 0.0);
        assert_eq!(p.samples, 15);
    }

    #[test]
    fn short_series_and_bad_parameters() {
        let series: Vec<(u64, f64)> = (0..5).map(|i| (i, 1.0)).collect();
        assert!(detect_plateau(&series, 10, 0.01).unwrap().is_none());
        assert!(detect_plateau(&series, 1, 0.01).is_err());
        assert!(detect_plateau(&series, 2, 0.0).is_err());
    }

    #[test]
    fn summarize_reports_earliest_peak_and_average() {
        let series = vec![(0, 1.0), (60, 5.0), (120, 5.0), (180, 3.0)];
        let s = summarize(&series, 2, 0.5).unwrap();
        assert_eq!(s.peak, 5.0);
        assert_eq!(s.peak_at_ms, 60);
        assert_eq!(s.time_average, 3.5);
    }

    #[test]
    fn summary_json_covers_every_column_but_time() {
        let csv = write_series(&layout(), &[frame(60_000, 5), frame(120_000, 5)]);
        let cols = parse_series(&csv).unwrap();
        let json = summary_json(&cols, 2, 0.01).unwrap();
        let parsed: BTreeMap<String, SummaryStats> = serde_json::from_str(&json).unwrap();
        assert!(parsed.contains_key("running_total"));
        assert!(parsed.contains_key("cores_site_a"));
        assert!(!parsed.contains_key("t_ms"));
        let run = parsed["running_total"];
        assert_eq!(run.peak, 5.0);
        assert_eq!(run.plateau.unwrap().value, 5.0);
    }
}
