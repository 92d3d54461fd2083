//! Provisioning primitives: burst windows, glidein shapes, and the
//! steady-rate submission allowance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProvisionError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("burst csv line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("burst windows overlap: [{0}, {1}) and [{2}, {3})")]
    OverlappingWindows(u64, u64, u64, u64),
}

/// One scheduled allocation on a bursty (HPC-style) backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstWindow {
    pub start_ms: u64,
    pub duration_ms: u64,
    pub cores: u64,
}

impl BurstWindow {
    pub fn end_ms(&self) -> u64 {
        self.start_ms + self.duration_ms
    }

    pub fn contains(&self, t_ms: u64) -> bool {
        t_ms >= self.start_ms && t_ms < self.end_ms()
    }
}

/// Windows must not overlap (an allocation machine is either ours or not).
/// Returns them sorted by start time.
pub fn validate_windows(mut windows: Vec<BurstWindow>) -> Result<Vec<BurstWindow>, ProvisionError> {
    for w in &windows {
        if w.duration_ms == 0 || w.cores == 0 {
            return Err(ProvisionError::InvalidParameter(format!(
                "burst window at {} must have non-zero duration and cores",
                w.start_ms
            )));
        }
    }
    windows.sort_by_key(|w| w.start_ms);
    for pair in windows.windows(2) {
        if pair[1].start_ms < pair[0].end_ms() {
            return Err(ProvisionError::OverlappingWindows(
                pair[0].start_ms,
                pair[0].end_ms(),
                pair[1].start_ms,
                pair[1].end_ms(),
            ));
        }
    }
    Ok(windows)
}

const BURST_CSV_HEADER: &str = "start_ms,duration_ms,cores";

/// Parse a burst schedule from CSV text with header
/// `start_ms,duration_ms,cores`. Blank lines are ignored.
pub fn load_burst_csv(text: &str) -> Result<Vec<BurstWindow>, ProvisionError> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((n, l)) => break (n, l.trim()),
            None => {
                return Err(ProvisionError::Csv { line: 1, reason: "empty file".into() });
            }
        }
    };
    if header.1 != BURST_CSV_HEADER {
        return Err(ProvisionError::Csv {
            line: header.0 + 1,
            reason: format!("expected header '{BURST_CSV_HEADER}', got '{}'", header.1),
        });
    }
    let mut out = Vec::new();
    for (n, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(ProvisionError::Csv {
                line: n + 1,
                reason: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| {
            s.parse::<u64>().map_err(|e| ProvisionError::Csv {
                line: n + 1,
                reason: format!("bad {what} '{s}': {e}"),
            })
        };
        out.push(BurstWindow {
            start_ms: parse(fields[0], "start_ms")?,
            duration_ms: parse(fields[1], "duration_ms")?,
            cores: parse(fields[2], "cores")?,
        });
    }
    validate_windows(out)
}

/// Shape of the pilot jobs a provider submits. One glidein unpacks into
/// `startds` startd daemons, each presenting `slots_per_startd` slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlideinTemplate {
    pub startds: u32,
    pub slots_per_startd: u32,
    pub slot_cores: u32,
    pub slot_memory_mb: u64,
    /// None: runs until retired by the provider (steady grid pilots).
    #[serde(default)]
    pub lifetime_ms: Option<u64>,
}

impl GlideinTemplate {
    pub fn cores_per_glidein(&self) -> u64 {
        self.startds as u64 * self.slots_per_startd as u64 * self.slot_cores as u64
    }

    pub fn slots_per_glidein(&self) -> u64 {
        self.startds as u64 * self.slots_per_startd as u64
    }

    pub fn validate(&self) -> Result<(), ProvisionError> {
        if self.startds == 0 || self.slots_per_startd == 0 || self.slot_cores == 0 {
            return Err(ProvisionError::InvalidParameter(
                "glidein template needs non-zero startds, slots, and cores".into(),
            ));
        }
        if self.lifetime_ms == Some(0) {
            return Err(ProvisionError::InvalidParameter("glidein lifetime must be > 0".into()));
        }
        Ok(())
    }
}

/// Glideins needed to stand up `cores` cores (rounded up to whole pilots).
pub fn glideins_for_cores(cores: u64, template: &GlideinTemplate) -> u64 {
    let per = template.cores_per_glidein().max(1);
    cores.div_ceil(per)
}

/// Integer accumulator for "N glideins per minute" submission pacing.
/// Fractional allowance carries over between ticks, so the long-run rate is
/// exact regardless of tick interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SubmitAllowance {
    acc: u64,
}

impl SubmitAllowance {
    const MS_PER_MIN: u64 = 60_000;

    /// Credit one tick of `interval_ms` at `rate_per_min`; returns how many
    /// whole glideins may be submitted now.
    pub fn credit(&mut self, rate_per_min: u64, interval_ms: u64) -> u64 {
        self.acc += rate_per_min * interval_ms;
        let n = self.acc / Self::MS_PER_MIN;
        self.acc -= n * Self::MS_PER_MIN;
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(start: u64, dur: u64, cores: u64) -> BurstWindow {
        BurstWindow { start_ms: start, duration_ms: dur, cores }
    }

    #[test]
    fn windows_sort_and_pass_when_disjoint() {
        let v = validate_windows(vec![w(100, 50, 1), w(0, 100, 1)]).unwrap();
        assert_eq!(v[0].start_ms, 0);
        assert_eq!(v[1].start_ms, 100);
    }

    #[test]
    fn touching_windows_are_allowed_overlapping_are_not() {
        assert!(validate_windows(vec![w(0, 100, 1), w(100, 10, 1)]).is_ok());
        let err = validate_windows(vec![w(0, 100, 1), w(99, 10, 1)]).unwrap_err();
        assert!(matches!(err, ProvisionError::OverlappingWindows(0, 100, 99, 109)));
    }

    #[test]
    fn zero_size_windows_are_rejected() {
        assert!(validate_windows(vec![w(0, 0, 1)]).is_err());
        assert!(validate_windows(vec![w(0, 1, 0)]).is_err());
    }

    #[test]
    fn burst_csv_round_trip() {
        let text = "start_ms,duration_ms,cores\n14400000,7200000,1000\n36000000, 10800000, 1000\n";
        let v = load_burst_csv(text).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0], w(14_400_000, 7_200_000, 1000));
        assert_eq!(v[1].end_ms(), 46_800_000);
    }

    #[test]
    fn burst_csv_rejects_wrong_header_and_bad_rows() {
        assert!(matches!(
            load_burst_csv("start,duration,cores\n1,2,3\n"),
            Err(ProvisionError::Csv { line: 1, .. })
        ));
        assert!(matches!(
            load_burst_csv("start_ms,duration_ms,cores\n1,2\n"),
            Err(ProvisionError::Csv { line: 2, .. })
        ));
        assert!(matches!(
            load_burst_csv("start_ms,duration_ms,cores\n1,2,x\n"),
            Err(ProvisionError::Csv { line: 2, .. })
        ));
        assert!(load_burst_csv("").is_err());
    }

    #[test]
    fn glidein_sizing_rounds_up() {
        let t = GlideinTemplate {
            startds: 2,
            slots_per_startd: 2,
            slot_cores: 2,
            slot_memory_mb: 2000,
            lifetime_ms: None,
        };
        assert_eq!(t.cores_per_glidein(), 8);
        assert_eq!(t.slots_per_glidein(), 4);
        assert_eq!(glideins_for_cores(1000, &t), 125);
        assert_eq!(glideins_for_cores(1001, &t), 126);
        assert_eq!(glideins_for_cores(0, &t), 0);
    }

    #[test]
    fn template_validation_rejects_degenerate_shapes() {
        let mut t = GlideinTemplate {
            startds: 1,
            slots_per_startd: 1,
            slot_cores: 1,
            slot_memory_mb: 1,
            lifetime_ms: Some(0),
        };
        assert!(t.validate().is_err());
        t.lifetime_ms = None;
        assert!(t.validate().is_ok());
        t.startds = 0;
        assert!(t.validate().is_err());
    }

    #[test]
    fn submit_allowance_carries_fractions() {
        // 90/min over 20s ticks: 30, 30, 30 per tick.
        let mut a = SubmitAllowance::default();
        assert_eq!(a.credit(90, 20_000), 30);
        // 7/min over 10s ticks: long-run average must be exactly 7/min.
        let mut a = SubmitAllowance::default();
        let total: u64 = (0..60).map(|_| a.credit(7, 10_000)).sum();
        assert_eq!(total, 70); // 10 minutes at 7/min
        // Sub-one allowances accumulate rather than vanish.
        let mut a = SubmitAllowance::default();
        assert_eq!(a.credit(1, 20_000), 0);
        assert_eq!(a.credit(1, 20_000), 0);
        assert_eq!(a.credit(1, 20_000), 1);
    }
}
