//! Workload shapes: how jobs arrive and what they look like.

use serde::{Deserialize, Serialize};

use crate::kernel::{KernelError, RandomStream};

/// A sampled or constant quantity (durations, sizes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Dist {
    Fixed { value: u64 },
    Exponential { mean: f64 },
    UniformInt { min: u64, max: u64 },
}

impl Dist {
    pub fn validate(&self) -> Result<(), KernelError> {
        match *self {
            Dist::Fixed { .. } => Ok(()),
            Dist::Exponential { mean } if mean > 0.0 => Ok(()),
            Dist::Exponential { mean } => Err(KernelError::InvalidParameter(format!(
                "exponential mean must be > 0, got {mean}"
            ))),
            Dist::UniformInt { min, max } if min <= max => Ok(()),
            Dist::UniformInt { min, max } => Err(KernelError::InvalidParameter(format!(
                "uniform range is empty: [{min}, {max}]"
            ))),
        }
    }

    /// Draw one value, rounding continuous draws to whole units and keeping
    /// them at least 1 so a sampled duration can never be instantaneous.
    pub fn sample(&self, rng: &mut RandomStream) -> u64 {
        match *self {
            Dist::Fixed { value } => value,
            Dist::Exponential { mean } => {
                let x = rng.draw_exponential(mean).expect("validated mean");
                x.round().max(1.0) as u64
            }
            Dist::UniformInt { min, max } => rng.uniform_int(min, max),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Dist::Fixed { value } => value as f64,
            Dist::Exponential { mean } => mean,
            Dist::UniformInt { min, max } => (min + max) as f64 / 2.0,
        }
    }
}

/// How a stream of jobs reaches its schedds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalSpec {
    /// Keep each target schedd's idle queue topped up to `per_schedd`,
    /// re-checked every `replenish_interval_ms` (an always-saturated user).
    Backlog { per_schedd: u64, replenish_interval_ms: u64 },
    /// Open-loop arrivals at a fixed rate, deterministically spaced.
    Rate { jobs_per_sec: f64 },
}

impl ArrivalSpec {
    pub fn validate(&self) -> Result<(), KernelError> {
        match *self {
            ArrivalSpec::Backlog { replenish_interval_ms: 0, .. } => Err(
                KernelError::InvalidParameter("replenish interval must be > 0".into()),
            ),
            ArrivalSpec::Backlog { .. } => Ok(()),
            ArrivalSpec::Rate { jobs_per_sec } if jobs_per_sec > 0.0 => Ok(()),
            ArrivalSpec::Rate { jobs_per_sec } => Err(KernelError::InvalidParameter(format!(
                "arrival rate must be > 0, got {jobs_per_sec}"
            ))),
        }
    }
}

/// Arrival instant of the k-th job (k >= 1) of a rate stream, in ms.
/// Evenly spaced so a given rate yields an exact long-run count.
pub fn rate_arrival_ms(k: u64, jobs_per_sec: f64) -> u64 {
    (k as f64 * 1000.0 / jobs_per_sec).round() as u64
}
