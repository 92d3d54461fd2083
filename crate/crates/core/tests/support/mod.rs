//! Shared helpers for the integration-test targets: per-frame invariant
//! checking and a seeded random configuration generator.

use serde_json::{json, Value};
use simpool_core::config::ProviderKind;
use simpool_core::engine::Simulation;

/// Verify the conservation and capacity invariants in every recorded
/// frame, then deep-audit the final state. Returns the first violation.
pub fn check_frames(sim: &Simulation) -> Result<(), String> {
    let cfg = sim.config();
    let ccb_cap = cfg.pools[cfg.global_pool_index()].ccb.max_connections;
    let caps: Vec<u64> = cfg
        .schedds
        .iter()
        .map(|s| s.memory_capacity_mb / s.ram_per_running_job_mb.max(1))
        .collect();
    let mut prev_submitted = 0u64;
    let mut prev_completed = 0u64;
    let mut prev_evicted = 0u64;
    for (i, f) in sim.frames().iter().enumerate() {
        let t = f.at.as_ms();
        let fail = |what: String| Err(format!("frame {i} (t={t}ms): {what}"));
        if f.submitted_total != f.idle_total + f.running_total + f.completed_total {
            return fail(format!(
                "job partition broken: {} submitted vs {} idle + {} running + {} completed",
                f.submitted_total, f.idle_total, f.running_total, f.completed_total
            ));
        }
        if f.running_total != f.running_per_schedd.iter().sum::<u64>() {
            return fail("running_total != sum of per-schedd running".into());
        }
        if f.idle_total != f.idle_per_schedd.iter().sum::<u64>() {
            return fail("idle_total != sum of per-schedd idle".into());
        }
        if f.cores_total != f.cores_per_provider.iter().sum::<u64>() {
            return fail("cores_total != sum of per-provider cores".into());
        }
        for (p, (&used, &live)) in
            f.cores_per_provider.iter().zip(&f.live_cores_per_provider).enumerate()
        {
            if used > live {
                return fail(format!("provider {p}: {used} cores in use of {live} live"));
            }
            let spec = &cfg.providers[p];
            if spec.kind == ProviderKind::Grid && live > spec.pledged_cores {
                return fail(format!(
                    "provider {p}: {live} live cores exceed the {} pledge",
                    spec.pledged_cores
                ));
            }
        }
        for (s, (&running, &cap)) in f.running_per_schedd.iter().zip(&caps).enumerate() {
            if running > cap {
                return fail(format!("schedd {s}: {running} running jobs exceed cap {cap}"));
            }
        }
        if f.ccb_registered as usize > ccb_cap {
            return fail(format!(
                "{} broker connections exceed the {ccb_cap} cap",
                f.ccb_registered
            ));
        }
        if !(0.0..=1.0).contains(&f.duty_top) {
            return fail(format!("duty cycle {} outside [0, 1]", f.duty_top));
        }
        if f.submitted_total < prev_submitted
            || f.completed_total < prev_completed
            || f.evicted_total < prev_evicted
        {
            return fail("a monotone counter decreased".into());
        }
        prev_submitted = f.submitted_total;
        prev_completed = f.completed_total;
        prev_evicted = f.evicted_total;
    }
    sim.audit()
}

/// Tiny deterministic PRNG (splitmix64) for the config generator; the
/// point is variety across seeds, not statistical quality.
pub struct Mix(pub u64);

impl Mix {
    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform pick in `lo..=hi`.
    pub fn pick(&mut self, lo: u64, hi: u64) -> u64 {
        lo + self.next() % (hi - lo + 1)
    }

    pub fn chance(&mut self, percent: u64) -> bool {
        self.pick(1, 100) <= percent
    }
}

/// Build a small random-but-valid configuration exercising a varied slice
/// of the feature space: grid and burst providers, federation, connection
/// caps, lossy transport, filtering, secondaries, and both arrival kinds.
pub fn random_config(seed: u64) -> Value {
    let mut m = Mix(seed);
    let n_schedds = m.pick(1, 3) as usize;
    let schedds: Vec<Value> = (0..n_schedds)
        .map(|_| {
            let mut s = json!({
                "memory_capacity_mb": m.pick(50, 800),
                "ram_per_running_job_mb": m.pick(1, 3),
            });
            if m.chance(30) {
                s["idle_queue_cap"] = json!(m.pick(50, 500));
            }
            s
        })
        .collect();
    let all_schedds: Vec<usize> = (0..n_schedds).collect();

    let filtering = m.chance(50);
    let mut features = json!({
        "separate_ccb_host": m.chance(70),
        "negotiator_threads": m.pick(1, 4),
        "update_filtering": filtering,
    });
    if m.chance(40) {
        features["secondary_collectors"] =
            json!({ "count": m.pick(1, 2), "batch_factor": m.pick(2, 10) });
    }
    if m.chance(50) {
        features["udp_updates"] =
            json!({ "enabled": true, "buffer": m.pick(4, 200) });
    }
    if m.chance(30) {
        features["priority_query_routing"] = json!(true);
    }
    let heartbeat = m.pick(30, 120) * 1_000;
    let mut pool = json!({
        "name": "global",
        "role": "global",
        "schedds": all_schedds,
        "heartbeat_interval_ms": heartbeat,
        "collector": { "update_cost_ms": m.pick(1, 40) as f64 },
        "negotiators": [{
            "match_cost_ms": 1.0,
            "cycle_delay_ms": m.pick(5, 30) * 1_000,
        }],
        "features": features,
    });
    if m.chance(40) {
        pool["ccb"] = json!({
            "max_connections": m.pick(3, 60),
            "retry_backoff_ms": m.pick(10, 60) * 1_000,
        });
    }
    if m.chance(30) {
        pool["monitoring_query_interval_ms"] = json!(m.pick(10, 60) * 1_000);
    }
    let mut pools = vec![pool];

    let glidein = |m: &mut Mix| {
        json!({
            "startds": m.pick(1, 3),
            "slots_per_startd": m.pick(1, 3),
            "slot_cores": m.pick(1, 2),
            "slot_memory_mb": m.pick(500, 4_000),
        })
    };
    let mut providers = vec![json!({
        "name": "grid",
        "kind": "grid",
        "pool": "global",
        "pledged_cores": m.pick(20, 400),
        "glidein": glidein(&mut m),
        "submit_rate_per_min": m.pick(60, 1_200),
        "provision_interval_ms": m.pick(20, 90) * 1_000,
    })];
    let horizon = m.pick(15, 45) * 60_000;
    let mut federation = json!([]);
    if m.chance(60) {
        // A burst provider; half the time it feeds a federated subpool.
        let start = m.pick(0, horizon / 2_000) * 1_000;
        let federated = m.chance(50);
        if federated {
            pools.push(json!({
                "name": "burst-pool",
                "role": "subpool",
                "schedds": all_schedds,
                "heartbeat_interval_ms": heartbeat,
                "collector": { "update_cost_ms": m.pick(1, 10) as f64 },
                "negotiators": [{ "match_cost_ms": 1.0, "cycle_delay_ms": 10_000 }],
                "features": { "separate_ccb_host": true },
            }));
            federation = json!([{
                "subpool": "burst-pool",
                "flock_threshold_ms": m.pick(1, 5) * 60_000,
                "check_interval_ms": 30_000,
            }]);
        }
        providers.push(json!({
            "name": "burst",
            "kind": "hpc",
            "pool": if federated { "burst-pool" } else { "global" },
            "integration": if federated { "federated_subpool" } else { "site_extension" },
            "burst_schedule": [{
                "start_ms": start,
                "duration_ms": m.pick(3, 15) * 60_000,
                "cores": m.pick(10, 120),
            }],
            "glidein": glidein(&mut m),
            "submit_rate_per_min": m.pick(300, 1_200),
            "grace_ms": m.pick(0, 5) * 60_000,
        }));
    }

    let duration = if m.chance(50) {
        json!({ "fixed": { "value": m.pick(1, 10) * 60_000 } })
    } else {
        json!({ "exponential": { "mean": (m.pick(2, 10) * 60_000) as f64 } })
    };
    let arrival = if m.chance(60) {
        json!({ "backlog": {
            "per_schedd": m.pick(20, 300),
            "replenish_interval_ms": m.pick(1, 5) * 60_000,
        }})
    } else {
        json!({ "rate": { "jobs_per_sec": m.pick(1, 40) as f64 / 10.0 } })
    };
    let stream = json!({
        "name": "work",
        "target_schedds": all_schedds,
        "arrival": arrival,
        "req_cores": { "fixed": { "value": 1 } },
        "req_memory_mb": { "fixed": { "value": 0 } },
        "duration_ms": duration,
    });

    json!({
        "horizon_ms": horizon,
        "seed": m.next(),
        "metrics_interval_ms": m.pick(30, 90) * 1_000,
        "schedds": schedds,
        "pools": pools,
        "providers": providers,
        "federation": federation,
        "streams": [stream],
    })
}
