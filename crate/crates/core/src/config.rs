//! Scenario configuration: strict JSON schema, validation with
//! JSON-pointer-style error paths, and resolution of derived values
//! (collector calibration, external burst CSVs) into a self-contained
//! document that fully determines a run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::central::calibrate_update_cost_ms;
use crate::provision::{load_burst_csv, validate_windows, BurstWindow, GlideinTemplate};
use crate::workload::{ArrivalSpec, Dist};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{path}: {reason}")]
    Validation { path: String, reason: String },
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation { path: path.into(), reason: reason.into() }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub horizon_ms: u64,
    pub seed: u64,
    #[serde(default = "d_metrics_interval")]
    pub metrics_interval_ms: u64,
    /// Consecutive frames a series must hold steady to count as a plateau.
    #[serde(default = "d_plateau_window")]
    pub plateau_window: usize,
    /// Relative spread (max-min over mean) tolerated inside a plateau.
    #[serde(default = "d_plateau_tolerance")]
    pub plateau_tolerance: f64,
    pub schedds: Vec<ScheddConfig>,
    pub pools: Vec<PoolConfig>,
    #[serde(default)]
    pub providers: Vec<ProviderConfig>,
    pub streams: Vec<StreamConfig>,
    #[serde(default)]
    pub federation: Vec<FederationLinkConfig>,
}

fn d_metrics_interval() -> u64 {
    60_000
}
fn d_plateau_window() -> usize {
    10
}
fn d_plateau_tolerance() -> f64 {
    0.02
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheddConfig {
    #[serde(default = "d_schedd_memory")]
    pub memory_capacity_mb: u64,
    #[serde(default = "d_ram_per_job")]
    pub ram_per_running_job_mb: u64,
    /// Cap on queued idle jobs; absent means unbounded.
    #[serde(default)]
    pub idle_queue_cap: Option<usize>,
}

fn d_schedd_memory() -> u64 {
    50_000
}
fn d_ram_per_job() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolRole {
    Global,
    Subpool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    pub name: String,
    pub role: PoolRole,
    /// Indices into the top-level schedd list. A schedd may appear in
    /// several pools (federation).
    pub schedds: Vec<usize>,
    #[serde(default = "d_heartbeat")]
    pub heartbeat_interval_ms: u64,
    pub collector: CollectorConfig,
    #[serde(default = "d_negotiators")]
    pub negotiators: Vec<NegotiatorConfig>,
    #[serde(default)]
    pub ccb: CcbConfig,
    #[serde(default)]
    pub features: Features,
    /// Interval between low-priority monitoring queries; absent disables.
    #[serde(default)]
    pub monitoring_query_interval_ms: Option<u64>,
}

fn d_heartbeat() -> u64 {
    300_000
}
fn d_negotiators() -> Vec<NegotiatorConfig> {
    vec![NegotiatorConfig::default()]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectorConfig {
    /// Service cost per slot update. Exactly one of this or `calibrate`.
    #[serde(default)]
    pub update_cost_ms: Option<f64>,
    /// Derive the update cost so offered load hits 1.0 at a target pool
    /// size; resolution replaces this block with `update_cost_ms`.
    #[serde(default)]
    pub calibrate: Option<CalibrateSpec>,
    #[serde(default = "d_query_hi")]
    pub query_cost_hi_ms: f64,
    #[serde(default = "d_query_lo")]
    pub query_cost_lo_ms: f64,
    /// Adverts older than this vanish from the collector view; defaults to
    /// 3 heartbeat intervals at resolution.
    #[serde(default)]
    pub ad_lifetime_ms: Option<u64>,
}

fn d_query_hi() -> f64 {
    50.0
}
fn d_query_lo() -> f64 {
    200.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSpec {
    pub target_slots: u64,
    pub mean_job_duration_ms: u64,
    /// Defaults to the pool's heartbeat interval.
    #[serde(default)]
    pub heartbeat_interval_ms: Option<u64>,
    /// Defaults to the pool's update_filtering feature flag.
    #[serde(default)]
    pub filtering: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NegotiatorConfig {
    #[serde(default = "d_match_cost")]
    pub match_cost_ms: f64,
    #[serde(default = "d_cycle_delay")]
    pub cycle_delay_ms: u64,
    /// How long a freshly claimed slot is ineligible for re-matching while
    /// the claim may not yet be visible; defaults to the heartbeat interval.
    #[serde(default)]
    pub claim_cooldown_ms: Option<u64>,
}

impl Default for NegotiatorConfig {
    fn default() -> Self {
        NegotiatorConfig {
            match_cost_ms: d_match_cost(),
            cycle_delay_ms: d_cycle_delay(),
            claim_cooldown_ms: None,
        }
    }
}

fn d_match_cost() -> f64 {
    1.0
}
fn d_cycle_delay() -> u64 {
    60_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcbConfig {
    #[serde(default = "d_ccb_max")]
    pub max_connections: usize,
    /// Socket budget when the broker shares the collector host; the
    /// effective cap is min(max_connections, shared_host_limit) unless
    /// `separate_ccb_host` is on.
    #[serde(default = "d_ccb_shared")]
    pub shared_host_limit: usize,
    #[serde(default = "d_ccb_backoff")]
    pub retry_backoff_ms: u64,
}

impl Default for CcbConfig {
    fn default() -> Self {
        CcbConfig {
            max_connections: d_ccb_max(),
            shared_host_limit: d_ccb_shared(),
            retry_backoff_ms: d_ccb_backoff(),
        }
    }
}

fn d_ccb_max() -> usize {
    1_000_000
}
fn d_ccb_shared() -> usize {
    6_000
}
fn d_ccb_backoff() -> u64 {
    60_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Features {
    /// Broker on its own host: lifts the shared-host socket limit.
    #[serde(default)]
    pub separate_ccb_host: bool,
    #[serde(default = "d_threads")]
    pub negotiator_threads: u32,
    #[serde(default)]
    pub secondary_collectors: Option<SecondaryCollectorsConfig>,
    /// Advertise only transitions into Unclaimed (plus heartbeats).
    #[serde(default = "d_true")]
    pub update_filtering: bool,
    #[serde(default)]
    pub udp_updates: UdpConfig,
    /// Send low-priority queries to secondary collectors.
    #[serde(default)]
    pub priority_query_routing: bool,
}

impl Default for Features {
    fn default() -> Self {
        Features {
            separate_ccb_host: false,
            negotiator_threads: d_threads(),
            secondary_collectors: None,
            update_filtering: d_true(),
            udp_updates: UdpConfig::default(),
            priority_query_routing: false,
        }
    }
}

fn d_threads() -> u32 {
    1
}
fn d_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecondaryCollectorsConfig {
    pub count: usize,
    /// Digest forwarding to the top collector costs update_cost / this.
    #[serde(default = "d_batch_factor")]
    pub batch_factor: u32,
}

fn d_batch_factor() -> u32 {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UdpConfig {
    /// Updates ride UDP (droppable, buffered) rather than TCP (unbounded).
    #[serde(default = "d_true")]
    pub enabled: bool,
    #[serde(default = "d_udp_buffer")]
    pub buffer: usize,
}

impl Default for UdpConfig {
    fn default() -> Self {
        UdpConfig { enabled: true, buffer: d_udp_buffer() }
    }
}

fn d_udp_buffer() -> usize {
    10_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Grid,
    Hpc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HpcIntegration {
    /// Slots join the global pool, indistinguishable from grid slots.
    SiteExtension,
    /// Slots form a subpool fed by flocked jobs.
    FederatedSubpool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub name: String,
    pub kind: ProviderKind,
    /// Name of the pool the slots join.
    pub pool: String,
    /// Steady capacity a grid site maintains under workload pressure.
    #[serde(default)]
    pub pledged_cores: u64,
    #[serde(default)]
    pub burst_schedule: Vec<BurstWindow>,
    /// Path to a CSV burst schedule; inlined into `burst_schedule` at
    /// resolution.
    #[serde(default)]
    pub burst_schedule_csv: Option<String>,
    #[serde(default)]
    pub integration: Option<HpcIntegration>,
    pub glidein: GlideinTemplate,
    #[serde(default = "d_submit_rate")]
    pub submit_rate_per_min: u64,
    #[serde(default = "d_provision_interval")]
    pub provision_interval_ms: u64,
    /// Drain time granted to busy slots at retirement before eviction.
    #[serde(default = "d_grace")]
    pub grace_ms: u64,
    /// Optional batch-queue wait before a submitted glidein starts.
    #[serde(default)]
    pub start_delay_ms: Option<Dist>,
}

fn d_submit_rate() -> u64 {
    600
}
fn d_provision_interval() -> u64 {
    60_000
}
fn d_grace() -> u64 {
    21_600_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    pub name: String,
    /// Free-form tag (production / analysis / tier-0); informational.
    #[serde(default)]
    pub label: Option<String>,
    pub target_schedds: Vec<usize>,
    pub arrival: ArrivalSpec,
    #[serde(default = "d_req_cores")]
    pub req_cores: Dist,
    #[serde(default = "d_req_memory")]
    pub req_memory_mb: Dist,
    #[serde(default = "d_duration")]
    pub duration_ms: Dist,
}

fn d_req_cores() -> Dist {
    Dist::Fixed { value: 1 }
}
fn d_req_memory() -> Dist {
    Dist::Fixed { value: 0 }
}
fn d_duration() -> Dist {
    Dist::Exponential { mean: 21_600_000.0 }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationLinkConfig {
    /// Name of the subpool receiving flocked jobs.
    pub subpool: String,
    /// Idle time before a job becomes eligible to flock.
    pub flock_threshold_ms: u64,
    #[serde(default = "d_flock_interval")]
    pub check_interval_ms: u64,
}

fn d_flock_interval() -> u64 {
    60_000
}

/// Parse and validate a config document.
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let cfg: Config = serde_json::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

impl Config {
    pub fn global_pool_index(&self) -> usize {
        self.pools
            .iter()
            .position(|p| p.role == PoolRole::Global)
            .expect("validated config has a global pool")
    }

    pub fn pool_index(&self, name: &str) -> Option<usize> {
        self.pools.iter().position(|p| p.name == name)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.metrics_interval_ms == 0 {
            return Err(invalid("/metrics_interval_ms", "must be > 0"));
        }
        if self.plateau_window < 2 {
            return Err(invalid("/plateau_window", "must be >= 2"));
        }
        if !(self.plateau_tolerance > 0.0) {
            return Err(invalid("/plateau_tolerance", "must be > 0"));
        }
        if self.schedds.is_empty() {
            return Err(invalid("/schedds", "at least one schedd required"));
        }
        for (i, s) in self.schedds.iter().enumerate() {
            if s.ram_per_running_job_mb == 0 {
                return Err(invalid(
                    format!("/schedds/{i}/ram_per_running_job_mb"),
                    "must be >= 1",
                ));
            }
        }
        self.validate_pools()?;
        self.validate_providers()?;
        self.validate_streams()?;
        self.validate_federation()?;
        Ok(())
    }

    fn validate_pools(&self) -> Result<(), ConfigError> {
        if self.pools.is_empty() {
            return Err(invalid("/pools", "at least one pool required"));
        }
        let globals = self.pools.iter().filter(|p| p.role == PoolRole::Global).count();
        if globals != 1 {
            return Err(invalid("/pools", format!("exactly one global pool required, found {globals}")));
        }
        for (i, p) in self.pools.iter().enumerate() {
            let at = |field: &str| format!("/pools/{i}/{field}");
            if p.name.is_empty() {
                return Err(invalid(at("name"), "must be non-empty"));
            }
            if self.pools.iter().filter(|q| q.name == p.name).count() > 1 {
                return Err(invalid(at("name"), format!("duplicate pool name '{}'", p.name)));
            }
            if p.schedds.is_empty() {
                return Err(invalid(at("schedds"), "pool must attach at least one schedd"));
            }
            for (j, &s) in p.schedds.iter().enumerate() {
                if s >= self.schedds.len() {
                    return Err(invalid(
                        format!("/pools/{i}/schedds/{j}"),
                        format!("schedd index {s} out of range (have {})", self.schedds.len()),
                    ));
                }
                if p.schedds.iter().filter(|&&t| t == s).count() > 1 {
                    return Err(invalid(format!("/pools/{i}/schedds/{j}"), format!("duplicate schedd index {s}")));
                }
            }
            if p.heartbeat_interval_ms == 0 {
                return Err(invalid(at("heartbeat_interval_ms"), "must be > 0"));
            }
            let c = &p.collector;
            match (c.update_cost_ms, &c.calibrate) {
                (Some(v), None) if v > 0.0 => {}
                (Some(_), None) => {
                    return Err(invalid(at("collector/update_cost_ms"), "must be > 0"));
                }
                (None, Some(cal)) => {
                    let base = at("collector/calibrate");
                    if cal.target_slots == 0 {
                        return Err(invalid(format!("{base}/target_slots"), "must be > 0"));
                    }
                    if cal.mean_job_duration_ms == 0 {
                        return Err(invalid(format!("{base}/mean_job_duration_ms"), "must be > 0"));
                    }
                    if cal.heartbeat_interval_ms == Some(0) {
                        return Err(invalid(format!("{base}/heartbeat_interval_ms"), "must be > 0"));
                    }
                }
                (None, None) => {
                    return Err(invalid(at("collector"), "one of update_cost_ms or calibrate required"));
                }
                (Some(_), Some(_)) => {
                    return Err(invalid(at("collector"), "update_cost_ms and calibrate are mutually exclusive"));
                }
            }
            if !(c.query_cost_hi_ms > 0.0) {
                return Err(invalid(at("collector/query_cost_hi_ms"), "must be > 0"));
            }
            if !(c.query_cost_lo_ms > 0.0) {
                return Err(invalid(at("collector/query_cost_lo_ms"), "must be > 0"));
            }
            if c.ad_lifetime_ms == Some(0) {
                return Err(invalid(at("collector/ad_lifetime_ms"), "must be > 0"));
            }
            if p.negotiators.is_empty() {
                return Err(invalid(at("negotiators"), "at least one negotiator required"));
            }
            for (j, n) in p.negotiators.iter().enumerate() {
                if !(n.match_cost_ms > 0.0) {
                    return Err(invalid(
                        format!("/pools/{i}/negotiators/{j}/match_cost_ms"),
                        "must be > 0",
                    ));
                }
            }
            if p.ccb.max_connections == 0 {
                return Err(invalid(at("ccb/max_connections"), "must be > 0"));
            }
            if p.ccb.retry_backoff_ms == 0 {
                return Err(invalid(at("ccb/retry_backoff_ms"), "must be > 0"));
            }
            let f = &p.features;
            if f.negotiator_threads == 0 {
                return Err(invalid(at("features/negotiator_threads"), "must be >= 1"));
            }
            if let Some(sc) = &f.secondary_collectors {
                if sc.count == 0 {
                    return Err(invalid(at("features/secondary_collectors/count"), "must be >= 1"));
                }
                if sc.batch_factor == 0 {
                    return Err(invalid(at("features/secondary_collectors/batch_factor"), "must be >= 1"));
                }
            }
            if f.udp_updates.enabled && f.udp_updates.buffer == 0 {
                return Err(invalid(at("features/udp_updates/buffer"), "must be >= 1 when enabled"));
            }
            if p.monitoring_query_interval_ms == Some(0) {
                return Err(invalid(at("monitoring_query_interval_ms"), "must be > 0"));
            }
        }
        Ok(())
    }

    fn validate_providers(&self) -> Result<(), ConfigError> {
        for (i, prov) in self.providers.iter().enumerate() {
            let at = |field: &str| format!("/providers/{i}/{field}");
            if prov.name.is_empty() {
                return Err(invalid(at("name"), "must be non-empty"));
            }
            if self.providers.iter().filter(|q| q.name == prov.name).count() > 1 {
                return Err(invalid(at("name"), format!("duplicate provider name '{}'", prov.name)));
            }
            let Some(pool_idx) = self.pool_index(&prov.pool) else {
                return Err(invalid(at("pool"), format!("unknown pool '{}'", prov.pool)));
            };
            let pool_role = self.pools[pool_idx].role;
            match prov.kind {
                ProviderKind::Grid => {
                    if !prov.burst_schedule.is_empty() || prov.burst_schedule_csv.is_some() {
                        return Err(invalid(at("burst_schedule"), "grid providers supply steady pledges, not bursts"));
                    }
                    if prov.integration.is_some() {
                        return Err(invalid(at("integration"), "integration mode applies to hpc providers only"));
                    }
                    if pool_role != PoolRole::Global {
                        return Err(invalid(at("pool"), "grid providers must feed the global pool"));
                    }
                }
                ProviderKind::Hpc => {
                    if prov.pledged_cores != 0 {
                        return Err(invalid(at("pledged_cores"), "hpc providers have no steady pledge; use burst_schedule"));
                    }
                    let windows = !prov.burst_schedule.is_empty();
                    let csv = prov.burst_schedule_csv.is_some();
                    if windows && csv {
                        return Err(invalid(at("burst_schedule"), "burst_schedule and burst_schedule_csv are mutually exclusive"));
                    }
                    if !windows && !csv {
                        return Err(invalid(at("burst_schedule"), "hpc providers need a burst schedule"));
                    }
                    if windows {
                        validate_windows(prov.burst_schedule.clone())
                            .map_err(|e| invalid(at("burst_schedule"), e.to_string()))?;
                    }
                    match prov.integration {
                        None => {
                            return Err(invalid(at("integration"), "hpc providers must pick an integration mode"));
                        }
                        Some(HpcIntegration::SiteExtension) if pool_role != PoolRole::Global => {
                            return Err(invalid(at("pool"), "site-extension slots join the global pool"));
                        }
                        Some(HpcIntegration::FederatedSubpool) if pool_role != PoolRole::Subpool => {
                            return Err(invalid(at("pool"), "federated-subpool slots join a subpool"));
                        }
                        _ => {}
                    }
                }
            }
            prov.glidein.validate().map_err(|e| invalid(at("glidein"), e.to_string()))?;
            if prov.submit_rate_per_min == 0 {
                return Err(invalid(at("submit_rate_per_min"), "must be >= 1"));
            }
            if prov.provision_interval_ms == 0 {
                return Err(invalid(at("provision_interval_ms"), "must be > 0"));
            }
            if let Some(d) = &prov.start_delay_ms {
                d.validate().map_err(|e| invalid(at("start_delay_ms"), e.to_string()))?;
            }
        }
        Ok(())
    }

    fn validate_streams(&self) -> Result<(), ConfigError> {
        if self.streams.is_empty() {
            return Err(invalid("/streams", "at least one workload stream required"));
        }
        for (i, st) in self.streams.iter().enumerate() {
            let at = |field: &str| format!("/streams/{i}/{field}");
            if st.name.is_empty() {
                return Err(invalid(at("name"), "must be non-empty"));
            }
            if self.streams.iter().filter(|q| q.name == st.name).count() > 1 {
                return Err(invalid(at("name"), format!("duplicate stream name '{}'", st.name)));
            }
            if st.target_schedds.is_empty() {
                return Err(invalid(at("target_schedds"), "stream must target at least one schedd"));
            }
            for (j, &s) in st.target_schedds.iter().enumerate() {
                if s >= self.schedds.len() {
                    return Err(invalid(
                        format!("/streams/{i}/target_schedds/{j}"),
                        format!("schedd index {s} out of range (have {})", self.schedds.len()),
                    ));
                }
                if st.target_schedds.iter().filter(|&&t| t == s).count() > 1 {
                    return Err(invalid(format!("/streams/{i}/target_schedds/{j}"), format!("duplicate schedd index {s}")));
                }
            }
            st.arrival.validate().map_err(|e| invalid(at("arrival"), e.to_string()))?;
            st.req_cores.validate().map_err(|e| invalid(at("req_cores"), e.to_string()))?;
            if let Dist::Fixed { value: 0 } = st.req_cores {
                return Err(invalid(at("req_cores"), "jobs need at least one core"));
            }
            if let Dist::UniformInt { min: 0, .. } = st.req_cores {
                return Err(invalid(at("req_cores"), "jobs need at least one core"));
            }
            st.req_memory_mb.validate().map_err(|e| invalid(at("req_memory_mb"), e.to_string()))?;
            st.duration_ms.validate().map_err(|e| invalid(at("duration_ms"), e.to_string()))?;
            if let Dist::Fixed { value: 0 } = st.duration_ms {
                return Err(invalid(at("duration_ms"), "jobs need a positive duration"));
            }
        }
        Ok(())
    }

    fn validate_federation(&self) -> Result<(), ConfigError> {
        for (i, link) in self.federation.iter().enumerate() {
            let at = |field: &str| format!("/federation/{i}/{field}");
            let Some(idx) = self.pool_index(&link.subpool) else {
                return Err(invalid(at("subpool"), format!("unknown pool '{}'", link.subpool)));
            };
            if self.pools[idx].role != PoolRole::Subpool {
                return Err(invalid(at("subpool"), "flocking target must be a subpool"));
            }
            if self.federation.iter().filter(|l| l.subpool == link.subpool).count() > 1 {
                return Err(invalid(at("subpool"), format!("duplicate federation link to '{}'", link.subpool)));
            }
            if link.check_interval_ms == 0 {
                return Err(invalid(at("check_interval_ms"), "must be > 0"));
            }
        }
        Ok(())
    }

    /// Materialize derived values so the document alone reproduces the run:
    /// calibration becomes a concrete update cost, external burst CSVs are
    /// inlined, and optional lifetimes/cooldowns get their defaults.
    /// `load_csv` maps a csv path to file contents.
    pub fn resolve(
        mut self,
        load_csv: impl Fn(&str) -> Result<String, String>,
    ) -> Result<Config, ConfigError> {
        for i in 0..self.pools.len() {
            let hb = self.pools[i].heartbeat_interval_ms;
            let filtering = self.pools[i].features.update_filtering;
            let c = &mut self.pools[i].collector;
            if let Some(cal) = c.calibrate.take() {
                let cost = calibrate_update_cost_ms(
                    cal.target_slots,
                    cal.mean_job_duration_ms,
                    cal.heartbeat_interval_ms.unwrap_or(hb),
                    cal.filtering.unwrap_or(filtering),
                )
                .map_err(|e| invalid(format!("/pools/{i}/collector/calibrate"), e.to_string()))?;
                c.update_cost_ms = Some(cost);
            }
            if c.ad_lifetime_ms.is_none() {
                c.ad_lifetime_ms = Some(3 * hb);
            }
            for n in &mut self.pools[i].negotiators {
                if n.claim_cooldown_ms.is_none() {
                    n.claim_cooldown_ms = Some(hb);
                }
            }
        }
        for (i, prov) in self.providers.iter_mut().enumerate() {
            if let Some(path) = prov.burst_schedule_csv.take() {
                let text = load_csv(&path).map_err(|e| {
                    invalid(format!("/providers/{i}/burst_schedule_csv"), e)
                })?;
                prov.burst_schedule = load_burst_csv(&text).map_err(|e| {
                    invalid(format!("/providers/{i}/burst_schedule_csv"), e.to_string())
                })?;
            } else {
                prov.burst_schedule = validate_windows(std::mem::take(&mut prov.burst_schedule))
                    .map_err(|e| invalid(format!("/providers/{i}/burst_schedule"), e.to_string()))?;
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Loader for configs that reference no external files.
pub fn no_files(path: &str) -> Result<String, String> {
    Err(format!("no file access in this context: '{path}'"))
}
