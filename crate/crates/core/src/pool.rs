//! Pool entities: jobs, slots, startds, glideins, schedds.
//!
//! Ids are dense indices into the engine's entity tables, assigned in
//! creation order. "Lowest id" therefore also means "created earliest",
//! which is what the matchmaker's deterministic tie-break relies on.

use thiserror::Error;

use crate::kernel::SimTime;

pub type JobId = usize;
pub type SlotId = usize;
pub type StartdId = usize;
pub type GlideinId = usize;
pub type ScheddId = usize;
pub type PoolId = usize;
pub type ProviderId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("schedd {schedd} is at capacity ({capacity} running jobs)")]
    CapacityExceeded { schedd: ScheddId, capacity: usize },
    #[error("slot {0} is not claimed by the requesting schedd")]
    SlotNotClaimed(SlotId),
    #[error("job {job} does not fit slot {slot} (cores {job_cores}/{slot_cores}, memory {job_mem}/{slot_mem} MB)")]
    RequirementsMismatch {
        job: JobId,
        slot: SlotId,
        job_cores: u32,
        slot_cores: u32,
        job_mem: u64,
        slot_mem: u64,
    },
    #[error("job {0} is not running")]
    NotRunning(JobId),
    #[error("provider {0} is not active")]
    ProviderInactive(ProviderId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobState {
    Idle,
    Running,
    Completed,
}

#[derive(Debug, Clone)]
pub struct Job {
    pub id: JobId,
    pub stream: usize,
    pub schedd: ScheddId,
    pub req_cores: u32,
    pub req_memory_mb: u64,
    pub duration_ms: u64,
    pub state: JobState,
    pub submitted_at: SimTime,
    /// When the job last entered the idle queue (submission or eviction).
    pub queued_since: SimTime,
    pub started_at: Option<SimTime>,
    pub completed_at: Option<SimTime>,
    /// Pool the job negotiates in; `None` means the global pool. Set once by
    /// flock routing — a routed job is negotiated only in its subpool.
    pub routed_to: Option<PoolId>,
    /// Incremented on every start and eviction; lets stale completion events
    /// for evicted jobs be recognized and ignored.
    pub run_epoch: u32,
    pub evictions: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotState {
    Unclaimed,
    Matched,
    Claimed,
    Busy,
    Retiring,
    Dead,
}

impl SlotState {
    pub fn code(self) -> &'static str {
        match self {
            SlotState::Unclaimed => "unclaimed",
            SlotState::Matched => "matched",
            SlotState::Claimed => "claimed",
            SlotState::Busy => "busy",
            SlotState::Retiring => "retiring",
            SlotState::Dead => "dead",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Slot {
    pub id: SlotId,
    pub startd: StartdId,
    pub glidein: GlideinId,
    pub provider: ProviderId,
    pub pool: PoolId,
    pub cores: u32,
    pub memory_mb: u64,
    pub state: SlotState,
    pub claimed_by: Option<ScheddId>,
    pub running_job: Option<JobId>,
}

impl Slot {
    pub fn fits(&self, req_cores: u32, req_memory_mb: u64) -> bool {
        self.cores >= req_cores && self.memory_mb >= req_memory_mb
    }
}

#[derive(Debug, Clone)]
pub struct Startd {
    pub id: StartdId,
    pub glidein: GlideinId,
    pub provider: ProviderId,
    pub pool: PoolId,
    pub slots: Vec<SlotId>,
    pub ccb_registered: bool,
    pub dead: bool,
}

#[derive(Debug, Clone)]
pub struct Glidein {
    pub id: GlideinId,
    pub provider: ProviderId,
    pub pool: PoolId,
    pub startds: Vec<StartdId>,
    pub spawned_at: SimTime,
    /// `None` means the glidein runs until the end of the simulation.
    pub lifetime_ms: Option<u64>,
    pub retired: bool,
}

/// A submission host. Memory is the scaling bottleneck: each running job
/// holds `ram_per_running_job_mb` resident, so at most
/// `memory_capacity_mb / ram_per_running_job_mb` jobs run concurrently.
#[derive(Debug)]
pub struct Schedd {
    pub id: ScheddId,
    pub memory_capacity_mb: u64,
    pub ram_per_running_job_mb: u64,
    pub idle_queue_cap: Option<usize>,
    /// FIFO of job ids. May contain tombstones (jobs no longer idle); they
    /// are skipped on scan and compacted away once they dominate the queue.
    pub idle_queue: std::collections::VecDeque<JobId>,
    pub idle_count: usize,
    pub running_count: usize,
    pub tombstones: usize,
}

impl Schedd {
    pub fn new(
        id: ScheddId,
        memory_capacity_mb: u64,
        ram_per_running_job_mb: u64,
        idle_queue_cap: Option<usize>,
    ) -> Result<Self, ModelError> {
        if ram_per_running_job_mb == 0 {
            return Err(ModelError::InvalidParameter(
                "ram_per_running_job_mb must be >= 1".into(),
            ));
        }
        Ok(Schedd {
            id,
            memory_capacity_mb,
            ram_per_running_job_mb,
            idle_queue_cap,
            idle_queue: std::collections::VecDeque::new(),
            idle_count: 0,
            running_count: 0,
            tombstones: 0,
        })
    }

    /// Hard cap on concurrently running jobs imposed by schedd memory.
    pub fn capacity(&self) -> usize {
        (self.memory_capacity_mb / self.ram_per_running_job_mb) as usize
    }

    pub fn headroom(&self) -> usize {
        self.capacity().saturating_sub(self.running_count)
    }

    /// Room left in the idle queue, if it is bounded.
    pub fn idle_headroom(&self) -> usize {
        match self.idle_queue_cap {
            Some(cap) => cap.saturating_sub(self.idle_count),
            None => usize::MAX,
        }
    }

    pub fn note_tombstone(&mut self) {
        self.tombstones += 1;
    }

    /// Drop queue entries that no longer refer to idle jobs, preserving
    /// order. `is_idle` decides from the caller's job table.
    pub fn compact_if_needed(&mut self, is_idle: impl Fn(JobId) -> bool) {
        if self.tombstones > 0 && self.tombstones * 2 >= self.idle_queue.len() {
            self.idle_queue.retain(|&j| is_idle(j));
            self.tombstones = 0;
        }
    }
}

/// Pure form of the schedd memory cap used by sizing arithmetic.
pub fn schedd_capacity(memory_capacity_mb: u64, ram_per_running_job_mb: u64) -> Result<u64, ModelError> {
    if ram_per_running_job_mb == 0 {
        return Err(ModelError::InvalidParameter(
            "ram_per_running_job_mb must be >= 1".into(),
        ));
    }
    Ok(memory_capacity_mb / ram_per_running_job_mb)
}
