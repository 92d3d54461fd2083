//! Central manager machinery: collector, CCB, and negotiator arithmetic.
//!
//! The collector is a single FIFO server. Update and query costs are
//! fractions of a millisecond at large pool sizes, so service accounting is
//! carried in f64 milliseconds while the surrounding event clock stays in
//! integer milliseconds: completion times are computed exactly at enqueue
//! time (FIFO with deterministic costs permits that) and applied lazily
//! whenever the collector is observed.

use std::collections::{HashSet, VecDeque};

use thiserror::Error;

use crate::kernel::SimTime;
use crate::pool::{SlotId, SlotState, StartdId};

#[derive(Debug, Error, PartialEq)]
pub enum CentralError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Udp,
    Tcp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryKind {
    High,
    Low,
}

/// What a slot advert says. Heartbeats repeat the current state on a timer;
/// transition adverts are sent at the moment the state changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvertKind {
    Heartbeat,
    Transition,
}

#[derive(Debug, Clone, Copy)]
pub struct UpdateMessage {
    pub slot: SlotId,
    pub state: SlotState,
    pub emitted_at: SimTime,
    pub kind: AdvertKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestOutcome {
    Queued,
    Dropped,
}

#[derive(Debug, Clone, Copy)]
pub struct ViewEntry {
    pub state: SlotState,
    pub as_of: SimTime,
}

#[derive(Debug, Clone, Copy)]
enum Payload {
    Update { slot: SlotId, state: SlotState, emitted_at: SimTime },
    Query(QueryKind),
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    starts_ms: f64,
    completes_ms: f64,
    cost_ms: f64,
    payload: Payload,
}

/// Cumulative collector counters, cheap to copy into metrics frames.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CollectorCounters {
    pub offered: u64,
    pub processed: u64,
    pub dropped: u64,
    pub heartbeats_offered: u64,
    pub transitions_offered: u64,
    pub busy_ms: f64,
    pub busy_update_ms: f64,
    pub busy_query_hi_ms: f64,
    pub busy_query_lo_ms: f64,
}

pub struct Collector {
    pub update_cost_ms: f64,
    pub query_cost_hi_ms: f64,
    pub query_cost_lo_ms: f64,
    pub transport: Transport,
    pub buffer_capacity: usize,
    /// Adverts older than this are treated as absent (the collector forgets
    /// slots it has not heard from; matches classad lifetime behaviour).
    pub ad_lifetime_ms: u64,
    served_until_ms: f64,
    pending: VecDeque<Pending>,
    view: Vec<Option<ViewEntry>>,
    counters: CollectorCounters,
    window_start: SimTime,
    window_busy_base_ms: f64,
}

impl Collector {
    pub fn new(
        update_cost_ms: f64,
        query_cost_hi_ms: f64,
        query_cost_lo_ms: f64,
        transport: Transport,
        buffer_capacity: usize,
        ad_lifetime_ms: u64,
    ) -> Result<Self, CentralError> {
        if !(update_cost_ms > 0.0) {
            return Err(CentralError::InvalidParameter(format!(
                "update cost must be > 0 ms, got {update_cost_ms}"
            )));
        }
        if ad_lifetime_ms == 0 {
            return Err(CentralError::InvalidParameter("ad lifetime must be > 0".into()));
        }
        Ok(Collector {
            update_cost_ms,
            query_cost_hi_ms,
            query_cost_lo_ms,
            transport,
            buffer_capacity,
            ad_lifetime_ms,
            served_until_ms: 0.0,
            pending: VecDeque::new(),
            view: Vec::new(),
            counters: CollectorCounters::default(),
            window_start: SimTime::ZERO,
            window_busy_base_ms: 0.0,
        })
    }

    /// Apply every message whose service completes at or before `now`.
    pub fn sync(&mut self, now: SimTime) {
        let now_ms = now.as_ms() as f64;
        while let Some(front) = self.pending.front() {
            if front.completes_ms > now_ms {
                break;
            }
            let p = self.pending.pop_front().unwrap();
            self.apply(p);
        }
    }

    fn apply(&mut self, p: Pending) {
        self.counters.processed += 1;
        self.counters.busy_ms += p.cost_ms;
        match p.payload {
            Payload::Update { slot, state, emitted_at } => {
                self.counters.busy_update_ms += p.cost_ms;
                if self.view.len() <= slot {
                    self.view.resize(slot + 1, None);
                }
                self.view[slot] = Some(ViewEntry { state, as_of: emitted_at });
            }
            Payload::Query(QueryKind::High) => self.counters.busy_query_hi_ms += p.cost_ms,
            Payload::Query(QueryKind::Low) => self.counters.busy_query_lo_ms += p.cost_ms,
        }
    }

    fn enqueue(&mut self, now: SimTime, cost_ms: f64, payload: Payload) -> f64 {
        let now_ms = now.as_ms() as f64;
        let starts = if self.served_until_ms > now_ms { self.served_until_ms } else { now_ms };
        let completes = starts + cost_ms;
        self.served_until_ms = completes;
        self.pending.push_back(Pending { starts_ms: starts, completes_ms: completes, cost_ms, payload });
        completes
    }

    /// Offer a slot update. UDP drops it when the buffer (in-service message
    /// included) is full; TCP always queues, letting latency grow instead.
    pub fn ingest_update(&mut self, now: SimTime, msg: UpdateMessage, cost_ms: f64) -> IngestOutcome {
        self.sync(now);
        self.counters.offered += 1;
        match msg.kind {
            AdvertKind::Heartbeat => self.counters.heartbeats_offered += 1,
            AdvertKind::Transition => self.counters.transitions_offered += 1,
        }
        if self.transport == Transport::Udp
            && !self.pending.is_empty()
            && self.pending.len() >= self.buffer_capacity
        {
            self.counters.dropped += 1;
            return IngestOutcome::Dropped;
        }
        self.enqueue(
            now,
            cost_ms,
            Payload::Update { slot: msg.slot, state: msg.state, emitted_at: msg.emitted_at },
        );
        IngestOutcome::Queued
    }

    /// Convenience for updates at the collector's own per-update cost.
    pub fn ingest(&mut self, now: SimTime, msg: UpdateMessage) -> IngestOutcome {
        self.ingest_update(now, msg, self.update_cost_ms)
    }

    /// Ingest an update digest forwarded by a secondary collector. Digests
    /// ride the reliable inter-collector channel, so they are never dropped
    /// regardless of transport, and arrive at a batch-discounted cost.
    pub fn ingest_forwarded(&mut self, now: SimTime, msg: UpdateMessage, cost_ms: f64) {
        self.sync(now);
        self.counters.offered += 1;
        match msg.kind {
            AdvertKind::Heartbeat => self.counters.heartbeats_offered += 1,
            AdvertKind::Transition => self.counters.transitions_offered += 1,
        }
        self.enqueue(
            now,
            cost_ms,
            Payload::Update { slot: msg.slot, state: msg.state, emitted_at: msg.emitted_at },
        );
    }

    /// Enqueue a status query (queries arrive over TCP and are never
    /// dropped). Returns the absolute time, in fractional ms, at which the
    /// answer is ready — FIFO order means later arrivals cannot affect it.
    pub fn enqueue_query(&mut self, now: SimTime, kind: QueryKind) -> f64 {
        self.sync(now);
        let cost = match kind {
            QueryKind::High => self.query_cost_hi_ms,
            QueryKind::Low => self.query_cost_lo_ms,
        };
        self.enqueue(now, cost, Payload::Query(kind))
    }

    /// Completed service time plus the in-progress fraction at `now`.
    pub fn busy_ms_at(&mut self, now: SimTime) -> f64 {
        self.sync(now);
        let now_ms = now.as_ms() as f64;
        let partial = match self.pending.front() {
            Some(p) if p.starts_ms < now_ms => now_ms - p.starts_ms,
            _ => 0.0,
        };
        self.counters.busy_ms + partial
    }

    /// Mark the start of a measurement window for `duty_cycle`.
    pub fn begin_window(&mut self, now: SimTime) {
        self.window_busy_base_ms = self.busy_ms_at(now);
        self.window_start = now;
    }

    /// Fraction of the window since `begin_window` the server spent busy.
    pub fn duty_cycle(&mut self, now: SimTime) -> Result<f64, CentralError> {
        let window = now.since(self.window_start);
        if window == 0 {
            return Err(CentralError::InvalidParameter("duty cycle window must be > 0".into()));
        }
        let busy = self.busy_ms_at(now) - self.window_busy_base_ms;
        Ok((busy / window as f64).clamp(0.0, 1.0))
    }

    pub fn counters(&self) -> CollectorCounters {
        self.counters
    }

    pub fn queue_len(&self) -> usize {
        self.pending.len()
    }

    pub fn view_len(&self) -> usize {
        self.view.len()
    }

    pub fn entry(&self, slot: SlotId) -> Option<ViewEntry> {
        self.view.get(slot).copied().flatten()
    }

    pub fn is_fresh(&self, e: &ViewEntry, now: SimTime) -> bool {
        now.since(e.as_of) <= self.ad_lifetime_ms
    }

    /// Last processed state of a slot, or None if never heard of / expired.
    pub fn viewed_state(&mut self, slot: SlotId, now: SimTime) -> Option<(SlotState, SimTime)> {
        self.sync(now);
        let e = self.entry(slot)?;
        self.is_fresh(&e, now).then_some((e.state, e.as_of))
    }

    /// Visit fresh view entries in ascending slot id order, pruning expired
    /// ones as it goes.
    pub fn scan_fresh(&mut self, now: SimTime, mut f: impl FnMut(SlotId, &ViewEntry)) {
        self.sync(now);
        let lifetime = self.ad_lifetime_ms;
        for (slot, cell) in self.view.iter_mut().enumerate() {
            if let Some(e) = cell {
                if now.since(e.as_of) > lifetime {
                    *cell = None;
                } else {
                    f(slot, e);
                }
            }
        }
    }

    pub fn count_viewed_unclaimed(&mut self, now: SimTime) -> u64 {
        let mut n = 0;
        self.scan_fresh(now, |_, e| {
            if e.state == SlotState::Unclaimed {
                n += 1;
            }
        });
        n
    }
}

/// Per-update service cost that saturates the collector exactly at
/// `target_slots` advertising slots. Each slot contributes a heartbeat every
/// `heartbeat_interval` plus state-transition adverts per job turnover: one
/// if update filtering is on (only the release is advertised), two if off
/// (claim and release).
pub fn calibrate_update_cost_ms(
    target_slots: u64,
    mean_job_duration_ms: u64,
    heartbeat_interval_ms: u64,
    filtering: bool,
) -> Result<f64, CentralError> {
    if target_slots == 0 || mean_job_duration_ms == 0 || heartbeat_interval_ms == 0 {
        return Err(CentralError::InvalidParameter(
            "calibration requires non-zero slots, duration, and heartbeat interval".into(),
        ));
    }
    let transitions = if filtering { 1.0 } else { 2.0 };
    let per_slot_rate_per_ms =
        1.0 / heartbeat_interval_ms as f64 + transitions / mean_job_duration_ms as f64;
    Ok(1.0 / (target_slots as f64 * per_slot_rate_per_ms))
}

/// Should this advert be forwarded to the collector? With filtering enabled
/// only heartbeats and transitions into Unclaimed survive; disabled, every
/// advert goes through.
pub fn filter_update(kind: AdvertKind, to_state: SlotState, filtering: bool) -> bool {
    if !filtering {
        return true;
    }
    match kind {
        AdvertKind::Heartbeat => true,
        AdvertKind::Transition => to_state == SlotState::Unclaimed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryTarget {
    Top,
    Secondary(usize),
}

/// Route a status query. Negotiator (High) queries always go to the top
/// collector; Low-priority queries are spread round-robin over secondaries
/// when priority routing is on and any secondary exists.
pub fn route_query(
    kind: QueryKind,
    priority_routing: bool,
    n_secondaries: usize,
    rr_counter: &mut usize,
) -> QueryTarget {
    match kind {
        QueryKind::High => QueryTarget::Top,
        QueryKind::Low => {
            if priority_routing && n_secondaries > 0 {
                let i = *rr_counter % n_secondaries;
                *rr_counter += 1;
                QueryTarget::Secondary(i)
            } else {
                QueryTarget::Top
            }
        }
    }
}

/// Matchmaking scan time: candidates are split across negotiator worker
/// threads, each candidate costing `match_cost_ms`.
pub fn cycle_match_ms(candidates: u64, match_cost_ms: f64, threads: u32) -> u64 {
    debug_assert!(threads >= 1);
    (candidates as f64 * match_cost_ms / threads as f64).ceil() as u64
}

/// Connection broker: startds behind NAT register here; a slot whose startd
/// is not registered cannot be claimed. Connections are capped.
pub struct Ccb {
    pub max_connections: usize,
    pub retry_backoff_ms: u64,
    registered: HashSet<StartdId>,
    pub rejections: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcbOutcome {
    Registered,
    Rejected,
}

impl Ccb {
    pub fn new(max_connections: usize, retry_backoff_ms: u64) -> Self {
        Ccb { max_connections, retry_backoff_ms, registered: HashSet::new(), rejections: 0 }
    }

    pub fn register(&mut self, startd: StartdId) -> CcbOutcome {
        if self.registered.contains(&startd) {
            return CcbOutcome::Registered;
        }
        if self.registered.len() >= self.max_connections {
            self.rejections += 1;
            return CcbOutcome::Rejected;
        }
        self.registered.insert(startd);
        CcbOutcome::Registered
    }

    pub fn release(&mut self, startd: StartdId) {
        self.registered.remove(&startd);
    }

    pub fn is_registered(&self, startd: StartdId) -> bool {
        self.registered.contains(&startd)
    }

    pub fn connection_count(&self) -> usize {
        self.registered.len()
    }
}

/// Outcome of one negotiation cycle.
#[derive(Debug, Clone, Copy, Default)]
pub struct MatchReport {
    pub started_at: SimTime,
    pub completed_at: SimTime,
    pub candidates: u64,
    pub matches: u64,
    pub stale_claim_failures: u64,
    pub query_wait_ms: f64,
    pub query_cost_ms: f64,
    pub match_ms: u64,
    pub total_ms: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collector(cost_ms: f64, buffer: usize) -> Collector {
        Collector::new(cost_ms, 50.0, 200.0, Transport::Udp, buffer, 900_000).unwrap()
    }

    fn upd(slot: SlotId, state: SlotState, at: u64) -> UpdateMessage {
        UpdateMessage { slot, state, emitted_at: SimTime(at), kind: AdvertKind::Heartbeat }
    }

    #[test]
    fn idle_collector_processes_one_update_after_service_time() {
        let mut c = collector(10.0, 100);
        assert_eq!(c.ingest(SimTime(0), upd(3, SlotState::Unclaimed, 0)), IngestOutcome::Queued);
        // Not yet served at t=9.
        assert!(c.viewed_state(3, SimTime(9)).is_none());
        // Served at t=10; as_of is the emission time.
        let (state, as_of) = c.viewed_state(3, SimTime(10)).unwrap();
        assert_eq!(state, SlotState::Unclaimed);
        assert_eq!(as_of, SimTime(0));
        assert_eq!(c.counters().processed, 1);
    }

    #[test]
    fn eleven_simultaneous_arrivals_at_buffer_ten_drop_one() {
        let mut c = collector(10.0, 10);
        let mut dropped = 0;
        for i in 0..11 {
            if c.ingest(SimTime(0), upd(i, SlotState::Unclaimed, 0)) == IngestOutcome::Dropped {
                dropped += 1;
            }
        }
        assert_eq!(dropped, 1);
        assert_eq!(c.counters().dropped, 1);
        assert_eq!(c.counters().offered, 11);
    }

    #[test]
    fn tcp_transport_never_drops() {
        let mut c =
            Collector::new(10.0, 50.0, 200.0, Transport::Tcp, 1, 900_000).unwrap();
        for i in 0..1000 {
            assert_eq!(c.ingest(SimTime(0), upd(i, SlotState::Busy, 0)), IngestOutcome::Queued);
        }
        assert_eq!(c.counters().dropped, 0);
        assert_eq!(c.queue_len(), 1000);
    }

    #[test]
    fn overload_at_twice_service_rate_drops_about_half() {
        // Offered 200/s against capacity 100/s (10ms each), buffer 10,
        // ten 60-second windows. Expected drop fraction approaches
        // 1 - mu/lambda = 0.5 from below (the buffer absorbs a sliver).
        let mut c = collector(10.0, 10);
        let horizon_ms = 600_000u64;
        let mut t = 0;
        while t < horizon_ms {
            c.ingest(SimTime(t), upd(0, SlotState::Busy, t));
            t += 5;
        }
        let k = c.counters();
        let frac = k.dropped as f64 / k.offered as f64;
        let expected = 1.0 - 0.5 - (10.0 + 1.0) / k.offered as f64; // queue fill slack
        assert!((frac - 0.5).abs() < 0.05, "drop fraction {frac}");
        assert!((frac - expected).abs() < 0.01, "drop fraction {frac} vs oracle {expected}");
    }

    #[test]
    fn duty_cycle_is_zero_without_traffic() {
        let mut c = collector(10.0, 10);
        c.begin_window(SimTime(0));
        assert_eq!(c.duty_cycle(SimTime(60_000)).unwrap(), 0.0);
    }

    #[test]
    fn duty_cycle_window_of_zero_is_rejected() {
        let mut c = collector(10.0, 10);
        c.begin_window(SimTime(5));
        assert!(matches!(c.duty_cycle(SimTime(5)), Err(CentralError::InvalidParameter(_))));
    }

    #[test]
    fn thousand_updates_of_10ms_in_a_minute_give_one_sixth_duty() {
        let mut c = collector(10.0, 2000);
        c.begin_window(SimTime(0));
        for i in 0..1000u64 {
            // spread arrivals so nothing queues past the window
            c.ingest(SimTime(i * 50), upd(0, SlotState::Busy, i * 50));
        }
        let duty = c.duty_cycle(SimTime(60_000)).unwrap();
        assert!((duty - 1.0 / 6.0).abs() < 1e-12, "duty {duty}");
    }

    #[test]
    fn saturated_collector_reports_unit_duty() {
        let mut c = collector(10.0, 10_000);
        c.begin_window(SimTime(0));
        for i in 0..20_000u64 {
            c.ingest(SimTime(i), upd(0, SlotState::Busy, i)); // 1/ms against 0.1/ms capacity
        }
        let duty = c.duty_cycle(SimTime(20_000)).unwrap();
        assert!(duty > 0.999, "duty {duty}");
    }

    #[test]
    fn partial_service_is_credited_to_busy_time() {
        let mut c = collector(10.0, 10);
        c.ingest(SimTime(0), upd(0, SlotState::Busy, 0));
        assert_eq!(c.busy_ms_at(SimTime(4)), 4.0);
        assert_eq!(c.busy_ms_at(SimTime(10)), 10.0);
        assert_eq!(c.busy_ms_at(SimTime(11)), 10.0);
    }

    #[test]
    fn queries_wait_behind_queued_updates_fifo() {
        let mut c = collector(10.0, 100);
        for i in 0..5 {
            c.ingest(SimTime(0), upd(i, SlotState::Busy, 0));
        }
        // 50ms of update service ahead, then the 50ms query itself.
        let done = c.enqueue_query(SimTime(0), QueryKind::High);
        assert_eq!(done, 100.0);
        c.sync(SimTime(100));
        let k = c.counters();
        assert_eq!(k.busy_query_hi_ms, 50.0);
        assert_eq!(k.busy_update_ms, 50.0);
    }

    #[test]
    fn forwarded_digests_never_drop_and_keep_original_timestamps() {
        let mut c = collector(10.0, 1); // UDP buffer of one
        c.ingest(SimTime(0), upd(0, SlotState::Busy, 0));
        // Direct UDP ingest would drop now (buffer full)...
        assert_eq!(c.ingest(SimTime(0), upd(1, SlotState::Busy, 0)), IngestOutcome::Dropped);
        // ...but a forwarded digest queues regardless, at its own cost.
        let msg = UpdateMessage {
            slot: 2,
            state: SlotState::Unclaimed,
            emitted_at: SimTime(0),
            kind: AdvertKind::Transition,
        };
        c.ingest_forwarded(SimTime(0), msg, 1.0);
        assert_eq!(c.counters().dropped, 1);
        assert_eq!(c.queue_len(), 2);
        // Served after the 10ms update plus the 1ms digest; as_of is the
        // original emission time, not the forwarding time.
        let (state, as_of) = c.viewed_state(2, SimTime(11)).unwrap();
        assert_eq!(state, SlotState::Unclaimed);
        assert_eq!(as_of, SimTime(0));
        assert_eq!(c.counters().busy_ms, 11.0);
    }

    #[test]
    fn ads_expire_after_their_lifetime() {
        let mut c = Collector::new(10.0, 50.0, 200.0, Transport::Udp, 100, 1_000).unwrap();
        c.ingest(SimTime(0), upd(2, SlotState::Unclaimed, 0));
        assert!(c.viewed_state(2, SimTime(1_000)).is_some());
        assert!(c.viewed_state(2, SimTime(1_001)).is_none());
        assert_eq!(c.count_viewed_unclaimed(SimTime(1_001)), 0);
        // Pruned on scan.
        assert!(c.entry(2).is_none());
    }

    #[test]
    fn later_update_overwrites_view_state() {
        let mut c = collector(1.0, 100);
        c.ingest(SimTime(0), upd(1, SlotState::Unclaimed, 0));
        c.ingest(SimTime(5), upd(1, SlotState::Busy, 5));
        let (state, as_of) = c.viewed_state(1, SimTime(10)).unwrap();
        assert_eq!(state, SlotState::Busy);
        assert_eq!(as_of, SimTime(5));
    }

    #[test]
    fn calibration_reproduces_the_anchor_costs() {
        // 800k slots, 6h jobs, 5min heartbeat, filtering on:
        // r = 1/300 + 1/21600 per second = 73/21600; c = 21600/(800000*73) s.
        let c = calibrate_update_cost_ms(800_000, 21_600_000, 300_000, true).unwrap();
        let exact_ms = 21_600_000.0 / (800_000.0 * 73.0);
        assert!((c - exact_ms).abs() < 1e-12);
        assert!((c - 0.3699).abs() < 1e-4, "cost {c} ms");
        // 1:100 scale target.
        let c100 = calibrate_update_cost_ms(8_000, 21_600_000, 300_000, true).unwrap();
        assert!((c100 - 36.99).abs() < 1e-2, "cost {c100} ms");
        assert!((c100 / c - 100.0).abs() < 1e-9);
    }

    #[test]
    fn calibration_with_filtering_off_doubles_the_transition_term() {
        let on = calibrate_update_cost_ms(8_000, 21_600_000, 300_000, true).unwrap();
        let off = calibrate_update_cost_ms(8_000, 21_600_000, 300_000, false).unwrap();
        assert!(off < on);
        let r_on = 1.0 / 300_000.0 + 1.0 / 21_600_000.0;
        let r_off = 1.0 / 300_000.0 + 2.0 / 21_600_000.0;
        assert!((on / off - r_off / r_on).abs() < 1e-12);
    }

    #[test]
    fn calibration_rejects_zero_inputs() {
        assert!(calibrate_update_cost_ms(0, 1, 1, true).is_err());
        assert!(calibrate_update_cost_ms(1, 0, 1, true).is_err());
        assert!(calibrate_update_cost_ms(1, 1, 0, true).is_err());
    }

    #[test]
    fn filtering_passes_only_heartbeats_and_releases() {
        use SlotState::*;
        assert!(filter_update(AdvertKind::Heartbeat, Busy, true));
        assert!(filter_update(AdvertKind::Transition, Unclaimed, true));
        assert!(!filter_update(AdvertKind::Transition, Busy, true));
        assert!(!filter_update(AdvertKind::Transition, Dead, true));
        // Disabled: everything goes through.
        assert!(filter_update(AdvertKind::Transition, Busy, false));
        assert!(filter_update(AdvertKind::Transition, Dead, false));
    }

    #[test]
    fn query_routing_table() {
        let mut rr = 0;
        assert_eq!(route_query(QueryKind::High, true, 3, &mut rr), QueryTarget::Top);
        assert_eq!(route_query(QueryKind::Low, false, 3, &mut rr), QueryTarget::Top);
        assert_eq!(route_query(QueryKind::Low, true, 0, &mut rr), QueryTarget::Top);
        assert_eq!(route_query(QueryKind::Low, true, 2, &mut rr), QueryTarget::Secondary(0));
        assert_eq!(route_query(QueryKind::Low, true, 2, &mut rr), QueryTarget::Secondary(1));
        assert_eq!(route_query(QueryKind::Low, true, 2, &mut rr), QueryTarget::Secondary(0));
    }

    #[test]
    fn match_scan_time_divides_across_threads() {
        assert_eq!(cycle_match_ms(10_000, 1.0, 1), 10_000);
        assert_eq!(cycle_match_ms(10_000, 1.0, 4), 2_500);
        assert_eq!(cycle_match_ms(10_001, 1.0, 4), 2_501); // ceil
        assert_eq!(cycle_match_ms(0, 1.0, 4), 0);
    }

    #[test]
    fn ccb_caps_connections_and_frees_on_release() {
        let mut ccb = Ccb::new(2, 60_000);
        assert_eq!(ccb.register(1), CcbOutcome::Registered);
        assert_eq!(ccb.register(2), CcbOutcome::Registered);
        assert_eq!(ccb.register(3), CcbOutcome::Rejected);
        assert_eq!(ccb.connection_count(), 2);
        // Re-registering an existing startd is idempotent, not a new socket.
        assert_eq!(ccb.register(2), CcbOutcome::Registered);
        assert_eq!(ccb.connection_count(), 2);
        ccb.release(1);
        assert_eq!(ccb.register(3), CcbOutcome::Registered);
        assert!(ccb.is_registered(3));
        assert!(!ccb.is_registered(1));
        assert_eq!(ccb.rejections, 1);
    }
}
