//! Deterministic discrete-event model of a federated, pilot-based compute
//! pool: glidein provisioning against grid and HPC backends, a collector /
//! negotiator central manager with explicit message costs, connection
//! brokering, and the resulting scaling limits.

pub mod central;
pub mod config;
pub mod engine;
pub mod kernel;
pub mod metrics;
pub mod pool;
pub mod provision;
pub mod scenario;
pub mod workload;
