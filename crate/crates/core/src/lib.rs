//! Instrumented messenger workload over TCP plus the two throughput models
//! computed from its telemetry: a Neighbor-Joining based aggregate-response
//! model and M/M/1 Little's law analytics.

pub mod client;
pub mod loadgen;
pub mod phylo;
pub mod protocol;
pub mod queueing;
pub mod report;
pub mod route_filter;
pub mod server;
pub mod telemetry;
