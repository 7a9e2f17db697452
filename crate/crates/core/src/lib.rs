//! Payment-channel network simulation on two-sided queues.
//!
//! Channels are modelled as pairs of queues served only in matched
//! opposite-direction amounts. The crate provides the queue dynamics, routing
//! policies, capacity-region and fluid analysis, workload generation and a
//! simulation engine.

pub mod engine;
pub mod fluid;
pub mod ledger;
pub mod lp;
pub mod policy;
pub mod topology;
pub mod workload;
