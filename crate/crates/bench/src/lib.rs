//! Workload driver for the partner-hashing tables.

pub mod metrics;
pub mod runner;
