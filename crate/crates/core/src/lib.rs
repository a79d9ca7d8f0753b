//! Asynchronous BFT protocols with suboptimal resilience: erasure-coded
//! reliable broadcast (AVID, MBC and their learner variants), one-step
//! binary agreement with a Cobalt-style backup, the ACS epoch engine, and a
//! deterministic simulator for running them under faults.

pub mod aba;
pub mod acs;
pub mod coding;
pub mod netsim;
pub mod rbc;
pub mod types;
