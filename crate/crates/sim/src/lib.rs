//! Scenario files, trace output, mode comparison and brute-force oracles
//! around the `swarm-core` simulator.

pub mod compare;
pub mod oracle;
pub mod output;
pub mod scenario;
