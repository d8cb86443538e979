//! Leader–follower drone swarm core.
//!
//! Obstacle sensing, a cellular-automata grid with a genetic rule planner for
//! collision avoidance, centroid-based point-set registration for
//! re-formation, and the deterministic fixed-timestep loop that ties them
//! together. Everything here is `no_std` + `alloc`; file formats and the CLI
//! live in the `swarm-sim` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
mod math;

pub mod ga;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod registration;
pub mod sensing;
pub mod sim;

pub use error::{Error, Result};
pub use geometry::{Circle, DroneId, DroneState, Role, Side, Vec2};
