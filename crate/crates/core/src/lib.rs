//! Core routing and perception library for ground-aerial vineyard scouting.
//!
//! Everything in this crate is deterministic compute over grid maps: no file
//! IO, no threads, no global state. The crate builds without `std` (alloc is
//! required) so the local-navigation path can run on microcontroller-class
//! targets; the default `std` feature only adds wall-clock timing to plan
//! results.
//!
//! Module map:
//!
//! - [`geometry`]: world/grid/body-frame conversions and angle helpers.
//! - [`occupancy`]: five-state cell grids, obstacle footprints, safety
//!   inflation, traversal costs, and the text map format.
//! - [`planner`]: A* over 8-connected grids with the shortest and weighted
//!   metrics, plus the effective-branching-factor solver.
//! - [`sensor`]: simulated 8x8 multizone depth sensor, back-projection of the
//!   planning row into a local occupancy map, detectable-speed bounds.
//! - [`nav`]: the local replanning loop around the planner: triggers,
//!   endpoint projection, yaw assignment, and the world-anchored
//!   measurement memory.
//! - [`mission`]: field/tile modelling, serpentine sweep paths, battery
//!   feasibility.
//! - [`world`]: ground-truth world model for simulation, obstacle sampling,
//!   ray casting, hotspot detection.
//! - [`sim`]: per-tick agent stepping under the five flight policies and
//!   whole-scenario runs.
//! - [`logistics`]: ground-vehicle tour planning over detected hotspots and
//!   the full-sweep baseline comparison.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub(crate) mod math;

pub mod geometry;
pub mod logistics;
pub mod mission;
pub mod nav;
pub mod occupancy;
pub mod planner;
pub mod sensor;
pub mod sim;
pub mod world;

#[cfg(any(test, feature = "test-oracles"))]
pub mod oracle;

pub use geometry::{BodyFrame, GridIndex, Pose4, WorldPoint};
pub use occupancy::{CellState, CostScheme, Footprint, GridMap, Metric};
pub use planner::{PlanQuery, PlanResult};
pub use sensor::{DepthFrame, SensorSpec};
