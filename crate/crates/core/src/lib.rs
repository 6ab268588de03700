//! Invasion percolation on `Z^2`: the invasion engine, outlet and pond
//! extraction, Bernoulli percolation estimators and the Monte Carlo harness
//! that checks limit laws of outlet counts.

pub mod bernoulli;
pub mod dsu;
pub mod ensemble;
pub mod invasion;
pub mod lattice;
pub mod occupancy;
pub mod outlets;
pub mod quadheap;
pub mod stats;
pub mod weightfield;

pub use invasion::{invade, invade_field, truncated_invasion, InvasionConfig, InvasionTrace, SeedRegion, StopReason, StopRule, TraceHeader, TraceMeta};
pub use lattice::{Edge, Orientation, Region, Site};
pub use outlets::{OutletRecord, PondDecomposition};
pub use weightfield::{Seed, WeightField, WeightSource};

/// Bond percolation threshold on the square lattice.
pub const P_C: f64 = 0.5;

pub const TOOL_VERSION: &str = concat!("ipc-core ", env!("CARGO_PKG_VERSION"));
