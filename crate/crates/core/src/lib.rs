//! Distributed observer design for platoons of connected vehicles.
//!
//! Each vehicle runs a single-time-scale consensus observer over the
//! vehicle-to-vehicle network: it averages its neighbours' predictions and
//! corrects with the position measurements available in its neighbourhood.
//! The crate builds the platoon model, the communication graph and its
//! connectivity analysis, synthesises block-diagonal observer gains by
//! cone-complementarity linearisation, and runs seeded fault-injection
//! simulations.

pub mod error;
pub mod matlib;

pub use error::{Error, Result};
pub use matlib::Matrix;
pub mod network;
pub mod platoon;
pub mod observer;
pub mod gainsynth;
pub mod simulate;
