//! Freeway merge microsimulation with simulation-in-the-loop calibration.
//!
//! The pipeline: [`scenario`] describes the corridor, [`microsim`] produces
//! trajectories, [`sensing`] turns them into loop-detector grids,
//! [`macroscopic`] builds full spatiotemporal fields, [`metrics`] scores
//! simulated against observed data, [`optimizer`] runs differential
//! evolution and [`calibrate`] ties everything into experiments.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod error;
pub mod heatmap;
pub mod io;
pub mod macroscopic;
pub mod metrics;
pub mod microsim;
pub mod optimizer;
pub mod scenario;
pub mod sensing;
pub mod units;

pub use error::{Error, Result};
