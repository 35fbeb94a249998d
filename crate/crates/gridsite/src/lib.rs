//! Optimal siting and sizing of battery storage and wind turbines on radial
//! distribution feeders.
//!
//! The crate couples a backward-forward sweep load flow with a seeded
//! genetic algorithm. A case study fixes the device counts and the total
//! installable power `h`; the search picks buses and P/Q sizes minimizing
//! the total complex feeder loss, device costs, or a weighted mix, subject
//! to the wind-plant PQ capability chart and battery power bounds.
//!
//! Entry points:
//! - [`network::NetworkModel`] and [`network::SweepMatrices`] model the feeder,
//! - [`powerflow::solve`] runs the sweep load flow,
//! - [`objectives::Evaluator`] scores a plan,
//! - [`ga::run`] searches locations and sizes,
//! - [`runner::run_case`] / [`runner::run_suite`] reproduce the case studies.

pub mod devices;
pub mod error;
pub mod ga;
pub mod network;
pub mod objectives;
pub mod powerflow;
pub mod runner;

pub use error::{Error, Result};
pub use network::{load_network, NetworkModel, SweepMatrices};
