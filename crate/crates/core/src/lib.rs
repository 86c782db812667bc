//! Entanglement certification for a two-node quantum link from CHSH
//! violation.
//!
//! - [`quantum`]: two-qubit states, the CHSH observables, depolarizing noise
//!   and Born-rule sampling.
//! - [`stats`]: fidelity bounds from a CHSH value and sample-size planning.
//! - [`protocols`]: the CHSH estimator and the EV / PEV threshold tests.
//! - [`netsim`]: discrete-event model of the link that feeds the tests.
//! - [`teleport`]: exact teleportation through stored pairs.
//! - [`harness`]: repeated experiments, error rates and parameter sweeps.

pub mod config;
pub mod error;
pub mod harness;
pub mod netsim;
pub mod protocols;
pub mod quantum;
pub mod stats;
pub mod teleport;

pub use error::{Error, Result};
