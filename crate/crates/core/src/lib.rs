//! Consensus-on-measurement distributed Kalman filtering for linear periodic
//! systems: model types, consensus networks, periodic Riccati/Lyapunov
//! solvers, the filters themselves and a Monte Carlo harness.

pub mod cli;
pub mod error;
pub mod filters;
pub mod gap;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod periodic;
pub mod spps;

pub use error::{Error, Result};
