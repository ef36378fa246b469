//! Data-driven predictive control from Hankel matrices of recorded
//! trajectories, with a learned operator network replacing the online
//! quadratic program and an event-triggered constraint guard.

pub mod constraint_guard;
pub mod dataset;
pub mod deepc;
pub mod error;
pub mod experiment;
pub mod hankel;
pub mod linalg;
pub mod operator_net;
pub mod plants;
pub mod runtime;

pub use error::{DeepcError, Result};

#[cfg(test)]
mod testutil;
