//! Simulator for collaborative training of two-head uplift networks.
//!
//! Trains a shared trunk with treated/control heads under centralized,
//! federated (FedAvg), split and hybrid federated-split protocols on
//! non-IID tabular clients, accounts every transmitted byte, audits
//! membership leakage at the cut layer and evaluates uplift ranking.

pub mod collab;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod nn;
pub mod privacy;
pub mod rng;

pub use error::{Error, Result};
pub use rng::Rng;
