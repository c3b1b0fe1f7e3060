//! Fluid-democracy vote propagation, election accuracy estimation,
//! adversarial topology search and the FedVRD aggregation protocol.

pub mod adversary;
pub mod delegation_graph;
pub mod election_sim;
pub mod error;
pub mod fedvrd;
pub mod harness;
pub mod rng;
pub mod weight_engine;

pub use error::{Error, Result};
