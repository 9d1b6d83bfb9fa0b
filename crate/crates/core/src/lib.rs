//! Distributed adaptive herding: `N` influencers steer a target whose
//! dynamics are unknown, each learning the lumped uncertainty online with a
//! graph neural network and a backstepping controller.

pub mod adaptation;
pub mod analysis;
pub mod cli;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod sim;

pub use error::{Error, Result};
