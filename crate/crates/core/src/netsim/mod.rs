//! Deterministic network simulator.
//!
//! A [`SimNet`] moves datagrams across a [`TopologyTree`](crate::TopologyTree)
//! with per-edge latency, loss, bandwidth, duplication and jitter, all drawn
//! from one seeded RNG. Given the same seed and the same submissions it
//! produces the same transcript. [`Simulation`] runs protocol nodes on top.

mod driver;
mod link;
mod net;
mod scenario;

pub use driver::{GmpHost, SimNode, Simulation};
pub use link::{Latency, LinkSpec};
pub use net::{NetStats, SimEvent, SimEventKind, SimNet, SimPort, Transcript};
pub use scenario::{ScenarioConfig, ScenarioError};

use thiserror::Error;

use crate::topology::NodeId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("node {0} is not a leaf of the topology")]
    UnknownNode(NodeId),
    #[error("node {0} already has a process attached")]
    NodeExists(NodeId),
    #[error("invalid link: {0}")]
    InvalidLink(String),
}
