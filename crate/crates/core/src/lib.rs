//! Desk-scale cloud testbed toolkit.
//!
//! * [`gmp`]: reliable, connectionless small-message protocol over datagrams
//! * [`rpc`]: request/response on top of GMP
//! * [`netsim`]: deterministic discrete-event wide-area network simulator
//! * [`monitor`]: resource samples, per-link throughput aggregation,
//!   underperformer detection and bandwidth-aware source selection
//! * [`malgen`]: MalStone log generator and 100-byte record codec
//! * [`malstone`]: MalStone-A/B oracle and the distributed executor

pub mod gmp;
pub mod malgen;
pub mod malstone;
pub mod monitor;
pub mod netsim;
pub mod rpc;
pub mod topology;

pub use topology::{EdgeId, Hop, NodeId, TopologyTree};
