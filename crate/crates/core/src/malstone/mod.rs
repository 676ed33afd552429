//! MalStone: for each site, the share of visiting entities that were later
//! compromised. A single-pass in-memory oracle and a distributed executor
//! running on simulated workers over RPC.

mod bench;
mod executor;
mod oracle;
mod report;
mod table;
pub mod wire;

pub use bench::{simbench, SimbenchConfig, SimbenchReport, SimbenchRow};
pub use executor::{
    partition_records, plan_fetches, run_distributed, Assignment, BenchConfig, Cluster, Partition,
    PhaseTimes, RunReport, SourcePolicy,
};
pub use oracle::{compromise_times, malstone_a, malstone_b, scan, Scan};
pub use report::{penalty, timing_csv};
pub use table::{Increments, RatioTable, Windowing, TABLE_HEADER};

use std::time::Duration;

use thiserror::Error;

use crate::malgen::MalgenError;
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// One ratio per site over the whole log.
    A,
    /// Cumulative ratios per site and time window.
    B,
}

#[derive(Debug, Error)]
pub enum MalstoneError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bad ratio table: {0}")]
    Table(String),
    #[error("worker {0} unreachable")]
    WorkerUnreachable(NodeId),
    #[error("partition {0} has no reachable replica")]
    PartitionMissing(u32),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("run exceeded its virtual time limit of {0:?}")]
    TimeLimit(Duration),
    #[error("result mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Malgen(#[from] MalgenError),
}

#[cfg(test)]
mod tests;
