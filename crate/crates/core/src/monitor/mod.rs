//! Resource monitoring over a tree topology: sample history, per-link load
//! aggregation, underperformer detection and bandwidth-aware replica choice.

mod detect;
mod ingest;
mod links;
mod report;
mod store;

pub use detect::{
    detect_underperformers, detect_underperforming_links, median, DEFAULT_THRESHOLD, DEFAULT_WINDOW,
};
pub use ingest::{format_sample, ingest_handler, parse_samples, INGEST_METHOD};
pub use links::{
    aggregate_link_throughput, select_source, LinkCaps, LinkLoadReport, TrafficMatrix,
};
pub use report::{
    parse_status_csv, status_rows, write_status_csv, write_status_text, NodeCapacity, RowKind,
    SampleFields, StatusRow, BUSY_FRACTION, STATUS_COLUMNS,
};
pub use store::{MetricsSample, MetricsStore, DEFAULT_HISTORY};

use thiserror::Error;

use crate::topology::NodeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonitorError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("invalid sample: {0}")]
    Validation(String),
    #[error("node {node} has {have} samples, need {need}")]
    InsufficientSamples {
        node: NodeId,
        have: usize,
        need: usize,
    },
    #[error("{have} link reports available, need {need}")]
    InsufficientReports { have: usize, need: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no replica to choose from")]
    NoReplica,
    #[error("parse error: {0}")]
    Parse(String),
}

#[cfg(test)]
mod tests;
