use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;
use std::time::Duration;

use super::MonitorError;
use crate::topology::NodeId;

pub const DEFAULT_HISTORY: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSample {
    pub node: NodeId,
    pub at: Duration,
    pub cpu_pct: f64,
    pub mem_bytes: u64,
    pub disk_io_bytes_per_s: f64,
    pub net_in_bytes_per_s: f64,
    pub net_out_bytes_per_s: f64,
}

impl MetricsSample {
    pub fn idle(node: NodeId, at: Duration) -> Self {
        Self {
            node,
            at,
            cpu_pct: 0.0,
            mem_bytes: 0,
            disk_io_bytes_per_s: 0.0,
            net_in_bytes_per_s: 0.0,
            net_out_bytes_per_s: 0.0,
        }
    }

    /// Network throughput used by underperformer detection.
    pub fn throughput(&self) -> f64 {
        self.net_in_bytes_per_s + self.net_out_bytes_per_s
    }

    pub fn validate(&self) -> Result<(), MonitorError> {
        if !(0.0..=100.0).contains(&self.cpu_pct) {
            return Err(MonitorError::Validation(format!(
                "cpu_pct {} outside [0, 100]",
                self.cpu_pct
            )));
        }
        for (name, v) in [
            ("disk_io_bytes_per_s", self.disk_io_bytes_per_s),
            ("net_in_bytes_per_s", self.net_in_bytes_per_s),
            ("net_out_bytes_per_s", self.net_out_bytes_per_s),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(MonitorError::Validation(format!(
                    "{name} {v} is not a non-negative rate"
                )));
            }
        }
        Ok(())
    }
}

/// Bounded per-node sample history. Safe to feed from many threads; reads
/// take a consistent snapshot.
#[derive(Debug)]
pub struct MetricsStore {
    capacity: usize,
    inner: Mutex<BTreeMap<NodeId, VecDeque<MetricsSample>>>,
}

impl MetricsStore {
    pub fn new(nodes: impl IntoIterator<Item = NodeId>) -> Self {
        Self::with_capacity(nodes, DEFAULT_HISTORY)
    }

    pub fn with_capacity(nodes: impl IntoIterator<Item = NodeId>, capacity: usize) -> Self {
        let map = nodes.into_iter().map(|n| (n, VecDeque::new())).collect();
        Self {
            capacity: capacity.max(1),
            inner: Mutex::new(map),
        }
    }

    pub fn ingest(&self, s: MetricsSample) -> Result<(), MonitorError> {
        s.validate()?;
        let mut map = self.inner.lock().unwrap();
        let hist = map
            .get_mut(&s.node)
            .ok_or(MonitorError::UnknownNode(s.node))?;
        if hist.len() == self.capacity {
            hist.pop_front();
        }
        hist.push_back(s);
        Ok(())
    }

    pub fn history_len(&self, node: NodeId) -> Option<usize> {
        self.inner.lock().unwrap().get(&node).map(|h| h.len())
    }

    pub fn latest(&self, node: NodeId) -> Option<MetricsSample> {
        self.inner.lock().unwrap().get(&node)?.back().cloned()
    }

    pub fn snapshot(&self) -> BTreeMap<NodeId, Vec<MetricsSample>> {
        self.inner
            .lock()
            .unwrap()
            .iter()
            .map(|(k, v)| (*k, v.iter().cloned().collect()))
            .collect()
    }
}
