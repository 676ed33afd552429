use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use super::MonitorError;
use crate::topology::{EdgeId, NodeId, TopologyTree};

/// Offered load between node pairs, in bytes per second.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrafficMatrix {
    entries: BTreeMap<(NodeId, NodeId), u64>,
}

impl TrafficMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `rate` to the (src, dst) entry. Self-traffic is ignored since it
    /// never crosses a link.
    pub fn add(&mut self, src: NodeId, dst: NodeId, rate: u64) {
        if src != dst {
            *self.entries.entry((src, dst)).or_default() += rate;
        }
    }

    pub fn get(&self, src: NodeId, dst: NodeId) -> u64 {
        self.entries.get(&(src, dst)).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((NodeId, NodeId), u64)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl FromIterator<((NodeId, NodeId), u64)> for TrafficMatrix {
    fn from_iter<I: IntoIterator<Item = ((NodeId, NodeId), u64)>>(iter: I) -> Self {
        let mut m = Self::new();
        for ((s, d), r) in iter {
            m.add(s, d, r);
        }
        m
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkLoadReport {
    /// Every edge of the tree, including idle ones.
    pub edges: BTreeMap<EdgeId, u64>,
    pub node_out: BTreeMap<NodeId, u64>,
    pub node_in: BTreeMap<NodeId, u64>,
}

impl LinkLoadReport {
    pub fn empty(topo: &TopologyTree) -> Self {
        Self {
            edges: topo.edges().map(|e| (e, 0)).collect(),
            ..Self::default()
        }
    }

    pub fn load(&self, e: EdgeId) -> u64 {
        self.edges.get(&e).copied().unwrap_or(0)
    }
}

pub fn aggregate_link_throughput(
    topo: &TopologyTree,
    tm: &TrafficMatrix,
) -> Result<LinkLoadReport, MonitorError> {
    let mut r = LinkLoadReport::empty(topo);
    for ((s, d), rate) in tm.iter() {
        for n in [s, d] {
            topo.require_leaf(n)
                .map_err(|_| MonitorError::UnknownNode(n))?;
        }
        for e in topo.path_edges(s, d) {
            *r.edges.get_mut(&e).unwrap() += rate;
        }
        *r.node_out.entry(s).or_default() += rate;
        *r.node_in.entry(d).or_default() += rate;
    }
    Ok(r)
}

/// Per-edge capacity in bytes per second. Missing or zero means unlimited.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkCaps {
    caps: BTreeMap<EdgeId, u64>,
}

impl LinkCaps {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, e: EdgeId, cap: u64) {
        self.caps.insert(e, cap);
    }

    pub fn get(&self, e: EdgeId) -> u64 {
        self.caps.get(&e).copied().unwrap_or(0)
    }
}

/// A non-negative fraction compared exactly.
#[derive(Debug, Clone, Copy)]
struct Ratio {
    num: u128,
    den: u128,
}

impl Ratio {
    const ZERO: Ratio = Ratio { num: 0, den: 1 };
}

impl PartialEq for Ratio {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Ratio {}
impl PartialOrd for Ratio {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Ratio {
    fn cmp(&self, o: &Self) -> Ordering {
        (self.num * o.den).cmp(&(o.num * self.den))
    }
}

/// Picks the replica whose path to `requester` has the lowest bottleneck
/// utilization once `demand` is added; ties go to fewer hops, then the
/// smaller node name.
pub fn select_source(
    topo: &TopologyTree,
    replicas: &BTreeSet<NodeId>,
    requester: NodeId,
    report: &LinkLoadReport,
    caps: &LinkCaps,
    demand: u64,
) -> Result<NodeId, MonitorError> {
    topo.require_leaf(requester)
        .map_err(|_| MonitorError::UnknownNode(requester))?;
    let mut best: Option<(Ratio, usize, &str, NodeId)> = None;
    for &r in replicas {
        topo.require_leaf(r)
            .map_err(|_| MonitorError::UnknownNode(r))?;
        let path = topo.path_edges(r, requester);
        let bottleneck = path
            .iter()
            .map(|&e| match caps.get(e) {
                0 => Ratio::ZERO,
                cap => Ratio {
                    num: report.load(e) as u128 + demand as u128,
                    den: cap as u128,
                },
            })
            .max()
            .unwrap_or(Ratio::ZERO);
        let key = (bottleneck, path.len(), topo.name(r), r);
        if best
            .as_ref()
            .is_none_or(|b| (key.0, key.1, key.2) < (b.0, b.1, b.2))
        {
            best = Some(key);
        }
    }
    best.map(|b| b.3).ok_or(MonitorError::NoReplica)
}
