use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::io;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::link::LinkSpec;
use super::SimError;
use crate::gmp::DatagramPort;
use crate::topology::{EdgeId, NodeId, TopologyTree};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimEventKind {
    DatagramArrival {
        to: NodeId,
        from: NodeId,
        bytes: Vec<u8>,
    },
    TimerFire {
        node: NodeId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimEvent {
    pub at: Duration,
    pub kind: SimEventKind,
}

#[derive(Debug)]
struct Scheduled {
    at: Duration,
    order: u64,
    kind: SimEventKind,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.order) == (other.at, other.order)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.order).cmp(&(other.at, other.order))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NetStats {
    pub submitted: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub duplicated: u64,
    pub timers: u64,
}

/// Running record of everything the network did: a SHA-256 over one line
/// per event, plus the lines themselves when recording is enabled.
#[derive(Debug, Clone)]
pub struct Transcript {
    hasher: Sha256,
    lines: Option<Vec<String>>,
    count: u64,
}

impl Transcript {
    fn new(record: bool) -> Self {
        Self {
            hasher: Sha256::new(),
            lines: record.then(Vec::new),
            count: 0,
        }
    }

    fn log(&mut self, at: Duration, kind: &str, src: &str, dst: &str, size: usize) {
        let line = format!(
            "{}.{:09} {kind} {src} {dst} {size}",
            at.as_secs(),
            at.subsec_nanos()
        );
        self.hasher.update(line.as_bytes());
        self.hasher.update(b"\n");
        self.count += 1;
        if let Some(lines) = &mut self.lines {
            lines.push(line);
        }
    }

    pub fn hash_hex(&self) -> String {
        let digest = self.hasher.clone().finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn lines(&self) -> Option<&[String]> {
        self.lines.as_deref()
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// Deterministic discrete-event model of a tree-shaped network.
#[derive(Debug)]
pub struct SimNet {
    topo: TopologyTree,
    links: Vec<LinkSpec>,
    busy_until: Vec<[Duration; 2]>,
    edge_bytes: Vec<u64>,
    queue: BinaryHeap<Reverse<Scheduled>>,
    order: u64,
    now: Duration,
    rng: ChaCha8Rng,
    transcript: Transcript,
    stats: NetStats,
    mailboxes: BTreeMap<NodeId, VecDeque<(NodeId, Vec<u8>)>>,
}

impl SimNet {
    /// Every edge starts with `default_link`; override with [`SimNet::set_link`].
    pub fn new(topo: TopologyTree, default_link: LinkSpec, seed: u64) -> Self {
        let n = topo.len();
        Self {
            links: vec![default_link; n],
            busy_until: vec![[Duration::ZERO; 2]; n],
            edge_bytes: vec![0; n],
            topo,
            queue: BinaryHeap::new(),
            order: 0,
            now: Duration::ZERO,
            rng: ChaCha8Rng::seed_from_u64(seed),
            transcript: Transcript::new(false),
            stats: NetStats::default(),
            mailboxes: BTreeMap::new(),
        }
    }

    /// Keep every transcript line in memory, not only the running hash.
    pub fn record_transcript(&mut self, on: bool) {
        match (on, self.transcript.lines.is_some()) {
            (true, false) => self.transcript.lines = Some(Vec::new()),
            (false, true) => self.transcript.lines = None,
            _ => {}
        }
    }

    pub fn set_link(&mut self, edge: EdgeId, spec: LinkSpec) -> Result<(), SimError> {
        spec.validate().map_err(SimError::InvalidLink)?;
        if !self.topo.contains(edge.child()) || edge.child() == self.topo.root() {
            return Err(SimError::UnknownNode(edge.child()));
        }
        self.links[edge.child().index()] = spec;
        Ok(())
    }

    pub fn link(&self, edge: EdgeId) -> &LinkSpec {
        &self.links[edge.child().index()]
    }

    pub fn topology(&self) -> &TopologyTree {
        &self.topo
    }

    pub fn now(&self) -> Duration {
        self.now
    }

    pub fn stats(&self) -> NetStats {
        self.stats
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    /// Bytes offered to each edge (both directions), counted at submission.
    pub fn edge_bytes(&self) -> BTreeMap<EdgeId, u64> {
        self.topo
            .edges()
            .map(|e| (e, self.edge_bytes[e.child().index()]))
            .collect()
    }

    fn push(&mut self, at: Duration, kind: SimEventKind) {
        self.order += 1;
        self.queue.push(Reverse(Scheduled {
            at,
            order: self.order,
            kind,
        }));
    }

    /// Injects a datagram at the current virtual time.
    pub fn submit(&mut self, from: NodeId, to: NodeId, bytes: Vec<u8>) -> Result<(), SimError> {
        for n in [from, to] {
            if !self.topo.is_leaf(n) {
                return Err(SimError::UnknownNode(n));
            }
        }
        let size = bytes.len();
        self.stats.submitted += 1;
        let (src, dst) = (
            self.topo.name(from).to_string(),
            self.topo.name(to).to_string(),
        );
        self.transcript.log(self.now, "send", &src, &dst, size);

        let path = self.topo.path(from, to);
        for hop in &path {
            self.edge_bytes[hop.edge.child().index()] += size as u64;
        }
        let mut at = self.now;
        let mut dup_extra: Option<Duration> = None;
        for hop in &path {
            let idx = hop.edge.child().index();
            let link = &self.links[idx];
            if link.loss_prob > 0.0 && self.rng.random::<f64>() < link.loss_prob {
                self.stats.dropped += 1;
                let name = self.topo.edge_label(hop.edge);
                self.transcript.log(self.now, "drop", &src, &name, size);
                return Ok(());
            }
            if link.bandwidth > 0 {
                let dir = usize::from(!hop.upward);
                let start = at.max(self.busy_until[idx][dir]);
                at = start + link.serialization(size);
                self.busy_until[idx][dir] = at;
            }
            at += link.latency.sample(&mut self.rng);
            if !link.reorder_jitter.is_zero() {
                let j = self
                    .rng
                    .random_range(0..=link.reorder_jitter.as_nanos() as u64);
                at += Duration::from_nanos(j);
            }
            if link.duplicate_prob > 0.0
                && dup_extra.is_none()
                && self.rng.random::<f64>() < link.duplicate_prob
            {
                dup_extra = Some(link.latency.sample(&mut self.rng) + Duration::from_nanos(1));
            }
        }
        if let Some(extra) = dup_extra {
            self.stats.duplicated += 1;
            self.transcript.log(self.now, "dup", &src, &dst, size);
            self.push(
                at + extra,
                SimEventKind::DatagramArrival {
                    to,
                    from,
                    bytes: bytes.clone(),
                },
            );
        }
        self.push(at, SimEventKind::DatagramArrival { to, from, bytes });
        Ok(())
    }

    pub fn schedule_timer(&mut self, node: NodeId, at: Duration) {
        let at = at.max(self.now);
        self.push(at, SimEventKind::TimerFire { node });
    }

    pub fn peek_time(&self) -> Option<Duration> {
        self.queue.peek().map(|Reverse(s)| s.at)
    }

    /// Fires the next event if it is due by `until`, moving the clock to it.
    pub fn pop_due(&mut self, until: Duration) -> Option<SimEvent> {
        if self.peek_time()? > until {
            return None;
        }
        let Reverse(s) = self.queue.pop().unwrap();
        self.now = s.at;
        match &s.kind {
            SimEventKind::DatagramArrival { to, from, bytes } => {
                self.stats.delivered += 1;
                let (src, dst) = (self.topo.name(*from), self.topo.name(*to));
                let (src, dst) = (src.to_string(), dst.to_string());
                self.transcript.log(s.at, "arrive", &src, &dst, bytes.len());
            }
            SimEventKind::TimerFire { node } => {
                self.stats.timers += 1;
                let name = self.topo.name(*node).to_string();
                self.transcript.log(s.at, "timer", &name, &name, 0);
            }
        }
        Some(SimEvent {
            at: s.at,
            kind: s.kind,
        })
    }

    /// Fires every event due by `until` and leaves the clock at `until`.
    pub fn advance(&mut self, until: Duration) -> Vec<SimEvent> {
        let mut fired = Vec::new();
        while let Some(ev) = self.pop_due(until) {
            fired.push(ev);
        }
        self.now = self.now.max(until);
        fired
    }

    /// A [`DatagramPort`] view of one node. Arrivals for other nodes seen
    /// while waiting are parked in their mailboxes; timer events are
    /// discarded since port users time out on `recv_from` instead.
    pub fn port(&mut self, node: NodeId) -> SimPort<'_> {
        SimPort { net: self, node }
    }
}

pub struct SimPort<'a> {
    net: &'a mut SimNet,
    node: NodeId,
}

impl DatagramPort for SimPort<'_> {
    type Addr = NodeId;

    fn send_to(&mut self, to: &NodeId, bytes: &[u8]) -> io::Result<()> {
        self.net
            .submit(self.node, *to, bytes.to_vec())
            .map_err(|e| io::Error::new(io::ErrorKind::AddrNotAvailable, e.to_string()))
    }

    fn recv_from(&mut self, timeout: Duration) -> io::Result<Option<(NodeId, Vec<u8>)>> {
        let until = self.net.now + timeout;
        loop {
            if let Some(m) = self
                .net
                .mailboxes
                .get_mut(&self.node)
                .and_then(|q| q.pop_front())
            {
                return Ok(Some(m));
            }
            match self.net.pop_due(until) {
                Some(SimEvent {
                    kind: SimEventKind::DatagramArrival { to, from, bytes },
                    ..
                }) => self
                    .net
                    .mailboxes
                    .entry(to)
                    .or_default()
                    .push_back((from, bytes)),
                Some(_) => {}
                None => {
                    self.net.now = until;
                    return Ok(None);
                }
            }
        }
    }

    fn now(&self) -> Duration {
        self.net.now
    }
}
