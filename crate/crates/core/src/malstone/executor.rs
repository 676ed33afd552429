use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::rc::Rc;
use std::sync::Arc;
use std::time::Duration;

use super::table::{Increments, RatioTable, Windowing};
use super::wire::{self, owner_index, Reader, StartPlan, Writer};
use super::{MalstoneError, Mode};
use crate::gmp::{Endpoint, GmpConfig, Transmit};
use crate::malgen::{EventRecord, DEFAULT_PERIOD_START, RECORD_LEN};
use crate::monitor::{
    aggregate_link_throughput, select_source, LinkCaps, LinkLoadReport, TrafficMatrix,
};
use crate::netsim::{NetStats, SimNet, SimNode, Simulation};
use crate::rpc::{RpcConfig, RpcError, RpcEvent, RpcNode};
use crate::topology::{EdgeId, NodeId, TopologyTree};

/// How a worker picks which replica of a remote partition to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourcePolicy {
    /// Always the first-listed (primary) replica.
    Naive,
    /// Lowest planned bottleneck utilization, via [`select_source`].
    Balanced,
}

impl SourcePolicy {
    pub fn name(self) -> &'static str {
        match self {
            SourcePolicy::Naive => "naive",
            SourcePolicy::Balanced => "balanced",
        }
    }
}

/// A block of 100-byte records and the leaves holding a copy of it.
#[derive(Debug, Clone)]
pub struct Partition {
    pub bytes: Arc<Vec<u8>>,
    pub replicas: Vec<NodeId>,
}

/// Everything needed for one distributed run.
#[derive(Debug)]
pub struct Cluster {
    pub net: SimNet,
    pub workers: Vec<NodeId>,
    pub partitions: Vec<Partition>,
    /// Workers that get neither partitions nor reducer duty.
    pub excluded: BTreeSet<NodeId>,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub mode: Mode,
    /// Seconds.
    pub window_width: i64,
    pub window_origin: i64,
    pub policy: SourcePolicy,
    pub gmp: GmpConfig,
    pub rpc_timeout: Duration,
    /// Virtual-time budget for the whole run.
    pub time_limit: Duration,
    pub session_base: u32,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            mode: Mode::A,
            window_width: 7 * 86_400,
            window_origin: DEFAULT_PERIOD_START,
            policy: SourcePolicy::Balanced,
            gmp: GmpConfig::default(),
            rpc_timeout: Duration::from_secs(600),
            time_limit: Duration::from_secs(24 * 3600),
            session_base: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhaseTimes {
    pub fetch: Duration,
    pub flags: Duration,
    pub visits: Duration,
    pub counts: Duration,
}

impl PhaseTimes {
    pub fn total(&self) -> Duration {
        self.fetch + self.flags + self.visits + self.counts
    }
}

#[derive(Debug, Clone)]
pub struct Assignment {
    pub partition: u32,
    pub worker: NodeId,
    pub source: NodeId,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub mode: Mode,
    pub policy: SourcePolicy,
    /// The table for `mode`.
    pub table: RatioTable,
    /// MalStone-A falls out of every run.
    pub table_a: RatioTable,
    pub phases: PhaseTimes,
    pub topology: TopologyTree,
    /// Bytes offered to each edge, as counted by the network.
    pub edge_bytes: BTreeMap<EdgeId, u64>,
    /// The same, rebuilt from the driver's per-pair counters.
    pub driver_edge_bytes: BTreeMap<EdgeId, u64>,
    pub worker_records: Vec<(NodeId, u64)>,
    pub assignments: Vec<Assignment>,
    pub transcript_hash: String,
    pub net: NetStats,
}

impl RunReport {
    /// Bytes crossing edges whose child is not a leaf (rack uplinks and up).
    pub fn uplink_bytes(&self) -> u64 {
        self.edge_bytes
            .iter()
            .filter(|(e, _)| !self.topology.is_leaf(e.child()))
            .map(|(_, b)| b)
            .sum()
    }
}

fn link_caps(net: &SimNet) -> LinkCaps {
    let mut caps = LinkCaps::new();
    for e in net.topology().edges() {
        caps.set(e, net.link(e).bandwidth);
    }
    caps
}

/// Round-robin partitions over the active workers and pick a source for
/// each. A worker holding a replica reads it locally under either policy.
pub fn plan_fetches(
    net: &SimNet,
    partitions: &[Partition],
    active: &[NodeId],
    policy: SourcePolicy,
) -> Result<Vec<Assignment>, MalstoneError> {
    if active.is_empty() {
        return Err(MalstoneError::Config("no active workers".into()));
    }
    let topo = net.topology();
    let caps = link_caps(net);
    let mut planned = LinkLoadReport::empty(topo);
    let mut out = Vec::with_capacity(partitions.len());
    for (i, p) in partitions.iter().enumerate() {
        let worker = active[i % active.len()];
        let source = if p.replicas.contains(&worker) {
            worker
        } else {
            match policy {
                SourcePolicy::Naive => *p
                    .replicas
                    .first()
                    .ok_or(MalstoneError::PartitionMissing(i as u32))?,
                SourcePolicy::Balanced => {
                    let set: BTreeSet<NodeId> = p.replicas.iter().copied().collect();
                    if set.is_empty() {
                        return Err(MalstoneError::PartitionMissing(i as u32));
                    }
                    select_source(topo, &set, worker, &planned, &caps, p.bytes.len() as u64)
                        .map_err(|e| MalstoneError::Config(e.to_string()))?
                }
            }
        };
        for e in topo.path_edges(source, worker) {
            *planned.edges.entry(e).or_default() += p.bytes.len() as u64;
        }
        out.push(Assignment {
            partition: i as u32,
            worker,
            source,
        });
    }
    Ok(out)
}

type Fault = Rc<RefCell<Option<MalstoneError>>>;

#[derive(Debug, Clone, Copy)]
enum Purpose {
    Start,
    Fetch,
    Shuffle,
    Done,
    Counts(NodeId),
}

#[derive(Debug, Default)]
struct Coordinator {
    workers: Vec<NodeId>,
    plans: BTreeMap<NodeId, StartPlan>,
    waiting: BTreeSet<NodeId>,
    phase: u8,
    fetch_done: Duration,
    marks: Vec<Duration>,
    records: BTreeMap<NodeId, u64>,
    inc: Increments,
    finished: bool,
}

/// One leaf of the run: storage for any partitions it holds, and worker,
/// reducer and coordinator roles as assigned.
struct MsNode {
    id: NodeId,
    rpc: RpcNode<NodeId>,
    timeout: Duration,
    fault: Fault,
    store: BTreeMap<u32, Arc<Vec<u8>>>,
    calls: HashMap<(NodeId, u32), Purpose>,
    local: VecDeque<(&'static str, Vec<u8>, Purpose)>,

    coordinator: Option<NodeId>,
    plan: Option<StartPlan>,
    records: Vec<EventRecord>,
    pending_fetch: usize,
    fetch_done: Duration,
    pending_shuffle: usize,
    shuffle_phase: u8,
    max_ts: Option<i64>,

    comp: HashMap<u64, i64>,
    visits: HashMap<(u64, u64), i64>,

    coord: Option<Coordinator>,
}

impl MsNode {
    fn new(id: NodeId, endpoint: Endpoint<NodeId>, timeout: Duration, fault: Fault) -> Self {
        let mut rpc = RpcNode::new(endpoint, RpcConfig::default());
        for m in wire::METHODS {
            rpc.register_deferred(m).expect("distinct method names");
        }
        Self {
            id,
            rpc,
            timeout,
            fault,
            store: BTreeMap::new(),
            calls: HashMap::new(),
            local: VecDeque::new(),
            coordinator: None,
            plan: None,
            records: Vec::new(),
            pending_fetch: 0,
            fetch_done: Duration::ZERO,
            pending_shuffle: 0,
            shuffle_phase: 0,
            max_ts: None,
            comp: HashMap::new(),
            visits: HashMap::new(),
            coord: None,
        }
    }

    fn fail(&self, e: MalstoneError) {
        let mut f = self.fault.borrow_mut();
        if f.is_none() {
            *f = Some(e);
        }
    }

    fn invoke(
        &mut self,
        to: NodeId,
        method: &'static str,
        body: Vec<u8>,
        p: Purpose,
        now: Duration,
    ) {
        if to == self.id {
            self.local.push_back((method, body, p));
            return;
        }
        match self.rpc.call(to, method, body, self.timeout, now) {
            Ok(h) => {
                self.calls.insert((h.peer, h.seq), p);
            }
            Err(e) => self.fail(MalstoneError::Protocol(format!("{method}: {e}"))),
        }
    }

    fn pump(&mut self, now: Duration) {
        loop {
            if let Some(ev) = self.rpc.poll_event() {
                match ev {
                    RpcEvent::Completed { call, result } => {
                        if let Some(p) = self.calls.remove(&(call.peer, call.seq)) {
                            self.completed(p, call.peer, result, now);
                        }
                    }
                    RpcEvent::Request { token, body, .. } => {
                        let r = self.serve(token.peer, &token.method, &body, now);
                        self.rpc.respond(token, r, now);
                    }
                }
            } else if let Some((m, body, p)) = self.local.pop_front() {
                let r = self.serve(self.id, m, &body, now).map_err(RpcError::Remote);
                self.completed(p, self.id, r, now);
            } else {
                break;
            }
        }
    }

    fn serve(
        &mut self,
        from: NodeId,
        method: &str,
        body: &[u8],
        now: Duration,
    ) -> Result<Vec<u8>, String> {
        let mut r = Reader::new(body);
        match method {
            wire::M_START => match r.u8()? {
                1 => {
                    let plan = StartPlan::decode(&mut r)?;
                    self.coordinator = Some(from);
                    self.begin_fetch(plan, now);
                    Ok(Vec::new())
                }
                2 => {
                    r.end()?;
                    self.begin_visits(now);
                    Ok(Vec::new())
                }
                p => Err(format!("unknown phase {p}")),
            },
            wire::M_FETCH => {
                let p = r.u32()?;
                r.end()?;
                self.store
                    .get(&p)
                    .map(|b| b.to_vec())
                    .ok_or_else(|| format!("partition {p} not held"))
            }
            wire::M_FLAGS => {
                for _ in 0..r.count(16)? {
                    let (e, t) = (r.u64()?, r.i64()?);
                    merge_min(&mut self.comp, e, t);
                }
                r.end()?;
                Ok(Vec::new())
            }
            wire::M_VISITS => {
                for _ in 0..r.count(24)? {
                    let (s, e, t) = (r.u64()?, r.u64()?, r.i64()?);
                    merge_min(&mut self.visits, (s, e), t);
                }
                r.end()?;
                Ok(Vec::new())
            }
            wire::M_DONE => {
                let phase = r.u8()?;
                let extra = if phase == 1 {
                    Some((Duration::from_nanos(r.u64()?), r.u64()?))
                } else {
                    None
                };
                r.end()?;
                self.coord_done(from, phase, extra, now)?;
                Ok(Vec::new())
            }
            wire::M_COUNTS => {
                r.end()?;
                Ok(self.local_counts())
            }
            m => Err(format!("unknown method: {m}")),
        }
    }

    fn completed(
        &mut self,
        p: Purpose,
        peer: NodeId,
        result: Result<Vec<u8>, RpcError>,
        now: Duration,
    ) {
        let body = match result {
            Ok(b) => b,
            Err(RpcError::Timeout | RpcError::PeerUnreachable | RpcError::Transport(_)) => {
                return self.fail(MalstoneError::WorkerUnreachable(peer));
            }
            Err(e) => return self.fail(MalstoneError::Protocol(format!("{p:?} to {peer}: {e}"))),
        };
        match p {
            Purpose::Start | Purpose::Done => {}
            Purpose::Fetch => {
                self.load(&body);
                self.pending_fetch -= 1;
                if self.pending_fetch == 0 {
                    self.fetch_done = now;
                    self.begin_flags(now);
                }
            }
            Purpose::Shuffle => {
                self.pending_shuffle -= 1;
                if self.pending_shuffle == 0 {
                    self.send_done(now);
                }
            }
            Purpose::Counts(w) => {
                if let Err(e) = self.coord_counts(w, &body, now) {
                    self.fail(MalstoneError::Protocol(format!("counts from {w}: {e}")));
                }
            }
        }
    }

    fn load(&mut self, bytes: &[u8]) {
        if !bytes.len().is_multiple_of(RECORD_LEN) {
            return self.fail(MalstoneError::Protocol(format!(
                "partition of {} bytes is not whole records",
                bytes.len()
            )));
        }
        for chunk in bytes.chunks_exact(RECORD_LEN) {
            match EventRecord::parse(chunk) {
                Ok(r) => {
                    self.max_ts = Some(self.max_ts.map_or(r.timestamp, |m| m.max(r.timestamp)));
                    self.records.push(r);
                }
                Err(e) => return self.fail(MalstoneError::Protocol(e.to_string())),
            }
        }
    }

    fn begin_fetch(&mut self, plan: StartPlan, now: Duration) {
        let fetch = plan.fetch.clone();
        self.plan = Some(plan);
        for (p, src) in fetch {
            if src == self.id {
                match self.store.get(&p).cloned() {
                    Some(b) => self.load(&b),
                    None => return self.fail(MalstoneError::PartitionMissing(p)),
                }
            } else {
                self.pending_fetch += 1;
                let body = Writer::default().u32(p).0.clone();
                self.invoke(src, wire::M_FETCH, body, Purpose::Fetch, now);
            }
        }
        if self.pending_fetch == 0 {
            self.fetch_done = now;
            self.begin_flags(now);
        }
    }

    fn workers(&self) -> Vec<NodeId> {
        self.plan
            .as_ref()
            .map(|p| p.workers.clone())
            .unwrap_or_default()
    }

    fn begin_flags(&mut self, now: Duration) {
        let mut first: BTreeMap<u64, i64> = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.compromised) {
            merge_min(&mut first, r.entity_id, r.timestamp);
        }
        let workers = self.workers();
        let mut buckets: Vec<Vec<(u64, i64)>> = vec![Vec::new(); workers.len()];
        for (e, t) in first {
            buckets[owner_index(e, workers.len())].push((e, t));
        }
        self.shuffle_phase = 1;
        for (w, b) in workers.into_iter().zip(buckets) {
            if w == self.id {
                for (e, t) in b {
                    merge_min(&mut self.comp, e, t);
                }
            } else if !b.is_empty() {
                let mut out = Writer::default();
                out.u32(b.len() as u32);
                for (e, t) in b {
                    out.u64(e).i64(t);
                }
                self.pending_shuffle += 1;
                self.invoke(w, wire::M_FLAGS, out.finish(), Purpose::Shuffle, now);
            }
        }
        if self.pending_shuffle == 0 {
            self.send_done(now);
        }
    }

    fn begin_visits(&mut self, now: Duration) {
        let mut first: HashMap<(u64, u64), i64> = HashMap::new();
        for r in &self.records {
            merge_min(&mut first, (r.site_id, r.entity_id), r.timestamp);
        }
        let workers = self.workers();
        let mut buckets: Vec<Vec<(u64, u64, i64)>> = vec![Vec::new(); workers.len()];
        for ((s, e), t) in first {
            buckets[owner_index(e, workers.len())].push((s, e, t));
        }
        self.shuffle_phase = 2;
        for (w, mut b) in workers.into_iter().zip(buckets) {
            if w == self.id {
                for (s, e, t) in b {
                    merge_min(&mut self.visits, (s, e), t);
                }
            } else if !b.is_empty() {
                b.sort_unstable();
                let mut out = Writer::default();
                out.u32(b.len() as u32);
                for (s, e, t) in b {
                    out.u64(s).u64(e).i64(t);
                }
                self.pending_shuffle += 1;
                self.invoke(w, wire::M_VISITS, out.finish(), Purpose::Shuffle, now);
            }
        }
        if self.pending_shuffle == 0 {
            self.send_done(now);
        }
    }

    fn send_done(&mut self, now: Duration) {
        let Some(c) = self.coordinator else {
            return self.fail(MalstoneError::Protocol("no coordinator".into()));
        };
        let mut w = Writer::default();
        w.u8(self.shuffle_phase);
        if self.shuffle_phase == 1 {
            w.u64(self.fetch_done.as_nanos() as u64)
                .u64(self.records.len() as u64);
        }
        self.invoke(c, wire::M_DONE, w.finish(), Purpose::Done, now);
    }

    fn local_counts(&self) -> Vec<u8> {
        let window = self
            .plan
            .as_ref()
            .filter(|p| p.width > 0)
            .map(|p| Windowing {
                origin: p.origin,
                width: p.width,
            });
        let mut inc = Increments::default();
        for (&(s, e), &t) in &self.visits {
            let hit = self.comp.get(&e).is_some_and(|&c| c >= t);
            inc.add(s, window.map_or(0, |w| w.index(t)), hit);
        }
        let mut w = Writer::default();
        match self.max_ts {
            Some(t) => w.u8(1).i64(t),
            None => w.u8(0).i64(0),
        };
        w.u32(inc.cells.len() as u32);
        for (&(s, k), &(n, d)) in &inc.cells {
            w.u64(s).i64(k).u64(n).u64(d);
        }
        w.finish()
    }

    fn start_coordinator(
        &mut self,
        workers: Vec<NodeId>,
        plans: BTreeMap<NodeId, StartPlan>,
        now: Duration,
    ) {
        self.coord = Some(Coordinator {
            waiting: workers.iter().copied().collect(),
            workers: workers.clone(),
            plans,
            phase: 1,
            ..Coordinator::default()
        });
        for w in workers {
            let body = self.coord.as_ref().unwrap().plans[&w].encode();
            self.invoke(w, wire::M_START, body, Purpose::Start, now);
        }
        self.pump(now);
    }

    fn coord_done(
        &mut self,
        from: NodeId,
        phase: u8,
        extra: Option<(Duration, u64)>,
        now: Duration,
    ) -> Result<(), String> {
        let c = self.coord.as_mut().ok_or("not the coordinator")?;
        if phase != c.phase || !c.waiting.remove(&from) {
            return Err(format!("unexpected done for phase {phase} from {from}"));
        }
        if let Some((fetch_done, records)) = extra {
            c.fetch_done = c.fetch_done.max(fetch_done);
            c.records.insert(from, records);
        }
        if !c.waiting.is_empty() {
            return Ok(());
        }
        c.marks.push(now);
        c.phase += 1;
        c.waiting = c.workers.iter().copied().collect();
        let workers = c.workers.clone();
        for w in workers {
            if phase == 1 {
                self.invoke(w, wire::M_START, vec![2], Purpose::Start, now);
            } else {
                self.invoke(w, wire::M_COUNTS, Vec::new(), Purpose::Counts(w), now);
            }
        }
        Ok(())
    }

    fn coord_counts(&mut self, from: NodeId, body: &[u8], now: Duration) -> Result<(), String> {
        let mut r = Reader::new(body);
        let mut inc = Increments::default();
        let has_ts = r.u8()? == 1;
        let ts = r.i64()?;
        if has_ts {
            inc.see_ts(ts);
        }
        for _ in 0..r.count(32)? {
            let (s, k, n, d) = (r.u64()?, r.i64()?, r.u64()?, r.u64()?);
            inc.cells.insert((s, k), (n, d));
        }
        r.end()?;
        let c = self.coord.as_mut().ok_or("not the coordinator")?;
        if c.phase != 3 || !c.waiting.remove(&from) {
            return Err("unexpected counts".into());
        }
        c.inc.merge(&inc);
        if c.waiting.is_empty() {
            c.marks.push(now);
            c.finished = true;
        }
        Ok(())
    }
}

fn merge_min<K: std::hash::Hash + Ord + Eq>(m: &mut impl MinMap<K>, k: K, t: i64) {
    m.merge_min(k, t);
}

trait MinMap<K> {
    fn merge_min(&mut self, k: K, t: i64);
}

impl<K: std::hash::Hash + Eq> MinMap<K> for HashMap<K, i64> {
    fn merge_min(&mut self, k: K, t: i64) {
        let v = self.entry(k).or_insert(t);
        *v = (*v).min(t);
    }
}

impl<K: Ord> MinMap<K> for BTreeMap<K, i64> {
    fn merge_min(&mut self, k: K, t: i64) {
        let v = self.entry(k).or_insert(t);
        *v = (*v).min(t);
    }
}

impl SimNode for MsNode {
    fn on_datagram(&mut self, from: NodeId, bytes: &[u8], now: Duration) {
        self.rpc.handle_datagram(from, bytes, now);
        self.pump(now);
    }

    fn on_timer(&mut self, now: Duration) {
        self.rpc.handle_timer(now);
        self.pump(now);
    }

    fn poll_transmit(&mut self) -> Option<Transmit<NodeId>> {
        self.rpc.poll_transmit()
    }

    fn next_deadline(&self) -> Option<Duration> {
        self.rpc.next_deadline()
    }
}

/// Runs MalStone over the simulated cluster. The first active worker also
/// coordinates.
pub fn run_distributed(cluster: Cluster, cfg: &BenchConfig) -> Result<RunReport, MalstoneError> {
    let Cluster {
        net,
        workers,
        partitions,
        excluded,
    } = cluster;
    let windowing = match cfg.mode {
        Mode::A => None,
        Mode::B => Some(Windowing::new(cfg.window_origin, cfg.window_width)?),
    };
    let topo = net.topology().clone();
    for &w in workers
        .iter()
        .chain(partitions.iter().flat_map(|p| &p.replicas))
    {
        if !topo.is_leaf(w) {
            return Err(MalstoneError::Config(format!("{w} is not a leaf")));
        }
    }
    let active: Vec<NodeId> = workers
        .iter()
        .copied()
        .filter(|w| !excluded.contains(w))
        .collect();
    let assignments = plan_fetches(&net, &partitions, &active, cfg.policy)?;

    let mut plans: BTreeMap<NodeId, StartPlan> = active
        .iter()
        .map(|&w| {
            let plan = StartPlan {
                workers: active.clone(),
                origin: cfg.window_origin,
                width: windowing.map_or(0, |w| w.width),
                fetch: Vec::new(),
            };
            (w, plan)
        })
        .collect();
    for a in &assignments {
        plans
            .get_mut(&a.worker)
            .unwrap()
            .fetch
            .push((a.partition, a.source));
    }

    let fault: Fault = Rc::new(RefCell::new(None));
    let mut leaves: BTreeSet<NodeId> = workers.iter().copied().collect();
    leaves.extend(partitions.iter().flat_map(|p| p.replicas.iter().copied()));
    let mut sim = Simulation::new(net);
    for &n in &leaves {
        let ep = Endpoint::with_session(cfg.session_base.wrapping_add(n.0).max(1), cfg.gmp.clone())
            .map_err(|e| MalstoneError::Config(e.to_string()))?;
        let mut node = MsNode::new(n, ep, cfg.rpc_timeout, fault.clone());
        for (i, p) in partitions.iter().enumerate() {
            if p.replicas.contains(&n) {
                node.store.insert(i as u32, p.bytes.clone());
            }
        }
        sim.add_node(n, node)
            .map_err(|e| MalstoneError::Config(e.to_string()))?;
    }

    let coord = active[0];
    let start = sim.now();
    sim.with_node(coord, |n, now| {
        n.start_coordinator(active.clone(), plans, now)
    });
    let finished = |s: &Simulation<MsNode>| {
        s.node(coord)
            .and_then(|n| n.coord.as_ref())
            .is_some_and(|c| c.finished)
    };
    let in_time = sim.run_while(
        |s| fault.borrow().is_none() && !finished(s),
        start + cfg.time_limit,
    );
    if let Some(e) = fault.borrow_mut().take() {
        return Err(e);
    }
    if !in_time {
        return Err(MalstoneError::TimeLimit(cfg.time_limit));
    }
    if !finished(&sim) {
        return Err(MalstoneError::Protocol(
            "run stalled before completion".into(),
        ));
    }

    let c = sim.node(coord).unwrap().coord.as_ref().unwrap();
    let fetch_end = c.fetch_done.max(start);
    let phases = PhaseTimes {
        fetch: fetch_end - start,
        flags: c.marks[0] - fetch_end,
        visits: c.marks[1] - c.marks[0],
        counts: c.marks[2] - c.marks[1],
    };
    let table_a = c.inc.table_a();
    let table = match windowing {
        None => table_a.clone(),
        Some(w) => c.inc.table_b(&w),
    };
    let worker_records = workers
        .iter()
        .map(|w| (*w, c.records.get(w).copied().unwrap_or(0)))
        .collect();

    let tm: TrafficMatrix = sim.traffic_bytes().iter().map(|(&k, &v)| (k, v)).collect();
    let driver_edge_bytes = aggregate_link_throughput(&topo, &tm)
        .map_err(|e| MalstoneError::Protocol(e.to_string()))?
        .edges;

    Ok(RunReport {
        mode: cfg.mode,
        policy: cfg.policy,
        table,
        table_a,
        phases,
        edge_bytes: sim.net().edge_bytes(),
        driver_edge_bytes,
        worker_records,
        assignments,
        transcript_hash: sim.net().transcript().hash_hex(),
        net: sim.net().stats(),
        topology: topo,
    })
}

/// Deals records round-robin into `k` partition byte blocks.
pub fn partition_records(records: &[EventRecord], k: usize) -> Result<Vec<Vec<u8>>, MalstoneError> {
    if k == 0 {
        return Err(MalstoneError::Config(
            "partition count must be at least 1".into(),
        ));
    }
    let mut parts = vec![Vec::with_capacity(records.len() / k * RECORD_LEN + RECORD_LEN); k];
    for (i, r) in records.iter().enumerate() {
        r.write_to(&mut parts[i % k])
            .map_err(|e| MalstoneError::Protocol(e.to_string()))?;
    }
    Ok(parts)
}
