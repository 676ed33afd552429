use std::collections::BTreeMap;
use std::time::Duration;

use super::net::{SimEvent, SimEventKind, SimNet};
use super::SimError;
use crate::gmp::{Endpoint, ProtocolEvent, Transmit};
use crate::topology::NodeId;

/// A process attached to one leaf of a [`Simulation`].
pub trait SimNode {
    fn on_datagram(&mut self, from: NodeId, bytes: &[u8], now: Duration);
    fn on_timer(&mut self, now: Duration);
    fn poll_transmit(&mut self) -> Option<Transmit<NodeId>>;
    fn next_deadline(&self) -> Option<Duration>;
}

/// Drives a set of [`SimNode`]s over a [`SimNet`] in virtual time.
#[derive(Debug)]
pub struct Simulation<N> {
    net: SimNet,
    nodes: BTreeMap<NodeId, N>,
    armed: BTreeMap<NodeId, Duration>,
    sent: BTreeMap<(NodeId, NodeId), u64>,
    rejected: u64,
}

impl<N: SimNode> Simulation<N> {
    pub fn new(net: SimNet) -> Self {
        Self {
            net,
            nodes: BTreeMap::new(),
            armed: BTreeMap::new(),
            sent: BTreeMap::new(),
            rejected: 0,
        }
    }

    pub fn net(&self) -> &SimNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut SimNet {
        &mut self.net
    }

    pub fn now(&self) -> Duration {
        self.net.now()
    }

    pub fn add_node(&mut self, id: NodeId, node: N) -> Result<(), SimError> {
        if !self.net.topology().is_leaf(id) {
            return Err(SimError::UnknownNode(id));
        }
        if self.nodes.contains_key(&id) {
            return Err(SimError::NodeExists(id));
        }
        self.nodes.insert(id, node);
        self.flush(id);
        Ok(())
    }

    /// Swaps in a fresh process at `id`, returning the old one.
    pub fn replace_node(&mut self, id: NodeId, node: N) -> Option<N> {
        let old = self.nodes.insert(id, node);
        self.armed.remove(&id);
        self.flush(id);
        old
    }

    pub fn remove_node(&mut self, id: NodeId) -> Option<N> {
        self.armed.remove(&id);
        self.nodes.remove(&id)
    }

    pub fn node(&self, id: NodeId) -> Option<&N> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &N)> {
        self.nodes.iter().map(|(k, v)| (*k, v))
    }

    /// Runs `f` against a node at the current time, then sends whatever it
    /// queued.
    pub fn with_node<R>(&mut self, id: NodeId, f: impl FnOnce(&mut N, Duration) -> R) -> Option<R> {
        let now = self.net.now();
        let r = f(self.nodes.get_mut(&id)?, now);
        self.flush(id);
        Some(r)
    }

    /// Bytes handed to the network per (source, destination), counted by
    /// the driver independently of the network's own edge counters.
    pub fn traffic_bytes(&self) -> &BTreeMap<(NodeId, NodeId), u64> {
        &self.sent
    }

    /// Transmits addressed to something other than a leaf.
    pub fn rejected_transmits(&self) -> u64 {
        self.rejected
    }

    fn flush(&mut self, id: NodeId) {
        let Some(node) = self.nodes.get_mut(&id) else {
            return;
        };
        while let Some(t) = node.poll_transmit() {
            let len = t.bytes.len() as u64;
            match self.net.submit(id, t.to, t.bytes) {
                Ok(()) => *self.sent.entry((id, t.to)).or_default() += len,
                Err(_) => self.rejected += 1,
            }
        }
        if let Some(d) = node.next_deadline() {
            let d = d.max(self.net.now());
            if self.armed.get(&id).is_none_or(|&a| d < a) {
                self.armed.insert(id, d);
                self.net.schedule_timer(id, d);
            }
        }
    }

    fn dispatch(&mut self, ev: SimEvent) {
        match ev.kind {
            SimEventKind::DatagramArrival { to, from, bytes } => {
                if let Some(n) = self.nodes.get_mut(&to) {
                    n.on_datagram(from, &bytes, ev.at);
                    self.flush(to);
                }
            }
            SimEventKind::TimerFire { node } => {
                if self.armed.get(&node) == Some(&ev.at) {
                    self.armed.remove(&node);
                }
                if let Some(n) = self.nodes.get_mut(&node) {
                    if n.next_deadline().is_some_and(|d| d <= ev.at) {
                        n.on_timer(ev.at);
                    }
                    self.flush(node);
                }
            }
        }
    }

    /// Processes the next event, if any. Returns its time.
    pub fn step(&mut self) -> Option<Duration> {
        let ev = self.net.pop_due(Duration::MAX)?;
        let at = ev.at;
        self.dispatch(ev);
        Some(at)
    }

    /// Processes every event due by `until` and parks the clock there.
    pub fn run_until(&mut self, until: Duration) {
        while let Some(ev) = self.net.pop_due(until) {
            self.dispatch(ev);
        }
        self.net.advance(until);
    }

    /// Runs until no events remain or `limit` is reached. Returns true if the
    /// network went quiet.
    pub fn run_until_idle(&mut self, limit: Duration) -> bool {
        self.run_while(|_| true, limit)
    }

    /// Runs while `keep_going` holds, checking after every event. Returns
    /// false if `limit` was hit first.
    pub fn run_while(
        &mut self,
        mut keep_going: impl FnMut(&Self) -> bool,
        limit: Duration,
    ) -> bool {
        while keep_going(self) {
            match self.net.peek_time() {
                None => return true,
                Some(t) if t > limit => {
                    self.net.advance(limit);
                    return false;
                }
                Some(_) => {
                    self.step();
                }
            }
        }
        true
    }
}

/// A bare GMP endpoint that records every protocol event it sees.
#[derive(Debug)]
pub struct GmpHost {
    pub endpoint: Endpoint<NodeId>,
    pub events: Vec<(Duration, ProtocolEvent<NodeId>)>,
}

impl GmpHost {
    pub fn new(endpoint: Endpoint<NodeId>) -> Self {
        Self {
            endpoint,
            events: Vec::new(),
        }
    }

    pub fn delivered(&self) -> impl Iterator<Item = &[u8]> {
        self.events.iter().filter_map(|(_, e)| match e {
            ProtocolEvent::Deliver { payload, .. } => Some(payload.as_slice()),
            _ => None,
        })
    }
}

impl SimNode for GmpHost {
    fn on_datagram(&mut self, from: NodeId, bytes: &[u8], now: Duration) {
        let evs = self.endpoint.handle_datagram(from, bytes, now);
        self.events.extend(evs.into_iter().map(|e| (now, e)));
    }

    fn on_timer(&mut self, now: Duration) {
        let evs = self.endpoint.handle_timer(now);
        self.events.extend(evs.into_iter().map(|e| (now, e)));
    }

    fn poll_transmit(&mut self) -> Option<Transmit<NodeId>> {
        self.endpoint.poll_transmit()
    }

    fn next_deadline(&self) -> Option<Duration> {
        self.endpoint.next_deadline()
    }
}
