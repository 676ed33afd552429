use std::collections::VecDeque;
use std::time::Duration;

use super::node::{RequestToken, RpcEvent, RpcNode};
use super::RpcError;
use crate::gmp::{MessageHandle, Transmit};
use crate::netsim::SimNode;
use crate::topology::NodeId;

/// An [`RpcNode`] attached to a simulated network. Finished calls and
/// deferred requests are queued for the test or application to inspect.
pub type Completion = (Duration, MessageHandle<NodeId>, Result<Vec<u8>, RpcError>);

pub struct RpcHost {
    pub node: RpcNode<NodeId>,
    pub completed: Vec<Completion>,
    pub requests: VecDeque<(RequestToken<NodeId>, Vec<u8>)>,
}

impl RpcHost {
    pub fn new(node: RpcNode<NodeId>) -> Self {
        Self {
            node,
            completed: Vec::new(),
            requests: VecDeque::new(),
        }
    }

    fn drain(&mut self, now: Duration) {
        while let Some(ev) = self.node.poll_event() {
            match ev {
                RpcEvent::Completed { call, result } => self.completed.push((now, call, result)),
                RpcEvent::Request {
                    token,
                    body,
                    handler: Some(h),
                } => {
                    let r = super::node::run_handler(&h, &body);
                    self.node.respond(token, r, now);
                }
                RpcEvent::Request { token, body, .. } => self.requests.push_back((token, body)),
            }
        }
    }
}

impl SimNode for RpcHost {
    fn on_datagram(&mut self, from: NodeId, bytes: &[u8], now: Duration) {
        self.node.handle_datagram(from, bytes, now);
        self.drain(now);
    }

    fn on_timer(&mut self, now: Duration) {
        self.node.handle_timer(now);
        self.drain(now);
    }

    fn poll_transmit(&mut self) -> Option<Transmit<NodeId>> {
        self.node.poll_transmit()
    }

    fn next_deadline(&self) -> Option<Duration> {
        self.node.next_deadline()
    }
}
