use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::num::NonZeroUsize;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Duration;

use lru::LruCache;

use super::envelope::RpcEnvelope;
use super::RpcError;
use crate::gmp::{Addr, Endpoint, MessageHandle, ProtocolEvent, Transmit};

/// A request handler: request body in, response body or error text out.
pub type HandlerFn = Arc<dyn Fn(&[u8]) -> Result<Vec<u8>, String> + Send + Sync>;

/// Runs a handler, turning a panic into an error response.
pub fn run_handler(h: &HandlerFn, body: &[u8]) -> Result<Vec<u8>, String> {
    match catch_unwind(AssertUnwindSafe(|| h(body))) {
        Ok(r) => r,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            Err(format!("handler panicked: {msg}"))
        }
    }
}

enum Handler {
    Inline(HandlerFn),
    Deferred,
}

#[derive(Debug, Clone)]
pub struct RpcConfig {
    pub cache_size: usize,
    /// Hand inline handlers out as [`RpcEvent::Request`] instead of running
    /// them on the protocol thread.
    pub offload_handlers: bool,
}

impl Default for RpcConfig {
    fn default() -> Self {
        Self {
            cache_size: 1024,
            offload_handlers: false,
        }
    }
}

/// Identity of a request being served: the requester plus the GMP
/// (session, seq) the request arrived with.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RequestToken<A> {
    pub peer: A,
    pub session: u32,
    pub seq: u32,
    pub method: String,
}

pub enum RpcEvent<A> {
    /// A call we issued finished.
    Completed {
        call: MessageHandle<A>,
        result: Result<Vec<u8>, RpcError>,
    },
    /// A request that the application must answer with [`RpcNode::respond`].
    /// `handler` is set for offloaded inline handlers.
    Request {
        token: RequestToken<A>,
        body: Vec<u8>,
        handler: Option<HandlerFn>,
    },
}

impl<A: std::fmt::Debug> std::fmt::Debug for RpcEvent<A> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RpcEvent::Completed { call, result } => f
                .debug_struct("Completed")
                .field("call", call)
                .field("result", result)
                .finish(),
            RpcEvent::Request { token, body, .. } => f
                .debug_struct("Request")
                .field("token", token)
                .field("body_len", &body.len())
                .finish(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RpcStats {
    pub calls: u64,
    pub requests: u64,
    pub executions: u64,
    pub cache_hits: u64,
    pub in_progress_duplicates: u64,
    pub stale_responses: u64,
}

struct PendingCall {
    deadline: Duration,
}

type Identity<A> = (A, u32, u32);

/// Request/response on top of a GMP [`Endpoint`], driven the same sans-IO
/// way: feed datagrams and timer ticks in, drain transmits and events out.
pub struct RpcNode<A: Addr> {
    endpoint: Endpoint<A>,
    config: RpcConfig,
    handlers: BTreeMap<String, Handler>,
    cache: LruCache<Identity<A>, Vec<u8>>,
    in_progress: HashSet<Identity<A>>,
    pending: BTreeMap<(A, u32), PendingCall>,
    deadlines: BTreeSet<(Duration, A, u32)>,
    events: VecDeque<RpcEvent<A>>,
    stats: RpcStats,
}

impl<A: Addr> RpcNode<A> {
    pub fn new(endpoint: Endpoint<A>, config: RpcConfig) -> Self {
        let cap = NonZeroUsize::new(config.cache_size.max(1)).unwrap();
        Self {
            endpoint,
            config,
            handlers: BTreeMap::new(),
            cache: LruCache::new(cap),
            in_progress: HashSet::new(),
            pending: BTreeMap::new(),
            deadlines: BTreeSet::new(),
            events: VecDeque::new(),
            stats: RpcStats::default(),
        }
    }

    pub fn endpoint(&self) -> &Endpoint<A> {
        &self.endpoint
    }

    pub fn stats(&self) -> &RpcStats {
        &self.stats
    }

    pub fn cached_responses(&self) -> usize {
        self.cache.len()
    }

    /// Swaps the transport for a fresh one (a process restart of the
    /// protocol layer) while keeping handlers and the response cache.
    /// Outstanding calls are left to time out.
    pub fn replace_endpoint(&mut self, endpoint: Endpoint<A>) -> Endpoint<A> {
        std::mem::replace(&mut self.endpoint, endpoint)
    }

    fn check_method(method: &str) -> Result<(), RpcError> {
        if method.is_empty() || method.len() > u8::MAX as usize {
            return Err(RpcError::InvalidMethod(method.to_string()));
        }
        Ok(())
    }

    fn insert_handler(&mut self, method: &str, h: Handler) -> Result<(), RpcError> {
        Self::check_method(method)?;
        if self.handlers.contains_key(method) {
            return Err(RpcError::DuplicateMethod(method.to_string()));
        }
        self.handlers.insert(method.to_string(), h);
        Ok(())
    }

    pub fn register(
        &mut self,
        method: &str,
        handler: impl Fn(&[u8]) -> Result<Vec<u8>, String> + Send + Sync + 'static,
    ) -> Result<(), RpcError> {
        self.insert_handler(method, Handler::Inline(Arc::new(handler)))
    }

    pub fn register_arc(&mut self, method: &str, handler: HandlerFn) -> Result<(), RpcError> {
        self.insert_handler(method, Handler::Inline(handler))
    }

    /// Requests for `method` surface as [`RpcEvent::Request`].
    pub fn register_deferred(&mut self, method: &str) -> Result<(), RpcError> {
        self.insert_handler(method, Handler::Deferred)
    }

    /// Sends a request. The outcome arrives later as [`RpcEvent::Completed`]
    /// carrying the returned handle.
    pub fn call(
        &mut self,
        peer: A,
        method: &str,
        body: Vec<u8>,
        timeout: Duration,
        now: Duration,
    ) -> Result<MessageHandle<A>, RpcError> {
        Self::check_method(method)?;
        let bytes = RpcEnvelope::request(method, body)
            .encode()
            .map_err(|_| RpcError::InvalidMethod(method.to_string()))?;
        let handle = self.endpoint.send(peer.clone(), bytes, now)?;
        let deadline = now + timeout;
        self.pending
            .insert((peer.clone(), handle.seq), PendingCall { deadline });
        self.deadlines.insert((deadline, peer, handle.seq));
        self.stats.calls += 1;
        Ok(handle)
    }

    /// Answers a request handed out as [`RpcEvent::Request`].
    pub fn respond(
        &mut self,
        token: RequestToken<A>,
        result: Result<Vec<u8>, String>,
        now: Duration,
    ) {
        let id = (token.peer.clone(), token.session, token.seq);
        if !self.in_progress.remove(&id) {
            return;
        }
        self.stats.executions += 1;
        self.finish(id, &token.method, result, now);
    }

    fn finish(
        &mut self,
        id: Identity<A>,
        method: &str,
        result: Result<Vec<u8>, String>,
        now: Duration,
    ) {
        let env = match result {
            Ok(body) => RpcEnvelope::response(id.1, id.2, method, body),
            Err(msg) => RpcEnvelope::error(id.1, id.2, method, &msg),
        };
        let bytes = env.encode().expect("method length checked at registration");
        self.send_response(id, bytes, now);
    }

    fn send_response(&mut self, id: Identity<A>, bytes: Vec<u8>, now: Duration) {
        let peer = id.0.clone();
        self.cache.put(id, bytes.clone());
        if let Err(e) = self.endpoint.send(peer.clone(), bytes, now) {
            let env = RpcEnvelope::error(0, 0, "", &e.to_string());
            let _ = self.endpoint.send(peer, env.encode().unwrap(), now);
        }
    }

    pub fn handle_datagram(&mut self, from: A, bytes: &[u8], now: Duration) {
        let evs = self.endpoint.handle_datagram(from, bytes, now);
        self.process(evs, now);
    }

    pub fn handle_timer(&mut self, now: Duration) {
        let evs = self.endpoint.handle_timer(now);
        self.process(evs, now);
        while let Some(first) = self.deadlines.first().cloned() {
            if first.0 > now {
                break;
            }
            self.deadlines.pop_first();
            let (_, peer, seq) = first;
            if self.pending.remove(&(peer.clone(), seq)).is_some() {
                self.complete(peer, seq, Err(RpcError::Timeout));
            }
        }
    }

    fn complete(&mut self, peer: A, seq: u32, result: Result<Vec<u8>, RpcError>) {
        let call = MessageHandle {
            peer,
            session: self.endpoint.session_id(),
            seq,
        };
        self.events.push_back(RpcEvent::Completed { call, result });
    }

    fn take_pending(&mut self, peer: &A, seq: u32) -> bool {
        match self.pending.remove(&(peer.clone(), seq)) {
            Some(p) => {
                self.deadlines.remove(&(p.deadline, peer.clone(), seq));
                true
            }
            None => false,
        }
    }

    fn process(&mut self, evs: Vec<ProtocolEvent<A>>, now: Duration) {
        for ev in evs {
            match ev {
                ProtocolEvent::Deliver {
                    from,
                    session,
                    seq,
                    payload,
                } => self.on_message(from, session, seq, &payload, now),
                ProtocolEvent::Failed { handle, .. }
                    if handle.session == self.endpoint.session_id()
                        && self.take_pending(&handle.peer, handle.seq) =>
                {
                    self.complete(handle.peer, handle.seq, Err(RpcError::PeerUnreachable));
                }
                _ => {}
            }
        }
    }

    fn on_message(&mut self, from: A, session: u32, seq: u32, payload: &[u8], now: Duration) {
        let env = match RpcEnvelope::decode(payload) {
            Ok(e) => e,
            Err(_) => {
                let env = RpcEnvelope::error(session, seq, "", "malformed envelope");
                self.send_response((from, session, seq), env.encode().unwrap(), now);
                return;
            }
        };
        if env.is_response() {
            if env.corr_session != self.endpoint.session_id()
                || !self.take_pending(&from, env.corr_seq)
            {
                self.stats.stale_responses += 1;
                return;
            }
            let result = if env.is_error() {
                Err(RpcError::Remote(
                    String::from_utf8_lossy(&env.body).into_owned(),
                ))
            } else {
                Ok(env.body)
            };
            self.complete(from, env.corr_seq, result);
            return;
        }

        self.stats.requests += 1;
        let id = (from, session, seq);
        if let Some(cached) = self.cache.get(&id).cloned() {
            self.stats.cache_hits += 1;
            let _ = self.endpoint.send(id.0, cached, now);
            return;
        }
        if self.in_progress.contains(&id) {
            self.stats.in_progress_duplicates += 1;
            return;
        }
        let token = RequestToken {
            peer: id.0.clone(),
            session,
            seq,
            method: env.method.clone(),
        };
        match self.handlers.get(&env.method) {
            None => {
                let msg = format!("unknown method: {}", env.method);
                self.finish(id, &env.method, Err(msg), now);
            }
            Some(Handler::Inline(h)) if !self.config.offload_handlers => {
                let result = run_handler(h, &env.body);
                self.stats.executions += 1;
                self.finish(id, &env.method, result, now);
            }
            Some(Handler::Inline(h)) => {
                let handler = Some(h.clone());
                self.in_progress.insert(id);
                self.events.push_back(RpcEvent::Request {
                    token,
                    body: env.body,
                    handler,
                });
            }
            Some(Handler::Deferred) => {
                self.in_progress.insert(id);
                self.events.push_back(RpcEvent::Request {
                    token,
                    body: env.body,
                    handler: None,
                });
            }
        }
    }

    pub fn poll_event(&mut self) -> Option<RpcEvent<A>> {
        self.events.pop_front()
    }

    pub fn poll_transmit(&mut self) -> Option<Transmit<A>> {
        self.endpoint.poll_transmit()
    }

    pub fn next_deadline(&self) -> Option<Duration> {
        let call = self.deadlines.first().map(|d| d.0);
        match (self.endpoint.next_deadline(), call) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Calls still waiting for a response.
    pub fn pending_calls(&self) -> usize {
        self.pending.len()
    }
}
