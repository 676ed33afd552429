use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fmt::Debug;
use std::hash::Hash;
use std::time::Duration;

use super::dedup::DedupWindow;
use super::packet::{
    chunk_seq, chunk_tag, split_chunk_seq, ChunkInit, DecodeError, GmpPacket, PacketKind,
    MAX_CHUNKS, MAX_PAYLOAD,
};
use super::GmpError;

/// Anything usable as a peer address.
pub trait Addr: Clone + Eq + Ord + Hash + Debug {}
impl<T: Clone + Eq + Ord + Hash + Debug> Addr for T {}

#[derive(Debug, Clone)]
pub struct GmpConfig {
    pub rto_initial: Duration,
    pub rto_backoff_factor: u32,
    /// Total transmissions allowed per packet before it is declared lost.
    pub max_retries: u32,
    pub max_inline_payload: usize,
    pub chunk_window: u32,
    pub dedup_window: u32,
    /// Recent sender sessions remembered per peer for replay suppression.
    pub max_sessions_per_peer: usize,
    pub max_message_size: u64,
}

impl Default for GmpConfig {
    fn default() -> Self {
        Self {
            rto_initial: Duration::from_millis(100),
            rto_backoff_factor: 2,
            max_retries: 8,
            max_inline_payload: MAX_PAYLOAD,
            chunk_window: 64,
            dedup_window: 4096,
            max_sessions_per_peer: 4,
            max_message_size: 1 << 30,
        }
    }
}

impl GmpConfig {
    fn rto_after(&self, transmissions: u32) -> Duration {
        let factor = self
            .rto_backoff_factor
            .saturating_pow(transmissions.saturating_sub(1));
        self.rto_initial.saturating_mul(factor)
    }
}

/// An outgoing datagram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transmit<A> {
    pub to: A,
    pub bytes: Vec<u8>,
}

/// Identity of a sent message: the peer plus the (session, seq) it was
/// stamped with.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessageHandle<A> {
    pub peer: A,
    pub session: u32,
    pub seq: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    PeerUnreachable,
    TransferTimeout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolEvent<A> {
    Deliver {
        from: A,
        session: u32,
        seq: u32,
        payload: Vec<u8>,
    },
    DuplicateSuppressed {
        from: A,
        session: u32,
        seq: u32,
    },
    /// A message we sent has been acknowledged end to end.
    AckProcessed(MessageHandle<A>),
    Failed {
        handle: MessageHandle<A>,
        reason: FailureReason,
    },
    ChunkProgress {
        peer: A,
        seq: u32,
        done: u32,
        total: u32,
        outbound: bool,
    },
    Error {
        from: A,
        error: DecodeError,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EndpointStats {
    pub messages_sent: u64,
    pub data_transmissions: u64,
    pub retransmissions: u64,
    pub acks_sent: u64,
    pub delivered: u64,
    pub duplicates: u64,
    pub malformed: u64,
    pub chunks_sent: u64,
    pub chunk_retransmissions: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EntryKind {
    Data,
    ChunkInit,
    ChunkFin,
}

#[derive(Debug)]
struct PendingEntry {
    kind: EntryKind,
    bytes: Vec<u8>,
    deadline: Duration,
    transmissions: u32,
}

#[derive(Debug, Clone, Copy)]
struct ChunkEntry {
    deadline: Duration,
    transmissions: u32,
}

#[derive(Debug, PartialEq, Eq)]
enum TransferPhase {
    Queued,
    Init,
    Data,
    Fin,
}

#[derive(Debug)]
struct OutboundTransfer {
    seq: u32,
    tag: u32,
    payload: Vec<u8>,
    chunk_size: usize,
    chunks: u32,
    phase: TransferPhase,
    acked: Vec<bool>,
    acked_count: u32,
    base: u32,
    next: u32,
    inflight: BTreeMap<u32, ChunkEntry>,
}

impl OutboundTransfer {
    fn chunk(&self, index: u32) -> &[u8] {
        let start = index as usize * self.chunk_size;
        let end = (start + self.chunk_size).min(self.payload.len());
        &self.payload[start..end]
    }
}

#[derive(Debug)]
struct InboundTransfer {
    session: u32,
    seq: u32,
    tag: u32,
    chunk_size: usize,
    chunks: u32,
    total_len: usize,
    received: Vec<bool>,
    received_count: u32,
    buf: Vec<u8>,
    delivered: bool,
}

#[derive(Debug)]
struct SessionWindow {
    session: u32,
    window: DedupWindow,
}

/// Per-peer protocol state, created on first contact in either direction.
#[derive(Debug)]
pub struct PeerState {
    next_seq: u32,
    outstanding: BTreeSet<u32>,
    pending: BTreeMap<u32, PendingEntry>,
    backlog: VecDeque<(u32, Vec<u8>)>,
    transfers: VecDeque<OutboundTransfer>,
    sessions: VecDeque<SessionWindow>,
    inbound: Option<InboundTransfer>,
}

impl PeerState {
    fn new() -> Self {
        Self {
            next_seq: 1,
            outstanding: BTreeSet::new(),
            pending: BTreeMap::new(),
            backlog: VecDeque::new(),
            transfers: VecDeque::new(),
            sessions: VecDeque::new(),
            inbound: None,
        }
    }

    /// The most recently seen sender session of this peer.
    pub fn last_session_id(&self) -> Option<u32> {
        self.sessions.front().map(|s| s.session)
    }

    pub fn highest_delivered(&self, session: u32) -> Option<u32> {
        self.sessions
            .iter()
            .find(|s| s.session == session)
            .and_then(|s| s.window.highest())
    }

    pub fn is_delivered(&self, session: u32, seq: u32) -> bool {
        self.sessions
            .iter()
            .find(|s| s.session == session)
            .is_some_and(|s| s.window.contains(seq))
    }

    /// Messages sent to this peer and not yet acknowledged or failed.
    pub fn outstanding(&self) -> usize {
        self.outstanding.len()
    }

    /// Current transmission count of a pending small message.
    pub fn transmissions(&self, seq: u32) -> Option<u32> {
        self.pending.get(&seq).map(|e| e.transmissions)
    }

    pub fn retransmit_deadline(&self, seq: u32) -> Option<Duration> {
        self.pending.get(&seq).map(|e| e.deadline)
    }

    fn window_for(&mut self, session: u32, cfg: &GmpConfig) -> &mut DedupWindow {
        match self.sessions.iter().position(|s| s.session == session) {
            Some(0) => {}
            Some(i) => {
                let s = self.sessions.remove(i).unwrap();
                self.sessions.push_front(s);
            }
            None => {
                self.sessions.push_front(SessionWindow {
                    session,
                    window: DedupWindow::new(cfg.dedup_window),
                });
                self.sessions.truncate(cfg.max_sessions_per_peer.max(1));
            }
        }
        &mut self.sessions[0].window
    }

    fn gate_open(&self, seq: u32, window: u32) -> bool {
        match self.outstanding.first() {
            Some(&min) => u64::from(seq) < u64::from(min) + u64::from(window),
            None => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum TimerKey<A> {
    Message { peer: A, seq: u32 },
    Chunk { peer: A, seq: u32, index: u32 },
}

#[derive(Debug)]
struct TimerItem<A> {
    deadline: Duration,
    order: u64,
    key: TimerKey<A>,
}

impl<A> PartialEq for TimerItem<A> {
    fn eq(&self, other: &Self) -> bool {
        self.deadline == other.deadline && self.order == other.order
    }
}
impl<A> Eq for TimerItem<A> {}
impl<A> PartialOrd for TimerItem<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<A> Ord for TimerItem<A> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.deadline, self.order).cmp(&(other.deadline, other.order))
    }
}

/// Shared outputs of the endpoint, split from the peer map so both can be
/// borrowed at once.
#[derive(Debug)]
struct Io<A> {
    session: u32,
    config: GmpConfig,
    outbox: VecDeque<Transmit<A>>,
    timers: BinaryHeap<Reverse<TimerItem<A>>>,
    timer_order: u64,
    stats: EndpointStats,
}

impl<A: Addr> Io<A> {
    fn transmit(&mut self, to: &A, bytes: Vec<u8>) {
        self.outbox.push_back(Transmit {
            to: to.clone(),
            bytes,
        });
    }

    fn arm(&mut self, deadline: Duration, key: TimerKey<A>) {
        self.timer_order += 1;
        self.timers.push(Reverse(TimerItem {
            deadline,
            order: self.timer_order,
            key,
        }));
    }

    fn send_control(&mut self, to: &A, kind: PacketKind, session: u32, seq: u32) {
        let bytes = GmpPacket::new(kind, session, seq, Vec::new()).encode();
        if kind == PacketKind::Ack {
            self.stats.acks_sent += 1;
        }
        self.transmit(to, bytes);
    }

    fn emit_pending(
        &mut self,
        to: &A,
        peer: &mut PeerState,
        seq: u32,
        kind: EntryKind,
        bytes: Vec<u8>,
        now: Duration,
    ) {
        let deadline = now + self.config.rto_after(1);
        if kind == EntryKind::Data {
            self.stats.data_transmissions += 1;
        }
        self.transmit(to, bytes.clone());
        peer.pending.insert(
            seq,
            PendingEntry {
                kind,
                bytes,
                deadline,
                transmissions: 1,
            },
        );
        self.arm(
            deadline,
            TimerKey::Message {
                peer: to.clone(),
                seq,
            },
        );
    }

    fn send_chunk(&mut self, to: &A, t: &OutboundTransfer, index: u32) {
        let pkt = GmpPacket::new(
            PacketKind::ChunkData,
            self.session,
            chunk_seq(t.tag, index),
            t.chunk(index).to_vec(),
        );
        self.transmit(to, pkt.encode());
    }

    fn fill_window(&mut self, to: &A, t: &mut OutboundTransfer, now: Duration) {
        let limit = t
            .base
            .saturating_add(self.config.chunk_window)
            .min(t.chunks);
        while t.next < limit {
            let index = t.next;
            self.send_chunk(to, t, index);
            self.stats.chunks_sent += 1;
            let deadline = now + self.config.rto_after(1);
            t.inflight.insert(
                index,
                ChunkEntry {
                    deadline,
                    transmissions: 1,
                },
            );
            self.arm(
                deadline,
                TimerKey::Chunk {
                    peer: to.clone(),
                    seq: t.seq,
                    index,
                },
            );
            t.next += 1;
        }
    }

    /// Starts whatever queued work the sequence gate now admits.
    fn pump(&mut self, to: &A, peer: &mut PeerState, now: Duration) {
        while let Some(&(seq, _)) = peer.backlog.front() {
            if !peer.gate_open(seq, self.config.dedup_window) {
                break;
            }
            let (seq, bytes) = peer.backlog.pop_front().unwrap();
            self.emit_pending(to, peer, seq, EntryKind::Data, bytes, now);
        }
        let start = match peer.transfers.front() {
            Some(t) => {
                t.phase == TransferPhase::Queued && peer.gate_open(t.seq, self.config.dedup_window)
            }
            None => false,
        };
        if start {
            let t = peer.transfers.front_mut().unwrap();
            t.phase = TransferPhase::Init;
            let seq = t.seq;
            let init = ChunkInit {
                total_len: t.payload.len() as u64,
                transfer_id: seq,
                chunk_size: t.chunk_size as u16,
            };
            let bytes =
                GmpPacket::new(PacketKind::ChunkInit, self.session, seq, init.encode()).encode();
            self.emit_pending(to, peer, seq, EntryKind::ChunkInit, bytes, now);
        }
    }

    fn handle(&self, peer: &A, seq: u32) -> MessageHandle<A> {
        MessageHandle {
            peer: peer.clone(),
            session: self.session,
            seq,
        }
    }
}

/// A GMP endpoint: one local session speaking to any number of peers over a
/// single datagram port. Sans-IO: callers feed datagrams and clock ticks in
/// and drain datagrams out with [`Endpoint::poll_transmit`].
#[derive(Debug)]
pub struct Endpoint<A> {
    io: Io<A>,
    peers: BTreeMap<A, PeerState>,
}

impl<A: Addr> Endpoint<A> {
    /// Creates an endpoint with a random nonzero session id.
    pub fn new(config: GmpConfig) -> Self {
        let session = loop {
            let s: u32 = rand::random();
            if s != 0 {
                break s;
            }
        };
        Self::with_session(session, config).expect("nonzero session")
    }

    pub fn with_session(session: u32, config: GmpConfig) -> Result<Self, GmpError> {
        if session == 0 {
            return Err(GmpError::ReservedSession);
        }
        if config.max_inline_payload == 0 || config.max_inline_payload > MAX_PAYLOAD {
            return Err(GmpError::InvalidConfig(
                "max_inline_payload must be in 1..=1400",
            ));
        }
        if config.max_retries == 0 || config.chunk_window == 0 || config.dedup_window == 0 {
            return Err(GmpError::InvalidConfig(
                "max_retries, chunk_window and dedup_window must be nonzero",
            ));
        }
        Ok(Self {
            io: Io {
                session,
                config,
                outbox: VecDeque::new(),
                timers: BinaryHeap::new(),
                timer_order: 0,
                stats: EndpointStats::default(),
            },
            peers: BTreeMap::new(),
        })
    }

    pub fn session_id(&self) -> u32 {
        self.io.session
    }

    pub fn config(&self) -> &GmpConfig {
        &self.io.config
    }

    pub fn stats(&self) -> &EndpointStats {
        &self.io.stats
    }

    pub fn peer(&self, addr: &A) -> Option<&PeerState> {
        self.peers.get(addr)
    }

    /// Sends `payload` reliably, choosing the inline or chunked path by size.
    pub fn send(
        &mut self,
        peer: A,
        payload: Vec<u8>,
        now: Duration,
    ) -> Result<MessageHandle<A>, GmpError> {
        if payload.len() <= self.io.config.max_inline_payload {
            self.send_message(peer, payload, now)
        } else {
            self.send_large(peer, payload, now)
        }
    }

    /// Sends a message that fits in one DATA packet.
    pub fn send_message(
        &mut self,
        peer: A,
        payload: Vec<u8>,
        now: Duration,
    ) -> Result<MessageHandle<A>, GmpError> {
        if payload.len() > self.io.config.max_inline_payload {
            return self.send_large(peer, payload, now);
        }
        let state = self
            .peers
            .entry(peer.clone())
            .or_insert_with(PeerState::new);
        let seq = allocate_seq(state)?;
        let bytes = GmpPacket::new(PacketKind::Data, self.io.session, seq, payload).encode();
        state.outstanding.insert(seq);
        self.io.stats.messages_sent += 1;
        if state.backlog.is_empty() && state.gate_open(seq, self.io.config.dedup_window) {
            self.io
                .emit_pending(&peer, state, seq, EntryKind::Data, bytes, now);
        } else {
            state.backlog.push_back((seq, bytes));
        }
        Ok(self.io.handle(&peer, seq))
    }

    /// Sends an oversized message through the chunk sub-protocol. Transfers
    /// to the same peer run one at a time in submission order.
    pub fn send_large(
        &mut self,
        peer: A,
        payload: Vec<u8>,
        now: Duration,
    ) -> Result<MessageHandle<A>, GmpError> {
        let chunk_size = self.io.config.max_inline_payload;
        if payload.len() <= chunk_size {
            return Err(GmpError::NotLarge(payload.len()));
        }
        if payload.len() as u64 > self.io.config.max_message_size {
            return Err(GmpError::MessageTooLarge(payload.len()));
        }
        let chunks = payload.len().div_ceil(chunk_size);
        if chunks > MAX_CHUNKS as usize {
            return Err(GmpError::MessageTooLarge(payload.len()));
        }
        let state = self
            .peers
            .entry(peer.clone())
            .or_insert_with(PeerState::new);
        let seq = allocate_seq(state)?;
        state.outstanding.insert(seq);
        self.io.stats.messages_sent += 1;
        state.transfers.push_back(OutboundTransfer {
            seq,
            tag: chunk_tag(seq),
            payload,
            chunk_size,
            chunks: chunks as u32,
            phase: TransferPhase::Queued,
            acked: vec![false; chunks],
            acked_count: 0,
            base: 0,
            next: 0,
            inflight: BTreeMap::new(),
        });
        self.io.pump(&peer, state, now);
        Ok(self.io.handle(&peer, seq))
    }

    pub fn poll_transmit(&mut self) -> Option<Transmit<A>> {
        self.io.outbox.pop_front()
    }

    pub fn has_pending_transmit(&self) -> bool {
        !self.io.outbox.is_empty()
    }

    /// Earliest retransmission deadline, if any packet is awaiting an ACK.
    pub fn next_deadline(&self) -> Option<Duration> {
        self.io.timers.peek().map(|Reverse(t)| t.deadline)
    }

    /// Processes one received datagram. Never panics on arbitrary input.
    pub fn handle_datagram(
        &mut self,
        from: A,
        bytes: &[u8],
        now: Duration,
    ) -> Vec<ProtocolEvent<A>> {
        let mut events = Vec::new();
        let pkt = match GmpPacket::decode(bytes) {
            Ok(p) => p,
            Err(error) => {
                self.io.stats.malformed += 1;
                events.push(ProtocolEvent::Error { from, error });
                return events;
            }
        };
        let peer_originated = matches!(
            pkt.kind,
            PacketKind::Data | PacketKind::ChunkInit | PacketKind::ChunkData | PacketKind::ChunkFin
        );
        if peer_originated && pkt.session == 0 {
            self.io.stats.malformed += 1;
            events.push(ProtocolEvent::Error {
                from,
                error: DecodeError::ReservedSession,
            });
            return events;
        }
        match pkt.kind {
            PacketKind::Data => self.on_data(from, pkt, &mut events),
            PacketKind::Ack => self.on_ack(from, pkt, now, &mut events),
            PacketKind::ChunkInit => self.on_chunk_init(from, pkt, &mut events),
            PacketKind::ChunkData => self.on_chunk_data(from, pkt, &mut events),
            PacketKind::ChunkAck => self.on_chunk_ack(from, pkt, now, &mut events),
            PacketKind::ChunkFin => self.on_chunk_fin(from, pkt),
        }
        self.prune_timers();
        events
    }

    fn on_data(&mut self, from: A, pkt: GmpPacket, events: &mut Vec<ProtocolEvent<A>>) {
        let state = self
            .peers
            .entry(from.clone())
            .or_insert_with(PeerState::new);
        let fresh = state
            .window_for(pkt.session, &self.io.config)
            .insert(pkt.seq);
        if fresh {
            self.io.stats.delivered += 1;
            events.push(ProtocolEvent::Deliver {
                from: from.clone(),
                session: pkt.session,
                seq: pkt.seq,
                payload: pkt.payload,
            });
        } else {
            self.io.stats.duplicates += 1;
            events.push(ProtocolEvent::DuplicateSuppressed {
                from: from.clone(),
                session: pkt.session,
                seq: pkt.seq,
            });
        }
        // Duplicates are re-acknowledged: the first ACK may have been lost.
        self.io
            .send_control(&from, PacketKind::Ack, pkt.session, pkt.seq);
    }

    fn on_ack(
        &mut self,
        from: A,
        pkt: GmpPacket,
        now: Duration,
        events: &mut Vec<ProtocolEvent<A>>,
    ) {
        if pkt.session != self.io.session {
            return;
        }
        let Some(state) = self.peers.get_mut(&from) else {
            return;
        };
        let Some(entry) = state.pending.remove(&pkt.seq) else {
            return;
        };
        match entry.kind {
            EntryKind::Data => {
                state.outstanding.remove(&pkt.seq);
                events.push(ProtocolEvent::AckProcessed(self.io.handle(&from, pkt.seq)));
                self.io.pump(&from, state, now);
            }
            EntryKind::ChunkInit => {
                if let Some(t) = state.transfers.front_mut() {
                    if t.seq == pkt.seq && t.phase == TransferPhase::Init {
                        t.phase = TransferPhase::Data;
                        self.io.fill_window(&from, t, now);
                    }
                }
            }
            EntryKind::ChunkFin => {
                if state.transfers.front().is_some_and(|t| t.seq == pkt.seq) {
                    state.transfers.pop_front();
                }
                state.outstanding.remove(&pkt.seq);
                events.push(ProtocolEvent::AckProcessed(self.io.handle(&from, pkt.seq)));
                self.io.pump(&from, state, now);
            }
        }
    }

    fn on_chunk_init(&mut self, from: A, pkt: GmpPacket, events: &mut Vec<ProtocolEvent<A>>) {
        let init = match ChunkInit::decode(&pkt.payload) {
            Ok(i) => i,
            Err(error) => {
                self.io.stats.malformed += 1;
                events.push(ProtocolEvent::Error { from, error });
                return;
            }
        };
        let chunk_size = usize::from(init.chunk_size);
        let valid = init.transfer_id == pkt.seq
            && chunk_size > 0
            && chunk_size <= MAX_PAYLOAD
            && init.total_len > 0
            && init.total_len <= self.io.config.max_message_size
            && init.total_len.div_ceil(chunk_size as u64) <= u64::from(MAX_CHUNKS);
        if !valid {
            self.io.stats.malformed += 1;
            events.push(ProtocolEvent::Error {
                from,
                error: DecodeError::MalformedBody(PacketKind::ChunkInit),
            });
            return;
        }
        let state = self
            .peers
            .entry(from.clone())
            .or_insert_with(PeerState::new);
        let already_delivered = state
            .window_for(pkt.session, &self.io.config)
            .contains(pkt.seq);
        let in_progress = state
            .inbound
            .as_ref()
            .is_some_and(|t| t.session == pkt.session && t.seq == pkt.seq);
        if !already_delivered && !in_progress {
            let total_len = init.total_len as usize;
            let chunks = total_len.div_ceil(chunk_size) as u32;
            state.inbound = Some(InboundTransfer {
                session: pkt.session,
                seq: pkt.seq,
                tag: chunk_tag(pkt.seq),
                chunk_size,
                chunks,
                total_len,
                received: vec![false; chunks as usize],
                received_count: 0,
                buf: vec![0; total_len],
                delivered: false,
            });
        }
        self.io
            .send_control(&from, PacketKind::Ack, pkt.session, pkt.seq);
    }

    fn on_chunk_data(&mut self, from: A, pkt: GmpPacket, events: &mut Vec<ProtocolEvent<A>>) {
        let (tag, index) = split_chunk_seq(pkt.seq);
        let Some(state) = self.peers.get_mut(&from) else {
            return;
        };
        let Some(t) = state.inbound.as_mut() else {
            return;
        };
        if t.session != pkt.session || t.tag != tag {
            // chunk of a transfer we no longer track
            return;
        }
        if index >= t.chunks {
            self.io.stats.malformed += 1;
            events.push(ProtocolEvent::Error {
                from,
                error: DecodeError::MalformedBody(PacketKind::ChunkData),
            });
            return;
        }
        let start = index as usize * t.chunk_size;
        let expected = (t.total_len - start).min(t.chunk_size);
        if pkt.payload.len() != expected {
            self.io.stats.malformed += 1;
            events.push(ProtocolEvent::Error {
                from,
                error: DecodeError::MalformedBody(PacketKind::ChunkData),
            });
            return;
        }
        if !t.received[index as usize] {
            t.received[index as usize] = true;
            t.received_count += 1;
            t.buf[start..start + expected].copy_from_slice(&pkt.payload);
            events.push(ProtocolEvent::ChunkProgress {
                peer: from.clone(),
                seq: t.seq,
                done: t.received_count,
                total: t.chunks,
                outbound: false,
            });
        }
        self.io
            .send_control(&from, PacketKind::ChunkAck, pkt.session, pkt.seq);

        if t.received_count == t.chunks && !t.delivered {
            t.delivered = true;
            let (session, seq) = (t.session, t.seq);
            let payload = std::mem::take(&mut t.buf);
            if state.window_for(session, &self.io.config).insert(seq) {
                self.io.stats.delivered += 1;
                events.push(ProtocolEvent::Deliver {
                    from,
                    session,
                    seq,
                    payload,
                });
            } else {
                self.io.stats.duplicates += 1;
                events.push(ProtocolEvent::DuplicateSuppressed { from, session, seq });
            }
        }
    }

    fn on_chunk_fin(&mut self, from: A, pkt: GmpPacket) {
        if let Some(state) = self.peers.get_mut(&from) {
            let done = state
                .inbound
                .as_ref()
                .is_some_and(|t| t.session == pkt.session && t.seq == pkt.seq && t.delivered);
            if done {
                state.inbound = None;
            }
        }
        self.io
            .send_control(&from, PacketKind::Ack, pkt.session, pkt.seq);
    }

    fn on_chunk_ack(
        &mut self,
        from: A,
        pkt: GmpPacket,
        now: Duration,
        events: &mut Vec<ProtocolEvent<A>>,
    ) {
        if pkt.session != self.io.session {
            return;
        }
        let (tag, index) = split_chunk_seq(pkt.seq);
        let Some(state) = self.peers.get_mut(&from) else {
            return;
        };
        let Some(t) = state.transfers.front_mut() else {
            return;
        };
        if t.phase != TransferPhase::Data || t.tag != tag || index >= t.chunks {
            return;
        }
        if t.inflight.remove(&index).is_none() {
            return;
        }
        t.acked[index as usize] = true;
        t.acked_count += 1;
        while t.base < t.chunks && t.acked[t.base as usize] {
            t.base += 1;
        }
        events.push(ProtocolEvent::ChunkProgress {
            peer: from.clone(),
            seq: t.seq,
            done: t.acked_count,
            total: t.chunks,
            outbound: true,
        });
        if t.acked_count == t.chunks {
            t.phase = TransferPhase::Fin;
            let seq = t.seq;
            let bytes =
                GmpPacket::new(PacketKind::ChunkFin, self.io.session, seq, Vec::new()).encode();
            self.io
                .emit_pending(&from, state, seq, EntryKind::ChunkFin, bytes, now);
        } else {
            self.io.fill_window(&from, t, now);
        }
    }

    /// Fires every retransmission timer due at `now`. Retransmitted packets
    /// go to the outbox; exhausted packets come back as `Failed` events.
    pub fn handle_timer(&mut self, now: Duration) -> Vec<ProtocolEvent<A>> {
        let mut events = Vec::new();
        while let Some(Reverse(top)) = self.io.timers.peek() {
            if top.deadline > now {
                break;
            }
            let Reverse(item) = self.io.timers.pop().unwrap();
            match item.key {
                TimerKey::Message { peer, seq } => {
                    self.fire_message(peer, seq, item.deadline, now, &mut events)
                }
                TimerKey::Chunk { peer, seq, index } => {
                    self.fire_chunk(peer, seq, index, item.deadline, now, &mut events)
                }
            }
        }
        self.prune_timers();
        events
    }

    fn fire_message(
        &mut self,
        peer: A,
        seq: u32,
        deadline: Duration,
        now: Duration,
        events: &mut Vec<ProtocolEvent<A>>,
    ) {
        let max_retries = self.io.config.max_retries;
        let Some(state) = self.peers.get_mut(&peer) else {
            return;
        };
        let Some(entry) = state.pending.get_mut(&seq) else {
            return;
        };
        if entry.deadline != deadline {
            return;
        }
        if entry.transmissions >= max_retries {
            let entry = state.pending.remove(&seq).unwrap();
            state.outstanding.remove(&seq);
            let reason = match entry.kind {
                EntryKind::Data => FailureReason::PeerUnreachable,
                EntryKind::ChunkInit | EntryKind::ChunkFin => {
                    if state.transfers.front().is_some_and(|t| t.seq == seq) {
                        state.transfers.pop_front();
                    }
                    FailureReason::TransferTimeout
                }
            };
            events.push(ProtocolEvent::Failed {
                handle: self.io.handle(&peer, seq),
                reason,
            });
            self.io.pump(&peer, state, now);
            return;
        }
        entry.transmissions += 1;
        entry.deadline = now + self.io.config.rto_after(entry.transmissions);
        let deadline = entry.deadline;
        let bytes = entry.bytes.clone();
        if entry.kind == EntryKind::Data {
            self.io.stats.data_transmissions += 1;
        }
        self.io.stats.retransmissions += 1;
        self.io.transmit(&peer, bytes);
        self.io.arm(deadline, TimerKey::Message { peer, seq });
    }

    fn fire_chunk(
        &mut self,
        peer: A,
        seq: u32,
        index: u32,
        deadline: Duration,
        now: Duration,
        events: &mut Vec<ProtocolEvent<A>>,
    ) {
        let max_retries = self.io.config.max_retries;
        let Some(state) = self.peers.get_mut(&peer) else {
            return;
        };
        let Some(t) = state.transfers.front_mut() else {
            return;
        };
        if t.seq != seq || t.phase != TransferPhase::Data {
            return;
        }
        let Some(entry) = t.inflight.get_mut(&index) else {
            return;
        };
        if entry.deadline != deadline {
            return;
        }
        if entry.transmissions >= max_retries {
            state.transfers.pop_front();
            state.outstanding.remove(&seq);
            events.push(ProtocolEvent::Failed {
                handle: self.io.handle(&peer, seq),
                reason: FailureReason::TransferTimeout,
            });
            self.io.pump(&peer, state, now);
            return;
        }
        entry.transmissions += 1;
        entry.deadline = now + self.io.config.rto_after(entry.transmissions);
        let deadline = entry.deadline;
        self.io.send_chunk(&peer, t, index);
        self.io.stats.chunk_retransmissions += 1;
        self.io.arm(deadline, TimerKey::Chunk { peer, seq, index });
    }

    /// Drops timer entries whose packet was acknowledged in the meantime so
    /// that `next_deadline` reflects live work.
    fn prune_timers(&mut self) {
        while let Some(Reverse(top)) = self.io.timers.peek() {
            if self.timer_live(top) {
                break;
            }
            self.io.timers.pop();
        }
    }

    fn timer_live(&self, item: &TimerItem<A>) -> bool {
        match &item.key {
            TimerKey::Message { peer, seq } => self
                .peers
                .get(peer)
                .and_then(|s| s.pending.get(seq))
                .is_some_and(|e| e.deadline == item.deadline),
            TimerKey::Chunk { peer, seq, index } => self
                .peers
                .get(peer)
                .and_then(|s| s.transfers.front())
                .filter(|t| t.seq == *seq && t.phase == TransferPhase::Data)
                .and_then(|t| t.inflight.get(index))
                .is_some_and(|e| e.deadline == item.deadline),
        }
    }
}

fn allocate_seq(state: &mut PeerState) -> Result<u32, GmpError> {
    let seq = state.next_seq;
    state.next_seq = seq.checked_add(1).ok_or(GmpError::SequenceExhausted)?;
    Ok(seq)
}
