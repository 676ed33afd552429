//! GMP: connectionless, acknowledged, small-message delivery over a single
//! datagram port, with a chunked path for payloads that do not fit in one
//! datagram.

mod dedup;
mod endpoint;
pub mod packet;
mod port;

use thiserror::Error;

pub use dedup::DedupWindow;
pub use endpoint::{
    Addr, Endpoint, EndpointStats, FailureReason, GmpConfig, MessageHandle, PeerState,
    ProtocolEvent, Transmit,
};
pub use packet::{DecodeError, GmpPacket, PacketKind, HEADER_LEN, MAX_PAYLOAD};
pub use port::{DatagramPort, UdpPort};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GmpError {
    #[error("session id 0 is reserved")]
    ReservedSession,
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("payload of {0} bytes fits inline; use send_message")]
    NotLarge(usize),
    #[error("payload of {0} bytes exceeds the maximum message size")]
    MessageTooLarge(usize),
    #[error("sequence space exhausted for this peer")]
    SequenceExhausted,
}
