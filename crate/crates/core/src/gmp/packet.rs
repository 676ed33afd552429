//! GMP wire format.
//!
//! ```text
//! offset  size  field
//! 0       1     version (1)
//! 1       1     kind
//! 2       4     session id   (big-endian)
//! 6       4     sequence     (big-endian)
//! 10      2     payload len  (big-endian)
//! 12      n     payload
//! ```

use thiserror::Error;

pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 12;
pub const MAX_PAYLOAD: usize = 1400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum PacketKind {
    Data = 0,
    Ack = 1,
    ChunkInit = 2,
    ChunkData = 3,
    ChunkAck = 4,
    ChunkFin = 5,
}

impl PacketKind {
    pub fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            0 => Self::Data,
            1 => Self::Ack,
            2 => Self::ChunkInit,
            3 => Self::ChunkData,
            4 => Self::ChunkAck,
            5 => Self::ChunkFin,
            _ => return None,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("truncated header")]
    TruncatedHeader,
    #[error("unknown version {0}")]
    UnknownVersion(u8),
    #[error("unknown kind {0}")]
    UnknownKind(u8),
    #[error("payload length mismatch: header says {declared}, datagram carries {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD}-byte limit")]
    PayloadTooLarge(usize),
    #[error("malformed {0:?} body")]
    MalformedBody(PacketKind),
    #[error("session id 0 is reserved")]
    ReservedSession,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GmpPacket {
    pub kind: PacketKind,
    pub session: u32,
    pub seq: u32,
    pub payload: Vec<u8>,
}

impl GmpPacket {
    pub fn new(kind: PacketKind, session: u32, seq: u32, payload: Vec<u8>) -> Self {
        Self {
            kind,
            session,
            seq,
            payload,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    /// Serializes the packet. Panics if the payload exceeds [`MAX_PAYLOAD`];
    /// the endpoint never builds such packets.
    pub fn encode(&self) -> Vec<u8> {
        assert!(
            self.payload.len() <= MAX_PAYLOAD,
            "payload of {} bytes exceeds MAX_PAYLOAD",
            self.payload.len()
        );
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(VERSION);
        out.push(self.kind as u8);
        out.extend_from_slice(&self.session.to_be_bytes());
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(b: &[u8]) -> Result<Self, DecodeError> {
        if b.len() < HEADER_LEN {
            return Err(DecodeError::TruncatedHeader);
        }
        if b[0] != VERSION {
            return Err(DecodeError::UnknownVersion(b[0]));
        }
        let kind = PacketKind::from_u8(b[1]).ok_or(DecodeError::UnknownKind(b[1]))?;
        let session = u32::from_be_bytes(b[2..6].try_into().unwrap());
        let seq = u32::from_be_bytes(b[6..10].try_into().unwrap());
        let declared = u16::from_be_bytes(b[10..12].try_into().unwrap()) as usize;
        let actual = b.len() - HEADER_LEN;
        if declared != actual {
            return Err(DecodeError::LengthMismatch { declared, actual });
        }
        if declared > MAX_PAYLOAD {
            return Err(DecodeError::PayloadTooLarge(declared));
        }
        Ok(Self {
            kind,
            session,
            seq,
            payload: b[HEADER_LEN..].to_vec(),
        })
    }
}

/// Body of a CHUNK_INIT packet: total length, transfer id, chunk size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkInit {
    pub total_len: u64,
    pub transfer_id: u32,
    pub chunk_size: u16,
}

impl ChunkInit {
    pub const LEN: usize = 14;

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::LEN);
        out.extend_from_slice(&self.total_len.to_be_bytes());
        out.extend_from_slice(&self.transfer_id.to_be_bytes());
        out.extend_from_slice(&self.chunk_size.to_be_bytes());
        out
    }

    pub fn decode(b: &[u8]) -> Result<Self, DecodeError> {
        if b.len() != Self::LEN {
            return Err(DecodeError::MalformedBody(PacketKind::ChunkInit));
        }
        Ok(Self {
            total_len: u64::from_be_bytes(b[0..8].try_into().unwrap()),
            transfer_id: u32::from_be_bytes(b[8..12].try_into().unwrap()),
            chunk_size: u16::from_be_bytes(b[12..14].try_into().unwrap()),
        })
    }
}

/// CHUNK_DATA and CHUNK_ACK reuse the sequence field: the upper 12 bits tag
/// the transfer, the lower 20 bits index the chunk.
pub const CHUNK_INDEX_BITS: u32 = 20;
pub const MAX_CHUNKS: u32 = 1 << CHUNK_INDEX_BITS;
const TAG_MASK: u32 = (1 << (32 - CHUNK_INDEX_BITS)) - 1;

pub fn chunk_tag(transfer_seq: u32) -> u32 {
    transfer_seq & TAG_MASK
}

pub fn chunk_seq(tag: u32, index: u32) -> u32 {
    debug_assert!(index < MAX_CHUNKS);
    (tag << CHUNK_INDEX_BITS) | index
}

pub fn split_chunk_seq(seq: u32) -> (u32, u32) {
    (seq >> CHUNK_INDEX_BITS, seq & (MAX_CHUNKS - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_data_packet_is_header_only() {
        let p = GmpPacket::new(PacketKind::Data, 7, 1, Vec::new());
        let b = p.encode();
        assert_eq!(b.len(), 12);
        assert_eq!(b, [1, 0, 0, 0, 0, 7, 0, 0, 0, 1, 0, 0]);
    }

    #[test]
    fn header_is_big_endian_at_fixed_offsets() {
        let p = GmpPacket::new(
            PacketKind::ChunkFin,
            0x0102_0304,
            0x0a0b_0c0d,
            vec![0xee; 3],
        );
        let b = p.encode();
        assert_eq!(b[0], 1);
        assert_eq!(b[1], 5);
        assert_eq!(&b[2..6], &[1, 2, 3, 4]);
        assert_eq!(&b[6..10], &[0x0a, 0x0b, 0x0c, 0x0d]);
        assert_eq!(&b[10..12], &[0, 3]);
        assert_eq!(b.len(), 15);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(
            GmpPacket::decode(&[0u8; 11]),
            Err(DecodeError::TruncatedHeader)
        );
        assert_eq!(DecodeError::TruncatedHeader.to_string(), "truncated header");
        let mut b = GmpPacket::new(PacketKind::Data, 1, 1, vec![1, 2]).encode();
        b[0] = 2;
        assert_eq!(GmpPacket::decode(&b), Err(DecodeError::UnknownVersion(2)));
        b[0] = 1;
        b[1] = 9;
        assert_eq!(GmpPacket::decode(&b), Err(DecodeError::UnknownKind(9)));
        b[1] = 0;
        b.push(0);
        assert_eq!(
            GmpPacket::decode(&b),
            Err(DecodeError::LengthMismatch {
                declared: 2,
                actual: 3
            })
        );
    }

    #[test]
    fn oversized_payload_rejected() {
        let mut b = vec![1, 0, 0, 0, 0, 1, 0, 0, 0, 1];
        b.extend_from_slice(&1401u16.to_be_bytes());
        b.extend(std::iter::repeat_n(0u8, 1401));
        assert_eq!(
            GmpPacket::decode(&b),
            Err(DecodeError::PayloadTooLarge(1401))
        );
    }

    #[test]
    fn chunk_seq_packing() {
        let tag = chunk_tag(0xFFFF_F123);
        assert_eq!(tag, 0x123);
        let s = chunk_seq(tag, 7489);
        assert_eq!(split_chunk_seq(s), (0x123, 7489));
    }

    fn kind() -> impl Strategy<Value = PacketKind> {
        (0u8..6).prop_map(|b| PacketKind::from_u8(b).unwrap())
    }

    proptest! {
        #[test]
        fn codec_round_trip(
            kind in kind(),
            session in any::<u32>(),
            seq in any::<u32>(),
            payload in proptest::collection::vec(any::<u8>(), 0..=MAX_PAYLOAD),
        ) {
            let p = GmpPacket::new(kind, session, seq, payload);
            let b = p.encode();
            prop_assert_eq!(b.len(), HEADER_LEN + p.payload.len());
            prop_assert_eq!(GmpPacket::decode(&b).unwrap(), p);
        }

        #[test]
        fn decode_never_panics(b in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = GmpPacket::decode(&b);
        }
    }
}
