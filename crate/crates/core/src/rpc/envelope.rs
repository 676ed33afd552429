//! RPC envelope, carried as the payload of one GMP message.
//!
//! ```text
//! offset  size  field
//! 0       1     flags         bit 0: response, bit 1: error
//! 1       4     corr_session  (big-endian)
//! 5       4     corr_seq      (big-endian)
//! 9       1     method_len
//! 10      m     method        (UTF-8)
//! 10+m    *     body
//! ```
//!
//! Requests carry zero correlation fields; the server takes the request's
//! identity from the GMP (session, seq) it arrived with and echoes it in the
//! response.

use thiserror::Error;

pub const FLAG_RESPONSE: u8 = 0b01;
pub const FLAG_ERROR: u8 = 0b10;
pub const ENVELOPE_HEADER_LEN: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvelopeError {
    #[error("envelope shorter than its header")]
    Truncated,
    #[error("method_len {declared} exceeds remaining {available} bytes")]
    MethodOverrun { declared: usize, available: usize },
    #[error("method is not UTF-8")]
    MethodNotUtf8,
    #[error("method longer than 255 bytes")]
    MethodTooLong,
    #[error("unknown flag bits {0:#04x}")]
    UnknownFlags(u8),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RpcEnvelope {
    pub flags: u8,
    pub corr_session: u32,
    pub corr_seq: u32,
    pub method: String,
    pub body: Vec<u8>,
}

impl RpcEnvelope {
    pub fn request(method: &str, body: Vec<u8>) -> Self {
        Self {
            flags: 0,
            corr_session: 0,
            corr_seq: 0,
            method: method.to_string(),
            body,
        }
    }

    pub fn response(corr_session: u32, corr_seq: u32, method: &str, body: Vec<u8>) -> Self {
        Self {
            flags: FLAG_RESPONSE,
            corr_session,
            corr_seq,
            method: method.to_string(),
            body,
        }
    }

    pub fn error(corr_session: u32, corr_seq: u32, method: &str, message: &str) -> Self {
        Self {
            flags: FLAG_RESPONSE | FLAG_ERROR,
            ..Self::response(corr_session, corr_seq, method, message.as_bytes().to_vec())
        }
    }

    pub fn is_response(&self) -> bool {
        self.flags & FLAG_RESPONSE != 0
    }

    pub fn is_error(&self) -> bool {
        self.flags & FLAG_ERROR != 0
    }

    pub fn encode(&self) -> Result<Vec<u8>, EnvelopeError> {
        let m = self.method.as_bytes();
        if m.len() > u8::MAX as usize {
            return Err(EnvelopeError::MethodTooLong);
        }
        let mut out = Vec::with_capacity(ENVELOPE_HEADER_LEN + m.len() + self.body.len());
        out.push(self.flags);
        out.extend_from_slice(&self.corr_session.to_be_bytes());
        out.extend_from_slice(&self.corr_seq.to_be_bytes());
        out.push(m.len() as u8);
        out.extend_from_slice(m);
        out.extend_from_slice(&self.body);
        Ok(out)
    }

    pub fn decode(b: &[u8]) -> Result<Self, EnvelopeError> {
        if b.len() < ENVELOPE_HEADER_LEN {
            return Err(EnvelopeError::Truncated);
        }
        let flags = b[0];
        if flags & !(FLAG_RESPONSE | FLAG_ERROR) != 0 {
            return Err(EnvelopeError::UnknownFlags(flags));
        }
        let corr_session = u32::from_be_bytes(b[1..5].try_into().unwrap());
        let corr_seq = u32::from_be_bytes(b[5..9].try_into().unwrap());
        let mlen = b[9] as usize;
        let rest = &b[ENVELOPE_HEADER_LEN..];
        if mlen > rest.len() {
            return Err(EnvelopeError::MethodOverrun {
                declared: mlen,
                available: rest.len(),
            });
        }
        let method = std::str::from_utf8(&rest[..mlen])
            .map_err(|_| EnvelopeError::MethodNotUtf8)?
            .to_string();
        Ok(Self {
            flags,
            corr_session,
            corr_seq,
            method,
            body: rest[mlen..].to_vec(),
        })
    }
}
