//! Request/response over GMP. A request rides in one GMP message; the
//! response is correlated by the request's GMP (session, seq).

mod envelope;
mod node;
mod runtime;
mod sim;

pub use envelope::{EnvelopeError, RpcEnvelope, ENVELOPE_HEADER_LEN, FLAG_ERROR, FLAG_RESPONSE};
pub use node::{run_handler, HandlerFn, RequestToken, RpcConfig, RpcEvent, RpcNode, RpcStats};
pub use runtime::RpcRuntime;
pub use sim::RpcHost;

use thiserror::Error;

use crate::gmp::GmpError;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RpcError {
    #[error("call timed out")]
    Timeout,
    #[error("peer unreachable")]
    PeerUnreachable,
    #[error("remote error: {0}")]
    Remote(String),
    #[error("method {0:?} already registered")]
    DuplicateMethod(String),
    #[error("invalid method name {0:?}")]
    InvalidMethod(String),
    #[error(transparent)]
    Transport(#[from] GmpError),
    #[error("rpc runtime has shut down")]
    Shutdown,
}

#[cfg(test)]
mod tests;
