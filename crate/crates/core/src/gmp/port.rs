use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::time::{Duration, Instant};

use super::packet::HEADER_LEN;
use super::MAX_PAYLOAD;

/// A single datagram port plus the clock the protocol runs against.
pub trait DatagramPort {
    type Addr;

    fn send_to(&mut self, to: &Self::Addr, bytes: &[u8]) -> io::Result<()>;

    /// Waits up to `timeout` for one datagram. `Ok(None)` on timeout.
    fn recv_from(&mut self, timeout: Duration) -> io::Result<Option<(Self::Addr, Vec<u8>)>>;

    /// Time since the port was opened.
    fn now(&self) -> Duration;
}

/// A real UDP socket bound to one local port.
#[derive(Debug)]
pub struct UdpPort {
    socket: UdpSocket,
    epoch: Instant,
    buf: Vec<u8>,
}

impl UdpPort {
    pub fn bind(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let socket = UdpSocket::bind(addr)?;
        Ok(Self {
            socket,
            epoch: Instant::now(),
            buf: vec![0; HEADER_LEN + MAX_PAYLOAD + 64],
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }
}

impl DatagramPort for UdpPort {
    type Addr = SocketAddr;

    fn send_to(&mut self, to: &SocketAddr, bytes: &[u8]) -> io::Result<()> {
        self.socket.send_to(bytes, to).map(|_| ())
    }

    fn recv_from(&mut self, timeout: Duration) -> io::Result<Option<(SocketAddr, Vec<u8>)>> {
        // a zero read timeout means "block forever" to the OS
        self.socket
            .set_read_timeout(Some(timeout.max(Duration::from_micros(100))))?;
        match self.socket.recv_from(&mut self.buf) {
            Ok((n, from)) => Ok(Some((from, self.buf[..n].to_vec()))),
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) =>
            {
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn now(&self) -> Duration {
        self.epoch.elapsed()
    }
}
