use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, ToSocketAddrs};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam::channel::{self, Receiver, Sender};

use super::node::{run_handler, HandlerFn, RequestToken, RpcConfig, RpcEvent, RpcNode};
use super::RpcError;
use crate::gmp::{DatagramPort, Endpoint, GmpConfig, UdpPort};

const POLL: Duration = Duration::from_millis(1);

enum Command {
    Register {
        method: String,
        handler: HandlerFn,
        reply: Sender<Result<(), RpcError>>,
    },
    Call {
        peer: SocketAddr,
        method: String,
        body: Vec<u8>,
        timeout: Duration,
        reply: Sender<Result<Vec<u8>, RpcError>>,
    },
    Complete {
        token: RequestToken<SocketAddr>,
        result: Result<Vec<u8>, String>,
    },
    Shutdown,
}

struct Job {
    token: RequestToken<SocketAddr>,
    body: Vec<u8>,
    handler: HandlerFn,
}

/// An RPC node on a real UDP socket. One thread owns the socket and the
/// protocol state; handlers run on a separate worker pool; `call` blocks the
/// calling thread only.
pub struct RpcRuntime {
    cmds: Sender<Command>,
    local: SocketAddr,
    event_loop: Option<JoinHandle<()>>,
    workers: Vec<JoinHandle<()>>,
}

impl RpcRuntime {
    pub fn bind(addr: impl ToSocketAddrs, gmp: GmpConfig, workers: usize) -> io::Result<Self> {
        let port = UdpPort::bind(addr)?;
        let local = port.local_addr()?;
        let endpoint = Endpoint::new(gmp);
        let config = RpcConfig {
            offload_handlers: true,
            ..RpcConfig::default()
        };
        let node = RpcNode::new(endpoint, config);
        let (cmd_tx, cmd_rx) = channel::unbounded();
        let (job_tx, job_rx) = channel::unbounded::<Job>();

        let workers = (0..workers.max(1))
            .map(|i| {
                let jobs = job_rx.clone();
                let done = cmd_tx.clone();
                thread::Builder::new()
                    .name(format!("rpc-worker-{i}"))
                    .spawn(move || {
                        for job in jobs {
                            let result = run_handler(&job.handler, &job.body);
                            if done
                                .send(Command::Complete {
                                    token: job.token,
                                    result,
                                })
                                .is_err()
                            {
                                break;
                            }
                        }
                    })
            })
            .collect::<io::Result<Vec<_>>>()?;

        let event_loop = thread::Builder::new()
            .name("rpc-loop".into())
            .spawn(move || run_loop(port, node, cmd_rx, job_tx))?;

        Ok(Self {
            cmds: cmd_tx,
            local,
            event_loop: Some(event_loop),
            workers,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local
    }

    pub fn register(
        &self,
        method: &str,
        handler: impl Fn(&[u8]) -> Result<Vec<u8>, String> + Send + Sync + 'static,
    ) -> Result<(), RpcError> {
        let (tx, rx) = channel::bounded(1);
        self.cmds
            .send(Command::Register {
                method: method.to_string(),
                handler: std::sync::Arc::new(handler),
                reply: tx,
            })
            .map_err(|_| RpcError::Shutdown)?;
        rx.recv().map_err(|_| RpcError::Shutdown)?
    }

    /// Blocks until the response arrives, the timeout passes, or GMP gives
    /// up on the peer. Safe to call from many threads at once.
    pub fn call(
        &self,
        peer: SocketAddr,
        method: &str,
        body: Vec<u8>,
        timeout: Duration,
    ) -> Result<Vec<u8>, RpcError> {
        let (tx, rx) = channel::bounded(1);
        self.cmds
            .send(Command::Call {
                peer,
                method: method.to_string(),
                body,
                timeout,
                reply: tx,
            })
            .map_err(|_| RpcError::Shutdown)?;
        rx.recv().map_err(|_| RpcError::Shutdown)?
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        let _ = self.cmds.send(Command::Shutdown);
        if let Some(h) = self.event_loop.take() {
            let _ = h.join();
        }
        for h in self.workers.drain(..) {
            let _ = h.join();
        }
    }
}

impl Drop for RpcRuntime {
    fn drop(&mut self) {
        self.stop();
    }
}

type Reply = Sender<Result<Vec<u8>, RpcError>>;

fn run_loop(
    mut port: UdpPort,
    mut node: RpcNode<SocketAddr>,
    cmds: Receiver<Command>,
    jobs: Sender<Job>,
) {
    let mut replies: HashMap<(SocketAddr, u32), Reply> = HashMap::new();
    loop {
        while let Ok(cmd) = cmds.try_recv() {
            let now = port.now();
            match cmd {
                Command::Register {
                    method,
                    handler,
                    reply,
                } => {
                    let _ = reply.send(node.register_arc(&method, handler));
                }
                Command::Call {
                    peer,
                    method,
                    body,
                    timeout,
                    reply,
                } => match node.call(peer, &method, body, timeout, now) {
                    Ok(h) => {
                        replies.insert((h.peer, h.seq), reply);
                    }
                    Err(e) => {
                        let _ = reply.send(Err(e));
                    }
                },
                Command::Complete { token, result } => node.respond(token, result, now),
                Command::Shutdown => return,
            }
        }

        while let Some(t) = node.poll_transmit() {
            let _ = port.send_to(&t.to, &t.bytes);
        }
        while let Some(ev) = node.poll_event() {
            match ev {
                RpcEvent::Completed { call, result } => {
                    if let Some(r) = replies.remove(&(call.peer, call.seq)) {
                        let _ = r.send(result);
                    }
                }
                RpcEvent::Request {
                    token,
                    body,
                    handler: Some(handler),
                } => {
                    let _ = jobs.send(Job {
                        token,
                        body,
                        handler,
                    });
                }
                RpcEvent::Request { token, .. } => {
                    node.respond(token, Err("no handler".into()), port.now())
                }
            }
        }

        let now = port.now();
        let wait = node
            .next_deadline()
            .map_or(POLL, |d| d.saturating_sub(now).min(POLL));
        match port.recv_from(wait) {
            Ok(Some((from, bytes))) => node.handle_datagram(from, &bytes, port.now()),
            Ok(None) => {}
            Err(_) => thread::sleep(POLL),
        }
        let now = port.now();
        if node.next_deadline().is_some_and(|d| d <= now) {
            node.handle_timer(now);
        }
    }
}
