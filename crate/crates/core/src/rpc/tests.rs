use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use super::*;
use crate::gmp::{Endpoint, GmpConfig, ProtocolEvent, Transmit};
use crate::netsim::{LinkSpec, SimNet, Simulation};
use crate::topology::{EdgeId, NodeId, TopologyTree};

const MS: Duration = Duration::from_millis(1);

fn rpc(session: u32) -> RpcNode<NodeId> {
    RpcNode::new(
        Endpoint::with_session(session, GmpConfig::default()).unwrap(),
        RpcConfig::default(),
    )
}

fn sim(link: LinkSpec, seed: u64) -> (Simulation<RpcHost>, NodeId, NodeId) {
    let mut t = TopologyTree::new("sw");
    let a = t.add_child(t.root(), "client").unwrap();
    let b = t.add_child(t.root(), "server").unwrap();
    (Simulation::new(SimNet::new(t, link, seed)), a, b)
}

fn echo_server(session: u32, counter: Arc<AtomicU64>) -> RpcHost {
    let mut n = rpc(session);
    n.register("echo", move |b| {
        counter.fetch_add(1, Ordering::SeqCst);
        Ok(b.to_vec())
    })
    .unwrap();
    RpcHost::new(n)
}

#[test]
fn echo_lossless() {
    let (mut s, a, b) = sim(LinkSpec::fixed(5 * MS), 1);
    let count = Arc::new(AtomicU64::new(0));
    s.add_node(a, RpcHost::new(rpc(1))).unwrap();
    s.add_node(b, echo_server(2, count.clone())).unwrap();
    let h = s
        .with_node(a, |c, now| {
            c.node
                .call(b, "echo", b"abc".to_vec(), Duration::from_secs(5), now)
        })
        .unwrap()
        .unwrap();
    s.run_until_idle(Duration::from_secs(60));
    let done = &s.node(a).unwrap().completed;
    assert_eq!(done.len(), 1);
    assert_eq!(done[0].1, h);
    assert_eq!(done[0].2, Ok(b"abc".to_vec()));
    assert_eq!(done[0].0, 20 * MS);
    assert_eq!(count.load(Ordering::SeqCst), 1);
}

#[test]
fn duplicate_registration_rejected() {
    let mut n = rpc(1);
    n.register("echo", |b| Ok(b.to_vec())).unwrap();
    assert_eq!(
        n.register("echo", |b| Ok(b.to_vec())),
        Err(RpcError::DuplicateMethod("echo".into()))
    );
    assert_eq!(
        n.register_deferred(""),
        Err(RpcError::InvalidMethod("".into()))
    );
}

fn pump(from: &mut RpcNode<NodeId>) -> Vec<Transmit<NodeId>> {
    std::iter::from_fn(|| from.poll_transmit()).collect()
}

fn data_only(ts: Vec<Transmit<NodeId>>) -> Vec<Vec<u8>> {
    // kind byte 0 is DATA
    ts.into_iter()
        .filter(|t| t.bytes[1] == 0)
        .map(|t| t.bytes)
        .collect()
}

#[test]
fn unknown_method_gets_error_response() {
    let (a, b) = (NodeId(1), NodeId(2));
    let mut client = Endpoint::<NodeId>::with_session(5, GmpConfig::default()).unwrap();
    let mut server = rpc(6);
    let req = RpcEnvelope::request("nope", b"x".to_vec())
        .encode()
        .unwrap();
    client.send(b, req, Duration::ZERO).unwrap();
    let t = client.poll_transmit().unwrap();
    server.handle_datagram(a, &t.bytes, Duration::ZERO);
    let resp = data_only(pump(&mut server));
    assert_eq!(resp.len(), 1);
    let evs = client.handle_datagram(b, &resp[0], Duration::ZERO);
    let ProtocolEvent::Deliver { payload, .. } = &evs[0] else {
        panic!("{evs:?}")
    };
    let env = RpcEnvelope::decode(payload).unwrap();
    assert_eq!(env.flags & FLAG_ERROR, FLAG_ERROR);
    assert_eq!(env.body, b"unknown method: nope");
    assert_eq!((env.corr_session, env.corr_seq), (5, 1));
}

#[test]
fn malformed_envelope_gets_error_response() {
    let (a, b) = (NodeId(1), NodeId(2));
    let mut client = Endpoint::<NodeId>::with_session(5, GmpConfig::default()).unwrap();
    let mut server = rpc(6);
    // method_len 200 but nothing follows
    let bad = vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 200];
    client.send(b, bad, Duration::ZERO).unwrap();
    let t = client.poll_transmit().unwrap();
    server.handle_datagram(a, &t.bytes, Duration::ZERO);
    let resp = data_only(pump(&mut server));
    let evs = client.handle_datagram(b, &resp[0], Duration::ZERO);
    let ProtocolEvent::Deliver { payload, .. } = &evs[0] else {
        panic!("{evs:?}")
    };
    let env = RpcEnvelope::decode(payload).unwrap();
    assert!(env.is_error());
    assert_eq!(env.body, b"malformed envelope");
}

#[test]
fn redelivery_after_transport_reset_served_from_cache() {
    let (a, b) = (NodeId(1), NodeId(2));
    let count = Arc::new(AtomicU64::new(0));
    let mut client = rpc(1);
    let mut server = echo_server(2, count.clone()).node;
    client
        .call(
            b,
            "echo",
            b"hi".to_vec(),
            Duration::from_secs(5),
            Duration::ZERO,
        )
        .unwrap();
    let req = pump(&mut client).remove(0).bytes;
    server.handle_datagram(a, &req, Duration::ZERO);
    let first = data_only(pump(&mut server));
    assert_eq!(count.load(Ordering::SeqCst), 1);

    // the server's GMP layer restarts and forgets what it delivered
    server.replace_endpoint(Endpoint::with_session(3, GmpConfig::default()).unwrap());
    server.handle_datagram(a, &req, 150 * MS);
    let second = data_only(pump(&mut server));
    assert_eq!(count.load(Ordering::SeqCst), 1);
    assert_eq!(server.stats().cache_hits, 1);
    assert_eq!(server.stats().executions, 1);
    let payload = |b: &[u8]| b[12..].to_vec();
    assert_eq!(payload(&first[0]), payload(&second[0]));

    for r in first.iter().chain(&second) {
        client.handle_datagram(b, r, 200 * MS);
    }
    let evs: Vec<_> = std::iter::from_fn(|| client.poll_event()).collect();
    assert_eq!(evs.len(), 1);
    assert!(matches!(&evs[0], RpcEvent::Completed { result: Ok(v), .. } if v == b"hi"));
}

#[test]
fn unanswered_call_times_out_at_deadline() {
    let (mut s, a, b) = sim(LinkSpec::fixed(5 * MS), 1);
    s.add_node(a, RpcHost::new(rpc(1))).unwrap();
    s.with_node(a, |c, now| {
        c.node
            .call(b, "echo", vec![], Duration::from_secs(1), now)
            .unwrap()
    });
    s.run_until(Duration::from_secs(3));
    let done = &s.node(a).unwrap().completed;
    assert_eq!(done.len(), 1);
    assert_eq!(done[0].0, Duration::from_secs(1));
    assert_eq!(done[0].2, Err(RpcError::Timeout));
}

#[test]
fn unreachable_peer_reported() {
    let (mut s, a, b) = sim(LinkSpec::fixed(5 * MS), 1);
    s.add_node(a, RpcHost::new(rpc(1))).unwrap();
    s.with_node(a, |c, now| {
        c.node
            .call(b, "echo", vec![], Duration::from_secs(100), now)
            .unwrap()
    });
    s.run_until_idle(Duration::from_secs(200));
    let done = &s.node(a).unwrap().completed;
    assert_eq!(done[0].2, Err(RpcError::PeerUnreachable));
    assert_eq!(done[0].0, Duration::from_millis(25_500));
}

#[test]
fn panicking_handler_returns_error_and_server_survives() {
    let (mut s, a, b) = sim(LinkSpec::fixed(MS), 1);
    s.add_node(a, RpcHost::new(rpc(1))).unwrap();
    let mut server = rpc(2);
    server
        .register("boom", |_| -> Result<Vec<u8>, String> { panic!("kaboom") })
        .unwrap();
    server
        .register("fail", |_| Err("bad input".into()))
        .unwrap();
    server.register("ok", |_| Ok(b"fine".to_vec())).unwrap();
    s.add_node(b, RpcHost::new(server)).unwrap();
    for m in ["boom", "fail", "ok"] {
        s.with_node(a, |c, now| {
            c.node
                .call(b, m, vec![], Duration::from_secs(5), now)
                .unwrap()
        });
    }
    let prev = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    s.run_until_idle(Duration::from_secs(10));
    std::panic::set_hook(prev);
    let mut got: Vec<_> = s
        .node(a)
        .unwrap()
        .completed
        .iter()
        .map(|c| (c.1.seq, c.2.clone()))
        .collect();
    got.sort_by_key(|g| g.0);
    assert_eq!(
        got,
        vec![
            (1, Err(RpcError::Remote("handler panicked: kaboom".into()))),
            (2, Err(RpcError::Remote("bad input".into()))),
            (3, Ok(b"fine".to_vec())),
        ]
    );
}

#[test]
fn deferred_handler_answers_later() {
    let (mut s, a, b) = sim(LinkSpec::fixed(MS), 1);
    s.add_node(a, RpcHost::new(rpc(1))).unwrap();
    let mut server = rpc(2);
    server.register_deferred("slow").unwrap();
    s.add_node(b, RpcHost::new(server)).unwrap();
    s.with_node(a, |c, now| {
        c.node
            .call(b, "slow", b"q".to_vec(), Duration::from_secs(5), now)
            .unwrap()
    });
    s.run_until(Duration::from_millis(100));
    let (token, body) = s
        .with_node(b, |h, _| h.requests.pop_front().unwrap())
        .unwrap();
    assert_eq!(body, b"q");
    assert_eq!(token.method, "slow");
    s.run_until(Duration::from_millis(400));
    s.with_node(b, |h, now| {
        h.node.respond(token, Ok(b"later".to_vec()), now)
    });
    s.run_until_idle(Duration::from_secs(10));
    let done = &s.node(a).unwrap().completed;
    assert_eq!(done[0].2, Ok(b"later".to_vec()));
    assert_eq!(done[0].0, Duration::from_millis(402));
}

#[test]
fn response_with_foreign_correlation_ignored() {
    let (a, b) = (NodeId(1), NodeId(2));
    let mut client = rpc(1);
    client
        .call(b, "echo", vec![], Duration::from_secs(5), Duration::ZERO)
        .unwrap();
    let mut fake = Endpoint::<NodeId>::with_session(9, GmpConfig::default()).unwrap();
    for (session, seq) in [(77, 1), (1, 2)] {
        let env = RpcEnvelope::response(session, seq, "echo", b"forged".to_vec());
        fake.send(a, env.encode().unwrap(), Duration::ZERO).unwrap();
        let t = fake.poll_transmit().unwrap();
        client.handle_datagram(b, &t.bytes, Duration::ZERO);
    }
    assert!(client.poll_event().is_none());
    assert_eq!(client.stats().stale_responses, 2);
    assert_eq!(client.pending_calls(), 1);
}

#[test]
fn lossy_calls_execute_once_each() {
    let (mut s, a, b) = sim(LinkSpec::fixed(10 * MS).with_loss(0.1), 42);
    s.net_mut()
        .set_link(EdgeId(b), LinkSpec::fixed(10 * MS).with_loss(0.1))
        .unwrap();
    let count = Arc::new(AtomicU64::new(0));
    s.add_node(a, RpcHost::new(rpc(1))).unwrap();
    s.add_node(b, echo_server(2, count.clone())).unwrap();
    for i in 0..200u32 {
        s.with_node(a, |c, now| {
            c.node
                .call(
                    b,
                    "echo",
                    i.to_be_bytes().to_vec(),
                    Duration::from_secs(5),
                    now,
                )
                .unwrap()
        });
    }
    s.run_until_idle(Duration::from_secs(120));
    let done = &s.node(a).unwrap().completed;
    assert_eq!(done.len(), 200);
    for (_, h, r) in done {
        assert_eq!(r.as_ref().unwrap(), &(h.seq - 1).to_be_bytes().to_vec());
    }
    assert_eq!(count.load(Ordering::SeqCst), 200);
    assert!(s.net().stats().dropped > 0);
}

#[test]
fn udp_runtime_round_trip() {
    let server = RpcRuntime::bind("127.0.0.1:0", GmpConfig::default(), 4).unwrap();
    let count = Arc::new(AtomicU64::new(0));
    let c2 = count.clone();
    server
        .register("echo", move |b| {
            c2.fetch_add(1, Ordering::SeqCst);
            Ok(b.to_vec())
        })
        .unwrap();
    assert_eq!(
        server.register("echo", |b| Ok(b.to_vec())),
        Err(RpcError::DuplicateMethod("echo".into()))
    );
    let client = Arc::new(RpcRuntime::bind("127.0.0.1:0", GmpConfig::default(), 1).unwrap());
    let addr = server.local_addr();
    let threads: Vec<_> = (0..4u8)
        .map(|t| {
            let client = client.clone();
            std::thread::spawn(move || {
                for i in 0..10u8 {
                    let body = vec![t, i];
                    let r = client.call(addr, "echo", body.clone(), Duration::from_secs(5));
                    assert_eq!(r, Ok(body));
                }
            })
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }
    assert_eq!(count.load(Ordering::SeqCst), 40);
    let big = vec![7u8; 20_000];
    assert_eq!(
        client.call(addr, "echo", big.clone(), Duration::from_secs(5)),
        Ok(big)
    );
    assert_eq!(
        client.call(addr, "nope", vec![], Duration::from_secs(5)),
        Err(RpcError::Remote("unknown method: nope".into()))
    );
}

#[test]
fn udp_runtime_times_out_on_silent_peer() {
    let silent = std::net::UdpSocket::bind("127.0.0.1:0").unwrap();
    let client = RpcRuntime::bind("127.0.0.1:0", GmpConfig::default(), 1).unwrap();
    let t0 = std::time::Instant::now();
    let r = client.call(
        silent.local_addr().unwrap(),
        "echo",
        vec![],
        Duration::from_millis(300),
    );
    assert_eq!(r, Err(RpcError::Timeout));
    assert!(t0.elapsed() >= Duration::from_millis(300));
    client.shutdown();
}
