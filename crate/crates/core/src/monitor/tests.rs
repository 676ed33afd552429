use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Duration;

use proptest::prelude::*;

use super::*;
use crate::gmp::{Endpoint, GmpConfig};
use crate::netsim::{LinkSpec, SimNet, Simulation};
use crate::rpc::{RpcConfig, RpcHost, RpcNode};
use crate::topology::{EdgeId, NodeId, TopologyTree};

/// R -> DC1 {a, b}, DC2 {c}
fn small() -> (TopologyTree, [NodeId; 5]) {
    let mut t = TopologyTree::new("R");
    let dc1 = t.add_child(t.root(), "DC1").unwrap();
    let dc2 = t.add_child(t.root(), "DC2").unwrap();
    let a = t.add_child(dc1, "a").unwrap();
    let b = t.add_child(dc1, "b").unwrap();
    let c = t.add_child(dc2, "c").unwrap();
    (t, [dc1, dc2, a, b, c])
}

fn sample(node: NodeId, tp: f64) -> MetricsSample {
    MetricsSample {
        net_in_bytes_per_s: tp,
        ..MetricsSample::idle(node, Duration::ZERO)
    }
}

#[test]
fn ingest_bounds_and_validation() {
    let store = MetricsStore::new([NodeId(1)]);
    store
        .ingest(MetricsSample::idle(NodeId(1), Duration::ZERO))
        .unwrap();
    assert_eq!(store.history_len(NodeId(1)), Some(1));
    let mut bad = MetricsSample::idle(NodeId(1), Duration::ZERO);
    bad.cpu_pct = 101.0;
    assert!(matches!(
        store.ingest(bad.clone()),
        Err(MonitorError::Validation(_))
    ));
    bad.cpu_pct = 1.0;
    bad.net_out_bytes_per_s = -1.0;
    assert!(matches!(
        store.ingest(bad.clone()),
        Err(MonitorError::Validation(_))
    ));
    assert_eq!(
        store.ingest(MetricsSample::idle(NodeId(9), Duration::ZERO)),
        Err(MonitorError::UnknownNode(NodeId(9)))
    );
    for i in 0..300u64 {
        let mut s = MetricsSample::idle(NodeId(1), Duration::from_secs(i));
        s.mem_bytes = i;
        store.ingest(s).unwrap();
    }
    assert_eq!(store.history_len(NodeId(1)), Some(256));
    assert_eq!(store.snapshot()[&NodeId(1)][0].mem_bytes, 44);
    assert_eq!(store.latest(NodeId(1)).unwrap().mem_bytes, 299);
}

#[test]
fn concurrent_ingest() {
    let nodes: Vec<NodeId> = (1..=8).map(NodeId).collect();
    let store = Arc::new(MetricsStore::new(nodes.clone()));
    let hs: Vec<_> = nodes
        .iter()
        .map(|&n| {
            let store = store.clone();
            std::thread::spawn(move || {
                for i in 0..100 {
                    store
                        .ingest(MetricsSample::idle(n, Duration::from_millis(i)))
                        .unwrap();
                }
            })
        })
        .collect();
    for h in hs {
        h.join().unwrap();
    }
    assert!(store.snapshot().values().all(|h| h.len() == 100));
}

#[test]
fn aggregation_examples() {
    let (t, [dc1, dc2, a, b, c]) = small();
    let mut tm = TrafficMatrix::new();
    tm.add(a, b, 10);
    let r = aggregate_link_throughput(&t, &tm).unwrap();
    assert_eq!(r.load(EdgeId(a)), 10);
    assert_eq!(r.load(EdgeId(b)), 10);
    assert_eq!(r.edges.values().sum::<u64>(), 20);

    tm.add(a, c, 5);
    let r = aggregate_link_throughput(&t, &tm).unwrap();
    assert_eq!(r.load(EdgeId(a)), 15);
    assert_eq!(r.load(EdgeId(dc1)), 5);
    assert_eq!(r.load(EdgeId(dc2)), 5);
    assert_eq!(r.load(EdgeId(c)), 5);
    assert_eq!(r.node_out[&a], 15);

    let r = aggregate_link_throughput(&t, &TrafficMatrix::new()).unwrap();
    assert_eq!(r.edges.len(), 5);
    assert!(r.edges.values().all(|&v| v == 0));

    let mut tm = TrafficMatrix::new();
    tm.add(a, dc2, 1);
    assert_eq!(
        aggregate_link_throughput(&t, &tm),
        Err(MonitorError::UnknownNode(dc2))
    );
}

#[test]
fn detection_examples() {
    let nodes: Vec<NodeId> = (1..=4).map(NodeId).collect();
    let hist: BTreeMap<_, _> = nodes
        .iter()
        .zip([100.0, 98.0, 102.0, 40.0])
        .map(|(&n, tp)| (n, vec![sample(n, tp)]))
        .collect();
    assert_eq!(
        detect_underperformers(&hist, 1, 0.5).unwrap(),
        BTreeSet::from([NodeId(4)])
    );
    let mut v = [100.0, 98.0, 102.0, 40.0];
    assert_eq!(median(&mut v), 99.0);

    let equal: BTreeMap<_, _> = nodes
        .iter()
        .map(|&n| (n, vec![sample(n, 5.0); 3]))
        .collect();
    assert!(detect_underperformers(&equal, 3, 0.5).unwrap().is_empty());

    let single = BTreeMap::from([(NodeId(1), vec![sample(NodeId(1), 0.0); 3])]);
    assert!(detect_underperformers(&single, 3, 0.5).unwrap().is_empty());

    assert_eq!(
        detect_underperformers(&hist, 3, 0.5),
        Err(MonitorError::InsufficientSamples {
            node: NodeId(1),
            have: 1,
            need: 3
        })
    );
    assert!(detect_underperformers(&hist, 0, 0.5).is_err());
    assert!(detect_underperformers(&hist, 1, 1.0).is_err());
}

#[test]
fn detection_needs_every_round_below() {
    let mut hist: BTreeMap<NodeId, Vec<MetricsSample>> = BTreeMap::new();
    for n in 1..=3 {
        hist.insert(NodeId(n), vec![sample(NodeId(n), 100.0); 3]);
    }
    // slow in the two newest rounds only
    hist.insert(
        NodeId(4),
        vec![
            sample(NodeId(4), 100.0),
            sample(NodeId(4), 10.0),
            sample(NodeId(4), 10.0),
        ],
    );
    assert!(detect_underperformers(&hist, 3, 0.5).unwrap().is_empty());
    assert_eq!(
        detect_underperformers(&hist, 2, 0.5).unwrap(),
        BTreeSet::from([NodeId(4)])
    );
}

#[test]
fn link_rule_flags_collapsed_edge() {
    let mut t = TopologyTree::new("sw");
    let [a, b, c, d] = ["a", "b", "c", "d"].map(|n| t.add_child(t.root(), n).unwrap());
    let mut history = Vec::new();
    for round in 0..3u64 {
        let cd = if round == 0 { 100 } else { 5 };
        let tm: TrafficMatrix = [((a, b), 100), ((b, a), 100), ((c, d), cd), ((d, c), cd)]
            .into_iter()
            .collect();
        history.push(aggregate_link_throughput(&t, &tm).unwrap());
    }
    let flagged = detect_underperforming_links(&history, 2, 0.5).unwrap();
    assert_eq!(flagged, BTreeSet::from([EdgeId(c), EdgeId(d)]));
    assert!(detect_underperforming_links(&history, 3, 0.5)
        .unwrap()
        .is_empty());
    assert!(detect_underperforming_links(&history[..1], 2, 0.5).is_err());
}

#[test]
fn source_selection_examples() {
    let (t, [dc1, dc2, a, b, c]) = small();
    let mut caps = LinkCaps::new();
    for e in t.edges() {
        caps.set(e, 1000);
    }
    let mut tm = TrafficMatrix::new();
    tm.add(c, a, 900);
    let mut report = aggregate_link_throughput(&t, &tm).unwrap();
    // requester b; replica a is in b's rack, c sits behind the busy uplinks
    let pick = |r: &LinkLoadReport, reps: &[NodeId]| {
        select_source(&t, &reps.iter().copied().collect(), b, r, &caps, 50).unwrap()
    };
    assert_eq!(pick(&report, &[a, c]), a);
    assert_eq!(pick(&report, &[c]), c);
    assert_eq!(
        select_source(&t, &BTreeSet::new(), b, &report, &caps, 1),
        Err(MonitorError::NoReplica)
    );

    // equal bottleneck and hops: the smaller name wins
    let mut t2 = TopologyTree::new("sw");
    let z = t2.add_child(t2.root(), "z").unwrap();
    let y = t2.add_child(t2.root(), "y").unwrap();
    let req = t2.add_child(t2.root(), "req").unwrap();
    let r2 = LinkLoadReport::empty(&t2);
    let got = select_source(&t2, &[z, y].into(), req, &r2, &LinkCaps::new(), 10).unwrap();
    assert_eq!(got, y);

    // the local replica wins outright
    report.edges.insert(EdgeId(dc1), 0);
    report.edges.insert(EdgeId(dc2), 0);
    assert_eq!(pick(&report, &[a, b, c]), b);
}

#[test]
fn status_report_rows_and_round_trip() {
    let (t, [_, _, a, b, c]) = small();
    let store = MetricsStore::new([a, b, c]);
    for n in [a, b, c] {
        store
            .ingest(MetricsSample::idle(n, Duration::from_secs(1)))
            .unwrap();
    }
    let latest = |s: &MetricsStore| -> BTreeMap<NodeId, MetricsSample> {
        s.snapshot()
            .into_iter()
            .filter_map(|(n, h)| h.last().cloned().map(|x| (n, x)))
            .collect()
    };
    let report = LinkLoadReport::empty(&t);
    let caps = LinkCaps::new();
    let rows = status_rows(
        &latest(&store),
        &t,
        &report,
        &caps,
        &NodeCapacity::default(),
    );
    assert!(rows.iter().all(|r| r.status == "idle"));

    let mut hot = MetricsSample::idle(b, Duration::from_secs(2));
    hot.cpu_pct = 95.0;
    hot.disk_io_bytes_per_s = 12.5;
    store.ingest(hot).unwrap();
    let rows = status_rows(
        &latest(&store),
        &t,
        &report,
        &caps,
        &NodeCapacity::default(),
    );
    let busy: Vec<_> = rows
        .iter()
        .filter(|r| r.status == "busy")
        .map(|r| r.id.as_str())
        .collect();
    assert_eq!(busy, ["b"]);

    let csv = write_status_csv(&rows, "scenario = small\nseed = 1");
    assert!(csv.starts_with("# scenario = small\n# seed = 1\nkind,id,"));
    assert_eq!(
        csv.lines().filter(|l| !l.starts_with('#')).count(),
        1 + 3 + 5
    );
    assert_eq!(parse_status_csv(&csv).unwrap(), rows);
    let text = write_status_text(&rows, "");
    assert_eq!(text.lines().count(), 9);
}

#[test]
fn ingest_over_rpc() {
    let mut t = TopologyTree::new("sw");
    let worker = t.add_child(t.root(), "worker").unwrap();
    let mon = t.add_child(t.root(), "mon").unwrap();
    let topo = Arc::new(t.clone());
    let store = Arc::new(MetricsStore::new(t.leaves()));
    let mut sim = Simulation::new(SimNet::new(t, LinkSpec::fixed(Duration::from_millis(1)), 1));
    let mk = |s| {
        RpcNode::new(
            Endpoint::with_session(s, GmpConfig::default()).unwrap(),
            RpcConfig::default(),
        )
    };
    let mut server = mk(2);
    server
        .register_arc(INGEST_METHOD, ingest_handler(store.clone(), topo.clone()))
        .unwrap();
    sim.add_node(mon, RpcHost::new(server)).unwrap();
    sim.add_node(worker, RpcHost::new(mk(1))).unwrap();
    let lines: String = (0..3)
        .map(|i| {
            let mut s = MetricsSample::idle(worker, Duration::from_millis(i * 10));
            s.cpu_pct = 12.5;
            s.net_out_bytes_per_s = 1e6;
            format_sample(&topo, &s) + "\n"
        })
        .collect();
    assert_eq!(lines.lines().next().unwrap(), "worker,0,12.5,0,0,0,1000000");
    sim.with_node(worker, |h, now| {
        h.node
            .call(
                mon,
                INGEST_METHOD,
                lines.into_bytes(),
                Duration::from_secs(5),
                now,
            )
            .unwrap();
        h.node
            .call(
                mon,
                INGEST_METHOD,
                b"worker,0,150,0,0,0,0\n".to_vec(),
                Duration::from_secs(5),
                now,
            )
            .unwrap();
    });
    sim.run_until_idle(Duration::from_secs(10));
    let done = &sim.node(worker).unwrap().completed;
    assert_eq!(done[0].2, Ok(b"3".to_vec()));
    assert!(done[1].2.is_err());
    assert_eq!(store.history_len(worker), Some(3));
    assert_eq!(store.latest(worker).unwrap().at, Duration::from_millis(20));
}

/// Random tree: every new vertex hangs off a random existing one, so
/// internal vertices end up with at least one child.
fn random_tree(parents: &[usize]) -> TopologyTree {
    let mut t = TopologyTree::new("v0");
    let mut ids = vec![t.root()];
    for (i, &p) in parents.iter().enumerate() {
        let id = t
            .add_child(ids[p % ids.len()], format!("v{}", i + 1))
            .unwrap();
        ids.push(id);
    }
    t
}

fn in_subtree(t: &TopologyTree, mut n: NodeId, top: NodeId) -> bool {
    loop {
        if n == top {
            return true;
        }
        match t.parent(n) {
            Some(p) => n = p,
            None => return false,
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn aggregation_matches_subtree_oracle(
        parents in proptest::collection::vec(0usize..64, 1..24),
        rates in proptest::collection::vec((0usize..64, 0usize..64, 0u64..1_000_000), 0..40),
    ) {
        let t = random_tree(&parents);
        let leaves = t.leaves();
        prop_assume!(leaves.len() >= 2 && leaves.len() <= 16);
        let mut tm = TrafficMatrix::new();
        for &(s, d, r) in &rates {
            tm.add(leaves[s % leaves.len()], leaves[d % leaves.len()], r);
        }
        let got = aggregate_link_throughput(&t, &tm).unwrap();
        // an edge lies on the s-d path iff it separates them
        for e in t.edges() {
            let want: u64 = tm
                .iter()
                .filter(|&((s, d), _)| in_subtree(&t, s, e.child()) != in_subtree(&t, d, e.child()))
                .map(|(_, r)| r)
                .sum();
            prop_assert_eq!(got.load(e), want);
        }
    }

    #[test]
    fn lowering_flagged_node_keeps_it_flagged(
        others in proptest::collection::vec(proptest::collection::vec(1.0f64..1000.0, 3), 1..8),
        victim in proptest::collection::vec(0.0f64..1000.0, 3),
        cut in 0.0f64..1.0,
    ) {
        let mut hist: BTreeMap<NodeId, Vec<MetricsSample>> = BTreeMap::new();
        for (i, o) in others.iter().enumerate() {
            let n = NodeId(i as u32 + 1);
            hist.insert(n, o.iter().map(|&x| sample(n, x)).collect());
        }
        let v = NodeId(100);
        hist.insert(v, victim.iter().map(|&x| sample(v, x)).collect());
        let before = detect_underperformers(&hist, 3, 0.5).unwrap();
        hist.insert(v, victim.iter().map(|&x| sample(v, x * cut)).collect());
        let after = detect_underperformers(&hist, 3, 0.5).unwrap();
        if before.contains(&v) {
            prop_assert!(after.contains(&v));
        }
    }

    #[test]
    fn selection_is_scale_free(
        loads in proptest::collection::vec(0u64..1000, 7),
        caps in proptest::collection::vec(0u64..1000, 7),
        demand in 0u64..500,
        k in 1u64..1000,
        reps in proptest::collection::btree_set(0usize..4, 1..4),
        req in 0usize..4,
    ) {
        let (t, [_, _, a, b, c]) = small();
        let mut t = t;
        let dc2 = t.find("DC2").unwrap();
        let d = t.add_child(dc2, "d").unwrap();
        let leaves = [a, b, c, d];
        let edges: Vec<EdgeId> = t.edges().collect();
        let build = |m: u64| {
            let mut r = LinkLoadReport::empty(&t);
            let mut lc = LinkCaps::new();
            for (i, &e) in edges.iter().enumerate() {
                r.edges.insert(e, loads[i] * m);
                lc.set(e, caps[i] * m);
            }
            (r, lc)
        };
        let reps: BTreeSet<NodeId> = reps.into_iter().map(|i| leaves[i]).collect();
        let (r1, c1) = build(1);
        let (rk, ck) = build(k);
        let one = select_source(&t, &reps, leaves[req], &r1, &c1, demand).unwrap();
        let scaled = select_source(&t, &reps, leaves[req], &rk, &ck, demand * k).unwrap();
        prop_assert_eq!(one, scaled);
    }
}
