use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::malgen::{generate, EventRecord, GenConfig};
use crate::netsim::ScenarioConfig;

fn rec(id: u64, entity: u64, site: u64, ts: i64, flag: bool) -> EventRecord {
    EventRecord {
        event_id: id,
        timestamp: ts,
        site_id: site,
        compromised: flag,
        entity_id: entity,
    }
}

fn fixture() -> Vec<EventRecord> {
    vec![
        rec(0, 1, 1, 10, false),
        rec(1, 1, 2, 20, true),
        rec(2, 2, 1, 30, false),
        rec(3, 3, 1, 5, false),
        rec(4, 3, 1, 40, true),
    ]
}

/// Straight from the definition: for each site and cumulative window, the
/// entities with a visit before the window end, and those of them with a
/// visit at or before their compromise.
fn brute(records: &[EventRecord], window: Option<(i64, i64)>) -> RatioTable {
    let mut comp: BTreeMap<u64, i64> = BTreeMap::new();
    for r in records.iter().filter(|r| r.compromised) {
        let c = comp.entry(r.entity_id).or_insert(i64::MAX);
        *c = (*c).min(r.timestamp);
    }
    let sites: BTreeSet<u64> = records.iter().map(|r| r.site_id).collect();
    let mut t = RatioTable::new();
    let cell = |site: u64, end: Option<i64>| {
        let mut all = BTreeSet::new();
        let mut hit = BTreeSet::new();
        for r in records.iter().filter(|r| r.site_id == site) {
            if end.is_some_and(|e| r.timestamp >= e) {
                continue;
            }
            all.insert(r.entity_id);
            if comp.get(&r.entity_id).is_some_and(|&c| c >= r.timestamp) {
                hit.insert(r.entity_id);
            }
        }
        (hit.len() as u64, all.len() as u64)
    };
    match window {
        None => {
            for s in sites {
                let (n, d) = cell(s, None);
                t.insert(s, None, n, d);
            }
        }
        Some((origin, width)) => {
            let Some(max) = records.iter().map(|r| r.timestamp).max() else {
                return t;
            };
            let last = (max - origin).div_euclid(width);
            let first = records.iter().map(|r| r.timestamp).min().unwrap();
            for s in sites {
                for k in (first - origin).div_euclid(width)..=last {
                    let (n, d) = cell(s, Some(origin + (k + 1) * width));
                    if d > 0 {
                        t.insert(s, Some(k), n, d);
                    }
                }
            }
        }
    }
    t
}

#[test]
fn fixture_mode_a() {
    let t = malstone_a(&fixture());
    assert_eq!(t.get(1, None), Some((2, 3)));
    assert_eq!(t.get(2, None), Some((1, 1)));
    assert_eq!(t.len(), 2);
}

#[test]
fn fixture_mode_b() {
    let t = malstone_b(&fixture(), 20, 0).unwrap();
    assert_eq!(t.get(1, Some(0)), Some((2, 2)));
    assert_eq!(t.get(1, Some(1)), Some((2, 3)));
    assert_eq!(t.get(2, Some(0)), None);
    assert_eq!(t.get(2, Some(1)), Some((1, 1)));
    assert_eq!(t.get(1, Some(2)), Some((2, 3)));
    assert_eq!(t, brute(&fixture(), Some((0, 20))));
}

#[test]
fn compromise_time_is_earliest_flag() {
    let mut recs = fixture();
    recs.push(rec(5, 3, 2, 90, true));
    let c = compromise_times(&recs);
    assert_eq!(c.get(&3), Some(&40));
    assert_eq!(c.get(&1), Some(&20));
    assert_eq!(c.get(&2), None);
}

#[test]
fn nonpositive_window_rejected() {
    assert!(matches!(
        malstone_b(&fixture(), 0, 0),
        Err(MalstoneError::Config(_))
    ));
}

#[test]
fn csv_roundtrip() {
    let t = malstone_b(&fixture(), 20, 0).unwrap();
    let csv = t.to_csv("mode = b\nwindow = 20");
    assert!(csv.starts_with("# mode = b\n# window = 20\nsite_id,window_index"));
    assert!(csv.contains("\n1,1,2,3,0.666667\n"));
    assert_eq!(RatioTable::from_csv(&csv).unwrap(), t);
    let a = malstone_a(&fixture()).to_csv("");
    assert!(a.contains("\n2,-,1,1,1.000000\n"));
    assert!(RatioTable::from_csv(
        "site_id,window_index,numerator,denominator,ratio\n1,-,3,2,1.5\n"
    )
    .is_err());
}

fn small_records() -> impl Strategy<Value = Vec<EventRecord>> {
    prop::collection::vec(
        (0u64..6, 0u64..5, 0i64..100, prop::bool::weighted(0.2)),
        0..60,
    )
    .prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (e, s, t, f))| rec(i as u64, e, s, t, f))
            .collect()
    })
}

proptest! {
    #[test]
    fn oracle_matches_definition(recs in small_records(), width in 1i64..40, origin in -30i64..30) {
        prop_assert_eq!(malstone_a(&recs), brute(&recs, None));
        prop_assert_eq!(malstone_b(&recs, width, origin).unwrap(), brute(&recs, Some((origin, width))));
    }

    #[test]
    fn order_and_duplicates_do_not_matter(recs in small_records(), seed in any::<u64>()) {
        let mut shuffled = recs.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed.wrapping_mul(i as u64 + 7) % (i as u64 + 1)) as usize);
        }
        let mut doubled = recs.clone();
        doubled.extend(recs.iter().cloned());
        let a = malstone_a(&recs);
        prop_assert_eq!(&malstone_a(&shuffled), &a);
        prop_assert_eq!(&malstone_a(&doubled), &a);
        let b = malstone_b(&recs, 13, 0).unwrap();
        prop_assert_eq!(&malstone_b(&doubled, 13, 0).unwrap(), &b);
    }

    #[test]
    fn windows_grow_and_end_at_mode_a(recs in small_records(), width in 1i64..50) {
        let b = malstone_b(&recs, width, 0).unwrap();
        let a = malstone_a(&recs);
        let mut prev: BTreeMap<u64, (i64, u64, u64)> = BTreeMap::new();
        for ((s, w), (n, d)) in b.iter() {
            let w = w.unwrap();
            if let Some(&(pw, pn, pd)) = prev.get(&s) {
                prop_assert_eq!(w, pw + 1);
                prop_assert!(n >= pn && d >= pd);
            }
            prev.insert(s, (w, n, d));
        }
        for (s, (_, n, d)) in b.final_windows() {
            prop_assert_eq!(a.get(s, None), Some((n, d)));
        }
        prop_assert_eq!(b.final_windows().len(), a.len());
    }
}

fn cluster(
    racks: u32,
    per_rack: u32,
    records: &[EventRecord],
    parts: usize,
    replicas: usize,
) -> Cluster {
    let sc = ScenarioConfig {
        racks,
        nodes_per_rack: per_rack,
        ..ScenarioConfig::oct4()
    };
    let (_, leaves) = sc.topology();
    let partitions = partition_records(records, parts)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, b)| Partition {
            bytes: Arc::new(b),
            replicas: (0..replicas)
                .map(|j| leaves[(i + j * 3) % leaves.len()])
                .collect(),
        })
        .collect();
    Cluster {
        net: sc.build().unwrap(),
        workers: leaves,
        partitions,
        excluded: BTreeSet::new(),
    }
}

fn gen(n: u64) -> Vec<EventRecord> {
    generate(GenConfig {
        num_records: n,
        num_entities: 300,
        num_sites: 200,
        fraction_malicious_sites: 0.1,
        seed: 4,
        ..GenConfig::default()
    })
    .unwrap()
    .collect()
}

#[test]
fn distributed_matches_oracle() {
    let recs = gen(20_000);
    for policy in [SourcePolicy::Naive, SourcePolicy::Balanced] {
        for mode in [Mode::A, Mode::B] {
            let cfg = BenchConfig {
                mode,
                policy,
                ..BenchConfig::default()
            };
            let r = run_distributed(cluster(2, 3, &recs, 9, 2), &cfg).unwrap();
            let want = match mode {
                Mode::A => malstone_a(&recs),
                Mode::B => malstone_b(&recs, cfg.window_width, cfg.window_origin).unwrap(),
            };
            assert_eq!(r.table, want, "{mode:?} {policy:?}");
            assert_eq!(r.table_a, malstone_a(&recs));
            assert_eq!(r.edge_bytes, r.driver_edge_bytes);
            assert_eq!(r.worker_records.iter().map(|w| w.1).sum::<u64>(), 20_000);
            assert!(r.phases.total() > std::time::Duration::ZERO);
        }
    }
}

#[test]
fn single_worker_and_lossy_links() {
    let recs = gen(3_000);
    let mut c = cluster(1, 1, &recs, 3, 1);
    let r = run_distributed(c, &BenchConfig::default()).unwrap();
    assert_eq!(r.table, malstone_a(&recs));
    assert_eq!(r.net.submitted, 0);

    c = cluster(2, 2, &recs, 4, 1);
    for e in c.net.topology().edges().collect::<Vec<_>>() {
        let l = c.net.link(e).clone().with_loss(0.05);
        c.net.set_link(e, l).unwrap();
    }
    let cfg = BenchConfig {
        mode: Mode::B,
        ..BenchConfig::default()
    };
    let r = run_distributed(c, &cfg).unwrap();
    assert!(r.net.dropped > 0);
    assert_eq!(
        r.table,
        malstone_b(&recs, cfg.window_width, cfg.window_origin).unwrap()
    );
}

#[test]
fn excluded_workers_get_nothing() {
    let recs = gen(5_000);
    let mut c = cluster(2, 2, &recs, 6, 2);
    let skip = c.workers[1];
    c.excluded.insert(skip);
    let r = run_distributed(c, &BenchConfig::default()).unwrap();
    assert_eq!(r.table, malstone_a(&recs));
    assert!(r.assignments.iter().all(|a| a.worker != skip));
    assert_eq!(r.worker_records.iter().find(|w| w.0 == skip).unwrap().1, 0);
}

#[test]
fn partition_without_replica_fails() {
    let recs = gen(100);
    let mut c = cluster(1, 2, &recs, 2, 1);
    c.partitions[1].replicas.clear();
    assert!(matches!(
        run_distributed(c, &BenchConfig::default()),
        Err(MalstoneError::PartitionMissing(1))
    ));
}

#[test]
fn balanced_prefers_rack_local_replica() {
    let recs = gen(1_000);
    let sc = ScenarioConfig {
        racks: 2,
        nodes_per_rack: 2,
        ..ScenarioConfig::oct4_constrained()
    };
    let (_, l) = sc.topology();
    let net = sc.build().unwrap();
    let parts = vec![Partition {
        bytes: Arc::new(partition_records(&recs, 1).unwrap().remove(0)),
        replicas: vec![l[2], l[1]],
    }];
    let naive = plan_fetches(&net, &parts, &[l[0]], SourcePolicy::Naive).unwrap();
    let bal = plan_fetches(&net, &parts, &[l[0]], SourcePolicy::Balanced).unwrap();
    assert_eq!(naive[0].source, l[2]);
    assert_eq!(bal[0].source, l[1]);
}

#[test]
fn timing_csv_layout() {
    let recs = gen(2_000);
    let r = run_distributed(cluster(2, 2, &recs, 4, 1), &BenchConfig::default()).unwrap();
    let csv = timing_csv(&r, Some(0.25), "mode = a");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "# mode = a");
    assert_eq!(lines[1], "section,name,value");
    assert!(lines[2].starts_with("phase,fetch,"));
    assert!(csv.contains("\nlink,rack0-core,"));
    assert!(csv.contains("\nworker,r1n1,500\n"));
    assert!(csv.ends_with("summary,penalty,0.250000\n"));
    let total: u64 = csv
        .lines()
        .filter_map(|l| l.strip_prefix("link,"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, r.edge_bytes.values().sum::<u64>());
}

#[test]
fn owner_hash_spreads_entities() {
    let mut counts = [0u32; 8];
    for e in 0..8_000u64 {
        counts[wire::owner_index(e, 8)] += 1;
    }
    assert!(
        counts.iter().all(|&c| (800..1200).contains(&c)),
        "{counts:?}"
    );
    assert_eq!(wire::owner_index(u64::MAX, 1), 0);
}
