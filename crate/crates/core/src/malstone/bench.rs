use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::executor::{
    partition_records, run_distributed, BenchConfig, Cluster, Partition, PhaseTimes, SourcePolicy,
};
use super::oracle;
use super::report::{penalty, secs};
use super::table::RatioTable;
use super::{MalstoneError, Mode};
use crate::malgen::{generate, EventRecord, GenConfig};
use crate::netsim::ScenarioConfig;

/// Same data, same worker count: one rack versus `racks` racks.
#[derive(Debug, Clone)]
pub struct SimbenchConfig {
    pub gen: GenConfig,
    /// Link parameters; `racks` and `nodes_per_rack` are overridden.
    pub scenario: ScenarioConfig,
    pub racks: u32,
    pub workers_per_rack: u32,
    pub replicas: usize,
    /// 0 means one per worker.
    pub partitions: usize,
    pub run: BenchConfig,
}

impl Default for SimbenchConfig {
    fn default() -> Self {
        Self {
            gen: GenConfig {
                num_records: 100_000,
                ..GenConfig::default()
            },
            scenario: ScenarioConfig::oct4_constrained(),
            racks: 4,
            workers_per_rack: 7,
            replicas: 3,
            partitions: 0,
            run: BenchConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimbenchRow {
    pub layout: &'static str,
    pub racks: u32,
    pub workers: u32,
    pub policy: SourcePolicy,
    pub phases: PhaseTimes,
    pub uplink_bytes: u64,
    pub transcript_hash: String,
    pub penalty: f64,
}

#[derive(Debug, Clone)]
pub struct SimbenchReport {
    pub rows: Vec<SimbenchRow>,
    /// Checked against the oracle for every row.
    pub table: RatioTable,
}

impl SimbenchReport {
    pub fn row(&self, layout: &str) -> Option<&SimbenchRow> {
        self.rows.iter().find(|r| r.layout == layout)
    }

    pub fn to_csv(&self, comments: &str) -> String {
        let mut out = String::new();
        for c in comments.lines() {
            let _ = writeln!(out, "# {c}");
        }
        out.push_str("layout,racks,workers,policy,fetch_s,flags_s,visits_s,counts_s,total_s,uplink_bytes,penalty,penalty_pct\n");
        for r in &self.rows {
            let p = &r.phases;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{:.6},{:.2}",
                r.layout,
                r.racks,
                r.workers,
                r.policy.name(),
                secs(p.fetch),
                secs(p.flags),
                secs(p.visits),
                secs(p.counts),
                secs(p.total()),
                r.uplink_bytes,
                r.penalty,
                100.0 * r.penalty
            );
        }
        out
    }

    pub fn to_text(&self, comments: &str) -> String {
        let mut out = String::new();
        for c in comments.lines() {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(
            out,
            "{:<22} {:>5} {:>7} {:>9} {:>11} {:>14} {:>9}",
            "layout", "racks", "workers", "policy", "total_s", "uplink_bytes", "penalty"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<22} {:>5} {:>7} {:>9} {:>11} {:>14} {:>9.4}",
                r.layout,
                r.racks,
                r.workers,
                r.policy.name(),
                secs(r.phases.total()),
                r.uplink_bytes,
                r.penalty
            );
        }
        out
    }
}

/// Replica slots by worker index, drawn once so both layouts store the same
/// partitions on the same-numbered workers.
fn place_replicas(n_parts: usize, n_nodes: usize, replicas: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    (0..n_parts)
        .map(|_| sample(&mut rng, n_nodes, replicas).into_vec())
        .collect()
}

pub fn simbench(cfg: &SimbenchConfig) -> Result<SimbenchReport, MalstoneError> {
    let n = (cfg.racks * cfg.workers_per_rack) as usize;
    if n == 0 || cfg.replicas == 0 || cfg.replicas > n {
        return Err(MalstoneError::Config(format!(
            "need 1 <= replicas ({}) <= workers ({n})",
            cfg.replicas
        )));
    }
    let records: Vec<EventRecord> = generate(cfg.gen.clone())?.collect();
    let expected = match cfg.run.mode {
        Mode::A => oracle::malstone_a(&records),
        Mode::B => oracle::malstone_b(&records, cfg.run.window_width, cfg.run.window_origin)?,
    };
    let n_parts = if cfg.partitions == 0 {
        n
    } else {
        cfg.partitions
    };
    let blocks: Vec<Arc<Vec<u8>>> = partition_records(&records, n_parts)?
        .into_iter()
        .map(Arc::new)
        .collect();
    drop(records);
    let slots = place_replicas(n_parts, n, cfg.replicas, cfg.gen.seed);

    let layouts = [
        ("local", 1, n as u32, SourcePolicy::Balanced),
        (
            "distributed-naive",
            cfg.racks,
            cfg.workers_per_rack,
            SourcePolicy::Naive,
        ),
        (
            "distributed-balanced",
            cfg.racks,
            cfg.workers_per_rack,
            SourcePolicy::Balanced,
        ),
    ];
    let mut rows: Vec<SimbenchRow> = Vec::new();
    for (layout, racks, per_rack, policy) in layouts {
        let sc = ScenarioConfig {
            racks,
            nodes_per_rack: per_rack,
            ..cfg.scenario.clone()
        };
        let net = sc
            .build()
            .map_err(|e| MalstoneError::Config(e.to_string()))?;
        let (_, leaves) = sc.topology();
        let partitions = blocks
            .iter()
            .zip(&slots)
            .map(|(b, s)| Partition {
                bytes: b.clone(),
                replicas: s.iter().map(|&i| leaves[i]).collect(),
            })
            .collect();
        let cluster = Cluster {
            net,
            workers: leaves,
            partitions,
            excluded: Default::default(),
        };
        let run = BenchConfig {
            policy,
            ..cfg.run.clone()
        };
        let rep = run_distributed(cluster, &run)?;
        if rep.table != expected {
            return Err(MalstoneError::Mismatch(format!(
                "{layout} run disagrees with the oracle"
            )));
        }
        let base = rows
            .first()
            .map_or(rep.phases.total(), |r| r.phases.total());
        rows.push(SimbenchRow {
            layout,
            racks,
            workers: n as u32,
            policy,
            phases: rep.phases,
            uplink_bytes: rep.uplink_bytes(),
            transcript_hash: rep.transcript_hash.clone(),
            penalty: penalty(rep.phases.total(), base),
        });
    }
    Ok(SimbenchReport {
        rows,
        table: expected,
    })
}
