use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Duration;

use octkit::monitor::{
    self, aggregate_link_throughput, LinkCaps, MetricsSample, MetricsStore, NodeCapacity,
    TrafficMatrix,
};
use octkit::netsim::ScenarioConfig;
use octkit::{NodeId, TopologyTree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{emit, runtime, scenario, Cli, CliError, Effective, Format};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Sample lines `node,at_us,cpu_pct,mem_bytes,disk,net_in,net_out`.
    /// Synthesized from the seed when omitted.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Flows `src,dst,bytes_per_s`. Derived from the samples when omitted.
    #[arg(long)]
    pub traffic: Option<PathBuf>,
    /// Sampling rounds to synthesize.
    #[arg(long, default_value_t = 5)]
    pub rounds: u32,
    /// Rounds a node must stay slow to be flagged.
    #[arg(long, default_value_t = monitor::DEFAULT_WINDOW)]
    pub window: usize,
    /// Fraction of the median below which a round counts as slow.
    #[arg(long, default_value_t = monitor::DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

/// Random busy-ish cluster with one node that barely moves data.
fn synth_samples(leaves: &[NodeId], rounds: u32, seed: u64) -> Vec<MetricsSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slow = leaves[rng.random_range(0..leaves.len())];
    let mut out = Vec::new();
    for r in 0..rounds {
        for &n in leaves {
            let (lo, hi): (f64, f64) = if n == slow { (1e6, 5e6) } else { (20e6, 110e6) };
            out.push(MetricsSample {
                node: n,
                at: Duration::from_secs(10 * u64::from(r)),
                cpu_pct: rng.random_range(5.0..95.0f64).round(),
                mem_bytes: rng.random_range(1_000_000_000..11_000_000_000u64),
                disk_io_bytes_per_s: rng.random_range(0.0..90e6f64).round(),
                net_in_bytes_per_s: rng.random_range(lo..hi).round(),
                net_out_bytes_per_s: rng.random_range(lo..hi).round(),
            });
        }
    }
    out
}

/// Each node sends its latest outbound rate to the same-index node of the
/// next rack.
fn synth_traffic(
    topo: &TopologyTree,
    sc: &ScenarioConfig,
    latest: &BTreeMap<NodeId, MetricsSample>,
) -> TrafficMatrix {
    let (_, leaves) = sc.topology();
    let per = sc.nodes_per_rack as usize;
    let mut tm = TrafficMatrix::new();
    for (i, &n) in leaves.iter().enumerate() {
        let dst = leaves[(i + per) % leaves.len()];
        if dst != n && topo.is_leaf(dst) {
            if let Some(s) = latest.get(&n) {
                tm.add(n, dst, s.net_out_bytes_per_s as u64);
            }
        }
    }
    tm
}

fn parse_traffic(topo: &TopologyTree, text: &str) -> Result<TrafficMatrix, String> {
    let mut tm = TrafficMatrix::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let [src, dst, rate] = f[..] else {
            return Err(format!("line {}: expected src,dst,bytes_per_s", i + 1));
        };
        let node = |name: &str| {
            topo.find(name)
                .filter(|&n| topo.is_leaf(n))
                .ok_or_else(|| format!("line {}: unknown node {name:?}", i + 1))
        };
        let rate: u64 = rate
            .parse()
            .map_err(|_| format!("line {}: bad rate {rate:?}", i + 1))?;
        tm.add(node(src)?, node(dst)?, rate);
    }
    Ok(tm)
}

pub fn run(cli: &Cli, a: &Args) -> Result<(), CliError> {
    let sc = scenario(cli, ScenarioConfig::oct4())?;
    let (topo, leaves) = sc.topology();
    let mut eff = Effective::new(cli, "monitor-report");
    eff.scenario(&sc);
    eff.set("window", a.window);
    eff.set("threshold", a.threshold);

    let samples = match &a.samples {
        Some(p) => {
            eff.set("samples", p.display());
            let text =
                std::fs::read_to_string(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
            monitor::parse_samples(&topo, &text)
                .map_err(|e| runtime(format!("{}: {e}", p.display())))?
        }
        None => {
            if a.rounds == 0 {
                return Err(CliError::Usage("--rounds must be at least 1".into()));
            }
            eff.set("samples", "synthetic");
            eff.set("rounds", a.rounds);
            synth_samples(&leaves, a.rounds, cli.seed)
        }
    };
    // Only nodes that report are judged; silent ones show up as unknown.
    let store = MetricsStore::new(samples.iter().map(|s| s.node).collect::<BTreeSet<_>>());
    for s in samples {
        store.ingest(s).map_err(runtime)?;
    }
    let latest: BTreeMap<NodeId, MetricsSample> = leaves
        .iter()
        .filter_map(|&n| store.latest(n).map(|s| (n, s)))
        .collect();

    let tm = match &a.traffic {
        Some(p) => {
            eff.set("traffic", p.display());
            let text =
                std::fs::read_to_string(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
            parse_traffic(&topo, &text).map_err(|e| runtime(format!("{}: {e}", p.display())))?
        }
        None => {
            eff.set("traffic", "derived");
            synth_traffic(&topo, &sc, &latest)
        }
    };
    let report = aggregate_link_throughput(&topo, &tm).map_err(runtime)?;
    let net = sc.build().map_err(runtime)?;
    let mut caps = LinkCaps::new();
    for e in topo.edges() {
        caps.set(e, net.link(e).bandwidth);
    }

    let history = store.snapshot();
    let flagged = match monitor::detect_underperformers(&history, a.window, a.threshold) {
        Ok(f) => f
            .iter()
            .map(|&n| topo.name(n).to_string())
            .collect::<Vec<_>>()
            .join(" "),
        Err(monitor::MonitorError::InvalidParameter(m)) => return Err(CliError::Usage(m)),
        Err(e) => format!("n/a ({e})"),
    };
    eff.set(
        "underperformers",
        if flagged.is_empty() {
            "none".into()
        } else {
            flagged.clone()
        },
    );
    eprintln!(
        "underperforming nodes: {}",
        if flagged.is_empty() { "none" } else { &flagged }
    );

    let rows = monitor::status_rows(&latest, &topo, &report, &caps, &NodeCapacity::default());
    let text = match cli.format {
        Format::Csv => monitor::write_status_csv(&rows, &eff.render()),
        Format::Text => monitor::write_status_text(&rows, &eff.render()),
    };
    emit(cli.out.as_deref(), &text)
}
