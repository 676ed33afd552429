use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use clap::ValueEnum;
use octkit::malgen::{self, EventRecord, DEFAULT_PERIOD_START};
use octkit::malstone::{self, BenchConfig, Cluster, Mode, Partition, RatioTable, SourcePolicy};
use octkit::netsim::ScenarioConfig;
use octkit::NodeId;

use crate::{emit, runtime, scenario, Cli, CliError, Effective, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Naive,
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportArg {
    /// The ratio table.
    Table,
    /// Phase times, bytes per link and records per worker.
    Timing,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, value_enum, default_value_t = ModeArg::A)]
    pub mode: ModeArg,
    /// Window width in seconds (mode b).
    #[arg(long, default_value_t = 604_800)]
    pub window: i64,
    /// Start of window 0, Unix seconds.
    #[arg(long, default_value_t = DEFAULT_PERIOD_START, allow_hyphen_values = true)]
    pub origin: i64,
    /// Record files; repeat for several.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Run the distributed executor and compare it with the oracle.
    #[arg(long)]
    pub verify: bool,
    /// Run the distributed executor on the simulated cluster.
    #[arg(long)]
    pub distributed: bool,
    #[arg(long, default_value_t = 8)]
    pub workers: usize,
    #[arg(long, default_value_t = 2)]
    pub replicas: usize,
    #[arg(long, value_enum, default_value_t = PolicyArg::Balanced)]
    pub policy: PolicyArg,
    #[arg(long, value_enum, default_value_t = ReportArg::Table)]
    pub report: ReportArg,
}

/// Workers spread over racks first: r0n0, r1n0, ..., r0n1, ...
fn pick_workers(sc: &ScenarioConfig, n: usize) -> Result<Vec<NodeId>, CliError> {
    let (_, leaves) = sc.topology();
    let per = sc.nodes_per_rack as usize;
    let racks = sc.racks as usize;
    if n == 0 || n > leaves.len() {
        return Err(CliError::Usage(format!(
            "--workers must be between 1 and {} for this scenario",
            leaves.len()
        )));
    }
    Ok((0..n)
        .map(|i| leaves[(i % racks) * per + i / racks])
        .collect())
}

pub fn run(cli: &Cli, a: &Args) -> Result<(), CliError> {
    if a.mode == ModeArg::B && a.window <= 0 {
        return Err(CliError::Usage("--window must be positive".into()));
    }
    let mut records: Vec<EventRecord> = Vec::new();
    for p in &a.input {
        records.extend(malgen::read_records(p).map_err(runtime)?);
    }
    let mode = match a.mode {
        ModeArg::A => Mode::A,
        ModeArg::B => Mode::B,
    };
    let oracle = match mode {
        Mode::A => malstone::malstone_a(&records),
        Mode::B => malstone::malstone_b(&records, a.window, a.origin).map_err(runtime)?,
    };

    let mut eff = Effective::new(cli, "malstone");
    eff.set("mode", format!("{:?}", mode).to_lowercase());
    if mode == Mode::B {
        eff.set("window", a.window);
        eff.set("origin", a.origin);
    }
    for p in &a.input {
        eff.set("input", p.display());
    }
    eff.set("records", records.len());

    let distributed = a.distributed || a.verify || a.report == ReportArg::Timing;
    let (table, timing): (RatioTable, Option<String>) = if distributed {
        let sc = scenario(cli, ScenarioConfig::oct4())?;
        let workers = pick_workers(&sc, a.workers)?;
        if a.replicas == 0 || a.replicas > workers.len() {
            return Err(CliError::Usage(format!(
                "--replicas must be between 1 and {}",
                workers.len()
            )));
        }
        eff.set("workers", a.workers);
        eff.set("replicas", a.replicas);
        eff.set("policy", format!("{:?}", a.policy).to_lowercase());
        eff.set("verify", a.verify);
        eff.scenario(&sc);
        let partitions = malstone::partition_records(&records, workers.len())
            .map_err(runtime)?
            .into_iter()
            .enumerate()
            .map(|(i, b)| Partition {
                bytes: Arc::new(b),
                replicas: (0..a.replicas)
                    .map(|j| workers[(i + j) % workers.len()])
                    .collect(),
            })
            .collect();
        let cluster = Cluster {
            net: sc.build().map_err(runtime)?,
            workers,
            partitions,
            excluded: BTreeSet::new(),
        };
        let cfg = BenchConfig {
            mode,
            window_width: a.window,
            window_origin: a.origin,
            policy: match a.policy {
                PolicyArg::Naive => SourcePolicy::Naive,
                PolicyArg::Balanced => SourcePolicy::Balanced,
            },
            ..BenchConfig::default()
        };
        let rep = malstone::run_distributed(cluster, &cfg).map_err(runtime)?;
        eprintln!(
            "distributed run: {:.6} s virtual, {} datagrams, {} dropped",
            rep.phases.total().as_secs_f64(),
            rep.net.submitted,
            rep.net.dropped
        );
        if a.verify && rep.table != oracle {
            let diff = oracle
                .iter()
                .filter(|(k, v)| rep.table.get(k.0, k.1) != Some(*v))
                .count()
                + rep
                    .table
                    .iter()
                    .filter(|(k, _)| oracle.get(k.0, k.1).is_none())
                    .count();
            return Err(CliError::Mismatch(format!(
                "distributed table disagrees with the oracle in {diff} rows"
            )));
        }
        if a.verify {
            eprintln!("verify: {} rows match the oracle", oracle.len());
        }
        let timing = malstone::timing_csv(&rep, None, &eff.render());
        (rep.table, Some(timing))
    } else {
        (oracle, None)
    };

    let text = match (a.report, cli.format) {
        (ReportArg::Timing, _) => timing.expect("timing implies a distributed run"),
        (ReportArg::Table, Format::Csv) => table.to_csv(&eff.render()),
        (ReportArg::Table, Format::Text) => table.to_text(&eff.render()),
    };
    emit(cli.out.as_deref(), &text)
}
