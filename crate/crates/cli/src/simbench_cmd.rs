use octkit::malgen::GenConfig;
use octkit::malstone::{self, BenchConfig, Mode, SimbenchConfig};
use octkit::netsim::ScenarioConfig;

use crate::malstone_cmd::ModeArg;
use crate::{emit, runtime, scenario, Cli, CliError, Effective, Format};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, default_value_t = 100_000)]
    pub records: u64,
    #[arg(long, default_value_t = 1_000)]
    pub entities: u64,
    #[arg(long, default_value_t = 1_000)]
    pub sites: u64,
    #[arg(long, default_value_t = 4)]
    pub racks: u32,
    #[arg(long, default_value_t = 7)]
    pub workers_per_rack: u32,
    #[arg(long, default_value_t = 3)]
    pub replicas: usize,
    /// Partition count; 0 means one per worker.
    #[arg(long, default_value_t = 0)]
    pub partitions: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::A)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 604_800)]
    pub window: i64,
}

pub fn run(cli: &Cli, a: &Args) -> Result<(), CliError> {
    let sc = scenario(cli, ScenarioConfig::oct4_constrained())?;
    if a.racks == 0 || a.workers_per_rack == 0 {
        return Err(CliError::Usage(
            "--racks and --workers-per-rack must be positive".into(),
        ));
    }
    if a.mode == ModeArg::B && a.window <= 0 {
        return Err(CliError::Usage("--window must be positive".into()));
    }
    let gen = GenConfig {
        num_records: a.records,
        num_entities: a.entities,
        num_sites: a.sites,
        seed: cli.seed,
        ..GenConfig::default()
    };
    gen.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let cfg = SimbenchConfig {
        run: BenchConfig {
            mode: match a.mode {
                ModeArg::A => Mode::A,
                ModeArg::B => Mode::B,
            },
            window_width: a.window,
            window_origin: gen.period_start,
            ..BenchConfig::default()
        },
        gen,
        scenario: sc,
        racks: a.racks,
        workers_per_rack: a.workers_per_rack,
        replicas: a.replicas,
        partitions: a.partitions,
    };

    let mut eff = Effective::new(cli, "simbench");
    eff.set("records", a.records);
    eff.set("entities", a.entities);
    eff.set("sites", a.sites);
    eff.set("racks", a.racks);
    eff.set("workers_per_rack", a.workers_per_rack);
    eff.set("replicas", a.replicas);
    eff.set("partitions", a.partitions);
    eff.set("mode", format!("{:?}", cfg.run.mode).to_lowercase());
    eff.set("window", a.window);
    eff.scenario(&cfg.scenario);

    let rep = malstone::simbench(&cfg).map_err(runtime)?;
    eprintln!(
        "all layouts agree with the oracle ({} rows)",
        rep.table.len()
    );
    let text = match cli.format {
        Format::Csv => rep.to_csv(&eff.render()),
        Format::Text => rep.to_text(&eff.render()),
    };
    emit(cli.out.as_deref(), &text)
}
