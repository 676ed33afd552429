use std::path::Path;

use octkit::malgen::{self, GenConfig, DEFAULT_PERIOD_START};

use crate::{runtime, Cli, CliError, Effective};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, default_value_t = 10_000)]
    pub records: u64,
    #[arg(long, default_value_t = 1_000)]
    pub entities: u64,
    #[arg(long, default_value_t = 1_000)]
    pub sites: u64,
    /// Fraction of sites that compromise visitors.
    #[arg(long, default_value_t = 0.01)]
    pub malicious_fraction: f64,
    /// Chance that one visit to a malicious site compromises the entity.
    #[arg(long, default_value_t = 0.2)]
    pub p_compromise: f64,
    /// Zipf exponent of site popularity.
    #[arg(long, default_value_t = 1.0)]
    pub zipf: f64,
    /// Period start, Unix seconds.
    #[arg(long, default_value_t = DEFAULT_PERIOD_START, allow_hyphen_values = true)]
    pub start: i64,
    #[arg(long, default_value_t = 56)]
    pub days: u32,
    /// Also deal the records round-robin into this many partition files
    /// next to the output (`<stem>.part-NNN`).
    #[arg(long)]
    pub split: Option<usize>,
}

pub fn run(cli: &Cli, a: &Args) -> Result<(), CliError> {
    if cli.config.is_some() {
        return Err(CliError::Usage("malgen does not take --config".into()));
    }
    let out = cli
        .out
        .as_deref()
        .ok_or_else(|| CliError::Usage("malgen needs --out PATH".into()))?;
    if a.split == Some(0) {
        return Err(CliError::Usage("--split must be at least 1".into()));
    }
    let cfg = GenConfig {
        num_records: a.records,
        num_entities: a.entities,
        num_sites: a.sites,
        fraction_malicious_sites: a.malicious_fraction,
        p_compromise: a.p_compromise,
        zipf_exponent: a.zipf,
        period_start: a.start,
        period_days: a.days,
        seed: cli.seed,
    };
    let gen = malgen::generate(cfg.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
    let malicious = gen.malicious_sites().len();
    let sum = malgen::write_records(out, gen).map_err(runtime)?;

    let mut eff = Effective::new(cli, "malgen");
    eff.set("records", cfg.num_records);
    eff.set("entities", cfg.num_entities);
    eff.set("sites", cfg.num_sites);
    eff.set("malicious_fraction", cfg.fraction_malicious_sites);
    eff.set("p_compromise", cfg.p_compromise);
    eff.set("zipf", cfg.zipf_exponent);
    eff.set("start", cfg.period_start);
    eff.set("days", cfg.period_days);
    eff.set("out", out.display());
    for line in eff.render().lines() {
        eprintln!("# {line}");
    }
    eprintln!(
        "wrote {} records ({} compromised, {malicious} malicious sites), {} bytes to {}",
        sum.records,
        sum.compromised,
        sum.bytes,
        out.display()
    );
    if let Some(k) = a.split {
        let dir = out
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let parts = malgen::split(out, k, dir).map_err(runtime)?;
        eprintln!(
            "split into {} partitions: {} ..",
            parts.len(),
            parts[0].display()
        );
    }
    Ok(())
}
