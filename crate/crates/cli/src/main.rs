//! `octkit`: MalGen, MalStone, GMP diagnostics, the wide-area benchmark and
//! monitoring reports from one binary.

mod malgen_cmd;
mod malstone_cmd;
mod monitor_cmd;
mod ping_cmd;
mod simbench_cmd;

use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use octkit::netsim::ScenarioConfig;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "octkit", version, about = "Desk-scale cloud testbed toolkit")]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Scenario file (key = value) for commands that simulate a network.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output file; reports go to stdout when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Generate a MalStone record file.
    Malgen(malgen_cmd::Args),
    /// Compute MalStone-A or -B over record files.
    Malstone(malstone_cmd::Args),
    /// Round-trip GMP messages over the simulator or real UDP.
    GmpPing(ping_cmd::Args),
    /// Local versus distributed MalStone on the simulated testbed.
    Simbench(simbench_cmd::Args),
    /// Node and link status from resource samples and a traffic matrix.
    MonitorReport(monitor_cmd::Args),
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Mismatch(_) => 3,
        }
    }
}

pub fn runtime<E: Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

/// `key = value` lines describing a run, embedded in reports as comments.
#[derive(Debug, Default)]
pub struct Effective(Vec<(String, String)>);

impl Effective {
    pub fn new(cli: &Cli, command: &str) -> Self {
        let mut e = Self::default();
        e.set("command", command);
        e.set("seed", cli.seed);
        e.set("format", format!("{:?}", cli.format).to_lowercase());
        if let Some(c) = &cli.config {
            e.set("config", c.display());
        }
        e
    }

    pub fn set(&mut self, k: &str, v: impl Display) {
        self.0.push((k.to_string(), v.to_string()));
    }

    pub fn scenario(&mut self, sc: &ScenarioConfig) {
        for line in sc.to_kv().lines() {
            if let Some((k, v)) = line.split_once(" = ") {
                self.set(&format!("scenario.{k}"), v);
            }
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::from("octkit effective config\n");
        for (k, v) in &self.0 {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}

/// The scenario from `--config`, or `default` with the run seed applied.
pub fn scenario(cli: &Cli, default: ScenarioConfig) -> Result<ScenarioConfig, CliError> {
    let mut sc = match &cli.config {
        Some(p) => ScenarioConfig::load(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?,
        None => default,
    };
    if cli.config.is_none() {
        sc.seed = cli.seed;
    }
    sc.validate().map_err(runtime)?;
    Ok(sc)
}

pub fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| runtime(format!("{}: {e}", p.display()))),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())
                .and_then(|_| so.flush())
                .map_err(runtime)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.cmd {
        Cmd::Malgen(a) => malgen_cmd::run(&cli, a),
        Cmd::Malstone(a) => malstone_cmd::run(&cli, a),
        Cmd::GmpPing(a) => ping_cmd::run(&cli, a),
        Cmd::Simbench(a) => simbench_cmd::run(&cli, a),
        Cmd::MonitorReport(a) => monitor_cmd::run(&cli, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return ExitCode::from(if ok { 0 } else { 1 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("octkit: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("Run `octkit --help` for usage.");
            }
            ExitCode::from(e.code())
        }
    }
}
