//! Scenario files: `key = value` lines, `#` starts a comment.
//!
//! ```text
//! name = oct4
//! racks = 4
//! nodes_per_rack = 8
//! intra_latency_ms = 0.05..0.1
//! inter_latency_ms = 5..20
//! intra_bandwidth = 125000000
//! inter_bandwidth = 1250000000
//! inter_loss = 0.01
//! seed = 7
//! ```
//!
//! The tree is `core -> rack<r> -> r<r>n<i>`. "intra" settings apply to
//! node-to-rack edges, "inter" settings to rack-to-core edges.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use thiserror::Error;

use super::link::{Latency, LinkSpec};
use super::net::SimNet;
use crate::topology::{EdgeId, NodeId, TopologyTree};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{}{field}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ScenarioError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl ScenarioError {
    fn at(line: usize, field: &str, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn field(field: &str, message: impl Into<String>) -> Self {
        Self {
            line: None,
            field: field.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub racks: u32,
    pub nodes_per_rack: u32,
    pub intra_latency: Latency,
    pub inter_latency: Latency,
    pub intra_bandwidth: u64,
    pub inter_bandwidth: u64,
    pub intra_loss: f64,
    pub inter_loss: f64,
    pub duplicate_prob: f64,
    pub reorder_jitter: Duration,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::oct4()
    }
}

fn ms(x: f64) -> Duration {
    Duration::from_secs_f64(x / 1000.0)
}

fn fmt_ms(d: Duration) -> String {
    format!("{}", d.as_nanos() as f64 / 1e6)
}

fn fmt_latency(l: &Latency) -> String {
    match l {
        Latency::Fixed(d) => fmt_ms(*d),
        Latency::Uniform(lo, hi) => format!("{}..{}", fmt_ms(*lo), fmt_ms(*hi)),
    }
}

impl ScenarioConfig {
    /// Four racks of eight nodes. Cross-rack one-way latency is roughly
    /// 10 to 40 ms.
    pub fn oct4() -> Self {
        Self {
            name: "oct4".into(),
            racks: 4,
            nodes_per_rack: 8,
            intra_latency: Latency::Uniform(ms(0.05), ms(0.1)),
            inter_latency: Latency::Uniform(ms(5.0), ms(20.0)),
            intra_bandwidth: 125_000_000,
            inter_bandwidth: 1_250_000_000,
            intra_loss: 0.0,
            inter_loss: 0.0,
            duplicate_prob: 0.0,
            reorder_jitter: Duration::ZERO,
            seed: 1,
        }
    }

    /// oct4 with rack uplinks at a tenth of the node bandwidth.
    pub fn oct4_constrained() -> Self {
        let mut c = Self::oct4();
        c.name = "oct4-constrained".into();
        c.inter_bandwidth = c.intra_bandwidth / 10;
        c
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "oct4" => Some(Self::oct4()),
            "oct4-constrained" => Some(Self::oct4_constrained()),
            _ => None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::field("file", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses a scenario; unspecified keys keep their oct4 defaults.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut c = Self::oct4();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ScenarioError::at(line_no, line, "expected key = value"))?;
            let (key, value) = (key.trim(), value.trim());
            let err = |m: String| ScenarioError::at(line_no, key, m);
            match key {
                "name" => c.name = value.to_string(),
                "racks" => c.racks = parse_count(value).map_err(err)?,
                "nodes_per_rack" => c.nodes_per_rack = parse_count(value).map_err(err)?,
                "intra_latency_ms" => c.intra_latency = parse_latency(value).map_err(err)?,
                "inter_latency_ms" => c.inter_latency = parse_latency(value).map_err(err)?,
                "intra_bandwidth" => c.intra_bandwidth = parse_num(value).map_err(err)?,
                "inter_bandwidth" => c.inter_bandwidth = parse_num(value).map_err(err)?,
                "intra_loss" => c.intra_loss = parse_prob(value).map_err(err)?,
                "inter_loss" => c.inter_loss = parse_prob(value).map_err(err)?,
                "duplicate_prob" => c.duplicate_prob = parse_prob(value).map_err(err)?,
                "reorder_jitter_ms" => c.reorder_jitter = ms(parse_ms(value).map_err(err)?),
                "seed" => c.seed = parse_num(value).map_err(err)?,
                _ => return Err(err("unknown key".into())),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.racks == 0 {
            return Err(ScenarioError::field("racks", "must be at least 1"));
        }
        if self.nodes_per_rack == 0 {
            return Err(ScenarioError::field("nodes_per_rack", "must be at least 1"));
        }
        for (field, spec) in [("intra", self.intra_link()), ("inter", self.inter_link())] {
            spec.validate()
                .map_err(|m| ScenarioError::field(field, m))?;
        }
        Ok(())
    }

    /// Effective settings in file syntax.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "racks = {}", self.racks);
        let _ = writeln!(s, "nodes_per_rack = {}", self.nodes_per_rack);
        let _ = writeln!(s, "intra_latency_ms = {}", fmt_latency(&self.intra_latency));
        let _ = writeln!(s, "inter_latency_ms = {}", fmt_latency(&self.inter_latency));
        let _ = writeln!(s, "intra_bandwidth = {}", self.intra_bandwidth);
        let _ = writeln!(s, "inter_bandwidth = {}", self.inter_bandwidth);
        let _ = writeln!(s, "intra_loss = {}", self.intra_loss);
        let _ = writeln!(s, "inter_loss = {}", self.inter_loss);
        let _ = writeln!(s, "duplicate_prob = {}", self.duplicate_prob);
        let _ = writeln!(s, "reorder_jitter_ms = {}", fmt_ms(self.reorder_jitter));
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    pub fn intra_link(&self) -> LinkSpec {
        LinkSpec {
            latency: self.intra_latency,
            loss_prob: self.intra_loss,
            bandwidth: self.intra_bandwidth,
            duplicate_prob: self.duplicate_prob,
            reorder_jitter: self.reorder_jitter,
        }
    }

    pub fn inter_link(&self) -> LinkSpec {
        LinkSpec {
            latency: self.inter_latency,
            loss_prob: self.inter_loss,
            bandwidth: self.inter_bandwidth,
            duplicate_prob: self.duplicate_prob,
            reorder_jitter: self.reorder_jitter,
        }
    }

    /// Builds the tree. Leaves are returned rack by rack.
    pub fn topology(&self) -> (TopologyTree, Vec<NodeId>) {
        let mut t = TopologyTree::new("core");
        let mut leaves = Vec::new();
        for r in 0..self.racks {
            let rack = t
                .add_child(t.root(), format!("rack{r}"))
                .expect("unique name");
            for n in 0..self.nodes_per_rack {
                leaves.push(t.add_child(rack, format!("r{r}n{n}")).expect("unique name"));
            }
        }
        (t, leaves)
    }

    pub fn build(&self) -> Result<SimNet, ScenarioError> {
        self.validate()?;
        let (topo, _) = self.topology();
        let uplinks: Vec<EdgeId> = topo
            .children(topo.root())
            .iter()
            .map(|&r| EdgeId(r))
            .collect();
        let mut net = SimNet::new(topo, self.intra_link(), self.seed);
        for e in uplinks {
            net.set_link(e, self.inter_link())
                .map_err(|e| ScenarioError::field("inter", e.to_string()))?;
        }
        Ok(net)
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("invalid number {v:?}"))
}

fn parse_count(v: &str) -> Result<u32, String> {
    match parse_num(v)? {
        0 => Err("must be at least 1".into()),
        n => Ok(n),
    }
}

fn parse_ms(v: &str) -> Result<f64, String> {
    let x: f64 = parse_num(v)?;
    if !x.is_finite() || x < 0.0 {
        return Err(format!("{v:?} is not a non-negative duration"));
    }
    Ok(x)
}

fn parse_prob(v: &str) -> Result<f64, String> {
    let x: f64 = parse_num(v)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(format!("{v} outside [0, 1]"));
    }
    Ok(x)
}

fn parse_latency(v: &str) -> Result<Latency, String> {
    match v.split_once("..") {
        Some((lo, hi)) => {
            let (lo, hi) = (parse_ms(lo.trim())?, parse_ms(hi.trim())?);
            if lo > hi {
                return Err(format!("range {v} is reversed"));
            }
            Ok(Latency::Uniform(ms(lo), ms(hi)))
        }
        None => Ok(Latency::Fixed(ms(parse_ms(v)?))),
    }
}
