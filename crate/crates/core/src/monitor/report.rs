use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::links::{LinkCaps, LinkLoadReport};
use super::store::MetricsSample;
use super::MonitorError;
use crate::topology::{NodeId, TopologyTree};

pub const BUSY_FRACTION: f64 = 0.8;

pub const STATUS_COLUMNS: [&str; 9] = [
    "kind",
    "id",
    "cpu_pct",
    "mem_bytes",
    "disk_io_bytes_per_s",
    "net_in_bytes_per_s",
    "net_out_bytes_per_s",
    "load_bytes_per_s",
    "status",
];

/// Per-node resource ceilings used to turn samples into utilizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCapacity {
    pub mem_bytes: u64,
    pub disk_bytes_per_s: f64,
    pub nic_bytes_per_s: f64,
}

impl Default for NodeCapacity {
    fn default() -> Self {
        Self {
            mem_bytes: 12 * 1_000_000_000,
            disk_bytes_per_s: 100_000_000.0,
            nic_bytes_per_s: 125_000_000.0,
        }
    }
}

impl NodeCapacity {
    pub fn is_busy(&self, s: &MetricsSample) -> bool {
        s.cpu_pct > 100.0 * BUSY_FRACTION
            || s.mem_bytes as f64 > self.mem_bytes as f64 * BUSY_FRACTION
            || s.disk_io_bytes_per_s > self.disk_bytes_per_s * BUSY_FRACTION
            || s.net_in_bytes_per_s > self.nic_bytes_per_s * BUSY_FRACTION
            || s.net_out_bytes_per_s > self.nic_bytes_per_s * BUSY_FRACTION
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Node,
    Edge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatusRow {
    pub kind: RowKind,
    pub id: String,
    pub sample: Option<SampleFields>,
    pub load_bytes_per_s: Option<u64>,
    /// "busy", "idle", or "unknown" for a node that never reported.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleFields {
    pub cpu_pct: f64,
    pub mem_bytes: u64,
    pub disk_io_bytes_per_s: f64,
    pub net_in_bytes_per_s: f64,
    pub net_out_bytes_per_s: f64,
}

/// One row per leaf (latest sample) followed by one row per edge.
pub fn status_rows(
    latest: &BTreeMap<NodeId, MetricsSample>,
    topo: &TopologyTree,
    report: &LinkLoadReport,
    caps: &LinkCaps,
    node_cap: &NodeCapacity,
) -> Vec<StatusRow> {
    let mut rows = Vec::new();
    for n in topo.leaves() {
        let s = latest.get(&n);
        rows.push(StatusRow {
            kind: RowKind::Node,
            id: topo.name(n).to_string(),
            sample: s.map(|s| SampleFields {
                cpu_pct: s.cpu_pct,
                mem_bytes: s.mem_bytes,
                disk_io_bytes_per_s: s.disk_io_bytes_per_s,
                net_in_bytes_per_s: s.net_in_bytes_per_s,
                net_out_bytes_per_s: s.net_out_bytes_per_s,
            }),
            load_bytes_per_s: None,
            status: match s {
                None => "unknown",
                Some(s) if node_cap.is_busy(s) => "busy",
                Some(_) => "idle",
            }
            .into(),
        });
    }
    for e in topo.edges() {
        let load = report.load(e);
        let cap = caps.get(e);
        let busy = cap > 0 && load as f64 > cap as f64 * BUSY_FRACTION;
        rows.push(StatusRow {
            kind: RowKind::Edge,
            id: topo.edge_label(e),
            sample: None,
            load_bytes_per_s: Some(load),
            status: if busy { "busy" } else { "idle" }.into(),
        });
    }
    rows
}

fn record(r: &StatusRow) -> Vec<String> {
    let opt = |v: Option<String>| v.unwrap_or_default();
    let s = r.sample.as_ref();
    vec![
        match r.kind {
            RowKind::Node => "node",
            RowKind::Edge => "edge",
        }
        .to_string(),
        r.id.clone(),
        opt(s.map(|s| s.cpu_pct.to_string())),
        opt(s.map(|s| s.mem_bytes.to_string())),
        opt(s.map(|s| s.disk_io_bytes_per_s.to_string())),
        opt(s.map(|s| s.net_in_bytes_per_s.to_string())),
        opt(s.map(|s| s.net_out_bytes_per_s.to_string())),
        opt(r.load_bytes_per_s.map(|v| v.to_string())),
        r.status.clone(),
    ]
}

/// CSV with a header row. `comments` lines are emitted first, each
/// prefixed with `# `.
pub fn write_status_csv(rows: &[StatusRow], comments: &str) -> String {
    let mut out = String::new();
    for c in comments.lines() {
        let _ = writeln!(out, "# {c}");
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(STATUS_COLUMNS).unwrap();
    for r in rows {
        w.write_record(record(r)).unwrap();
    }
    out.push_str(&String::from_utf8(w.into_inner().unwrap()).unwrap());
    out
}

/// Fixed-width table of the same columns.
pub fn write_status_text(rows: &[StatusRow], comments: &str) -> String {
    let table: Vec<Vec<String>> = std::iter::once(STATUS_COLUMNS.map(String::from).to_vec())
        .chain(rows.iter().map(record))
        .collect();
    let widths: Vec<usize> = (0..STATUS_COLUMNS.len())
        .map(|i| table.iter().map(|r| r[i].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for c in comments.lines() {
        let _ = writeln!(out, "# {c}");
    }
    for r in &table {
        let cells: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

pub fn parse_status_csv(text: &str) -> Result<Vec<StatusRow>, MonitorError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| MonitorError::Parse(e.to_string()))?;
    if header.iter().ne(STATUS_COLUMNS) {
        return Err(MonitorError::Parse(format!("unexpected header {header:?}")));
    }
    let bad = |line: u64, m: &str| MonitorError::Parse(format!("line {line}: {m}"));
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| MonitorError::Parse(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let f = |i: usize| rec.get(i).unwrap_or("");
        let kind = match f(0) {
            "node" => RowKind::Node,
            "edge" => RowKind::Edge,
            k => return Err(bad(line, &format!("unknown kind {k:?}"))),
        };
        let num = |i: usize| -> Result<f64, MonitorError> {
            f(i).parse().map_err(|_| bad(line, STATUS_COLUMNS[i]))
        };
        let sample = if f(2).is_empty() {
            None
        } else {
            Some(SampleFields {
                cpu_pct: num(2)?,
                mem_bytes: f(3).parse().map_err(|_| bad(line, "mem_bytes"))?,
                disk_io_bytes_per_s: num(4)?,
                net_in_bytes_per_s: num(5)?,
                net_out_bytes_per_s: num(6)?,
            })
        };
        let load_bytes_per_s = match f(7) {
            "" => None,
            v => Some(v.parse().map_err(|_| bad(line, "load_bytes_per_s"))?),
        };
        rows.push(StatusRow {
            kind,
            id: f(1).to_string(),
            sample,
            load_bytes_per_s,
            status: f(8).to_string(),
        });
    }
    Ok(rows)
}
