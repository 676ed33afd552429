//! Line format for in-band sample reporting, one sample per line:
//!
//! ```text
//! node,at_us,cpu_pct,mem_bytes,disk_io_bytes_per_s,net_in_bytes_per_s,net_out_bytes_per_s
//! ```

use std::sync::Arc;
use std::time::Duration;

use super::store::{MetricsSample, MetricsStore};
use super::MonitorError;
use crate::rpc::HandlerFn;
use crate::topology::TopologyTree;

pub const INGEST_METHOD: &str = "monitor.ingest";

pub fn format_sample(topo: &TopologyTree, s: &MetricsSample) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        topo.name(s.node),
        s.at.as_micros(),
        s.cpu_pct,
        s.mem_bytes,
        s.disk_io_bytes_per_s,
        s.net_in_bytes_per_s,
        s.net_out_bytes_per_s
    )
}

/// Parses and validates every line; blank lines are skipped.
pub fn parse_samples(topo: &TopologyTree, text: &str) -> Result<Vec<MetricsSample>, MonitorError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |m: String| MonitorError::Parse(format!("line {}: {m}", i + 1));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(bad(format!("expected 7 fields, got {}", f.len())));
        }
        let node = topo
            .find(f[0])
            .filter(|&n| topo.is_leaf(n))
            .ok_or_else(|| bad(format!("unknown node {:?}", f[0])))?;
        let num = |k: usize, name: &str| -> Result<f64, MonitorError> {
            f[k].parse()
                .map_err(|_| bad(format!("bad {name} {:?}", f[k])))
        };
        let s = MetricsSample {
            node,
            at: Duration::from_micros(
                f[1].parse()
                    .map_err(|_| bad(format!("bad at_us {:?}", f[1])))?,
            ),
            cpu_pct: num(2, "cpu_pct")?,
            mem_bytes: f[3]
                .parse()
                .map_err(|_| bad(format!("bad mem_bytes {:?}", f[3])))?,
            disk_io_bytes_per_s: num(4, "disk_io_bytes_per_s")?,
            net_in_bytes_per_s: num(5, "net_in_bytes_per_s")?,
            net_out_bytes_per_s: num(6, "net_out_bytes_per_s")?,
        };
        s.validate().map_err(|e| bad(e.to_string()))?;
        out.push(s);
    }
    Ok(out)
}

/// RPC handler for [`INGEST_METHOD`]. A batch is applied only if every line
/// is valid; the response body is the number of samples stored.
pub fn ingest_handler(store: Arc<MetricsStore>, topo: Arc<TopologyTree>) -> HandlerFn {
    Arc::new(move |body: &[u8]| {
        let text = std::str::from_utf8(body).map_err(|_| "body is not UTF-8".to_string())?;
        let samples = parse_samples(&topo, text).map_err(|e| e.to_string())?;
        let n = samples.len();
        for s in samples {
            store.ingest(s).map_err(|e| e.to_string())?;
        }
        Ok(n.to_string().into_bytes())
    })
}
