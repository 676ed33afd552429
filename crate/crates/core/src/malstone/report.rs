use std::fmt::Write as _;
use std::time::Duration;

use super::executor::RunReport;

/// Relative slowdown against a baseline: `(t - base) / base`.
pub fn penalty(t: Duration, base: Duration) -> f64 {
    if base.is_zero() {
        return 0.0;
    }
    (t.as_secs_f64() - base.as_secs_f64()) / base.as_secs_f64()
}

pub fn secs(d: Duration) -> String {
    format!("{:.6}", d.as_secs_f64())
}

/// `section,name,value` rows: phase times, bytes per link, records per
/// worker and, when a baseline is known, the penalty.
pub fn timing_csv(r: &RunReport, penalty: Option<f64>, comments: &str) -> String {
    let mut out = String::new();
    for c in comments.lines() {
        let _ = writeln!(out, "# {c}");
    }
    out.push_str("section,name,value\n");
    let p = &r.phases;
    for (name, d) in [
        ("fetch", p.fetch),
        ("flags", p.flags),
        ("visits", p.visits),
        ("counts", p.counts),
        ("total", p.total()),
    ] {
        let _ = writeln!(out, "phase,{name},{}", secs(d));
    }
    for (&e, &b) in &r.edge_bytes {
        let _ = writeln!(out, "link,{},{b}", r.topology.edge_label(e));
    }
    for &(w, n) in &r.worker_records {
        let _ = writeln!(out, "worker,{},{n}", r.topology.name(w));
    }
    let _ = writeln!(out, "net,datagrams,{}", r.net.submitted);
    let _ = writeln!(out, "net,dropped,{}", r.net.dropped);
    let _ = writeln!(out, "net,transcript,{}", r.transcript_hash);
    if let Some(x) = penalty {
        let _ = writeln!(out, "summary,penalty,{x:.6}");
    }
    out
}
