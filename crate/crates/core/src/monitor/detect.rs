use std::collections::{BTreeMap, BTreeSet};

use super::links::LinkLoadReport;
use super::store::MetricsSample;
use super::MonitorError;
use crate::topology::{EdgeId, NodeId};

pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    match n {
        0 => 0.0,
        _ if n % 2 == 1 => values[n / 2],
        _ => (values[n / 2 - 1] + values[n / 2]) / 2.0,
    }
}

fn check_params(window: usize, threshold: f64) -> Result<(), MonitorError> {
    if window == 0 {
        return Err(MonitorError::InvalidParameter(
            "window must be at least 1".into(),
        ));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(MonitorError::InvalidParameter(format!(
            "threshold {threshold} outside (0, 1)"
        )));
    }
    Ok(())
}

/// Generic form of the rule: `series[k]` holds one member's values, newest
/// last. Round `r` compares the r-th newest value of every member.
fn flag_below_median<K: Ord + Copy>(
    series: &BTreeMap<K, Vec<f64>>,
    window: usize,
    threshold: f64,
) -> BTreeSet<K> {
    if series.len() < 2 {
        return BTreeSet::new();
    }
    let mut flagged: BTreeSet<K> = series.keys().copied().collect();
    for r in 0..window {
        let mut round: Vec<(K, f64)> = series
            .iter()
            .map(|(k, v)| (*k, v[v.len() - 1 - r]))
            .collect();
        let mut vals: Vec<f64> = round.iter().map(|x| x.1).collect();
        let cutoff = threshold * median(&mut vals);
        round.retain(|&(_, v)| v < cutoff);
        let below: BTreeSet<K> = round.into_iter().map(|x| x.0).collect();
        flagged.retain(|k| below.contains(k));
    }
    flagged
}

/// Nodes whose throughput (in + out) stayed below `threshold` times the
/// cluster median in each of the last `window` sampling rounds.
pub fn detect_underperformers(
    history: &BTreeMap<NodeId, Vec<MetricsSample>>,
    window: usize,
    threshold: f64,
) -> Result<BTreeSet<NodeId>, MonitorError> {
    check_params(window, threshold)?;
    for (n, h) in history {
        if h.len() < window {
            return Err(MonitorError::InsufficientSamples {
                node: *n,
                have: h.len(),
                need: window,
            });
        }
    }
    let series = history
        .iter()
        .map(|(n, h)| (*n, h.iter().map(MetricsSample::throughput).collect()))
        .collect();
    Ok(flag_below_median(&series, window, threshold))
}

/// The same rule applied to links: `history` holds successive aggregation
/// reports, oldest first. Edges that carry nothing in every round are never
/// compared.
pub fn detect_underperforming_links(
    history: &[LinkLoadReport],
    window: usize,
    threshold: f64,
) -> Result<BTreeSet<EdgeId>, MonitorError> {
    check_params(window, threshold)?;
    if history.len() < window {
        return Err(MonitorError::InsufficientReports {
            have: history.len(),
            need: window,
        });
    }
    let recent = &history[history.len() - window..];
    let edges: BTreeSet<EdgeId> = recent
        .iter()
        .flat_map(|r| r.edges.iter().filter(|(_, &v)| v > 0).map(|(e, _)| *e))
        .collect();
    let series = edges
        .into_iter()
        .map(|e| (e, recent.iter().map(|r| r.load(e) as f64).collect()))
        .collect();
    Ok(flag_below_median(&series, window, threshold))
}
