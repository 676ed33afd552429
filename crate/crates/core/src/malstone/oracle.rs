use std::collections::{BTreeMap, HashMap};

use super::table::{Increments, RatioTable, Windowing};
use super::MalstoneError;
use crate::malgen::EventRecord;

/// Earliest flagged timestamp per entity.
pub fn compromise_times<'a>(
    records: impl IntoIterator<Item = &'a EventRecord>,
) -> BTreeMap<u64, i64> {
    let mut out = BTreeMap::new();
    for r in records.into_iter().filter(|r| r.compromised) {
        let t = out.entry(r.entity_id).or_insert(r.timestamp);
        *t = (*t).min(r.timestamp);
    }
    out
}

/// One pass over the records: per-(site, entity) first visit, per-entity
/// compromise time, latest timestamp.
#[derive(Debug, Default)]
pub struct Scan {
    pub first_visit: HashMap<(u64, u64), i64>,
    pub compromise: HashMap<u64, i64>,
    pub max_ts: Option<i64>,
}

impl Scan {
    pub fn add(&mut self, r: &EventRecord) {
        let v = self
            .first_visit
            .entry((r.site_id, r.entity_id))
            .or_insert(r.timestamp);
        *v = (*v).min(r.timestamp);
        if r.compromised {
            let c = self.compromise.entry(r.entity_id).or_insert(r.timestamp);
            *c = (*c).min(r.timestamp);
        }
        self.max_ts = Some(self.max_ts.map_or(r.timestamp, |m| m.max(r.timestamp)));
    }

    /// An entity counts toward a site's numerator iff its compromise time is
    /// at or after its first visit to the site; later visits cannot add to
    /// the numerator without the first one qualifying too.
    pub fn increments(&self, window: Option<&Windowing>) -> Increments {
        let mut inc = Increments {
            max_ts: self.max_ts,
            ..Increments::default()
        };
        for (&(site, entity), &t) in &self.first_visit {
            let hit = self.compromise.get(&entity).is_some_and(|&c| c >= t);
            inc.add(site, window.map_or(0, |w| w.index(t)), hit);
        }
        inc
    }
}

pub fn scan<'a>(records: impl IntoIterator<Item = &'a EventRecord>) -> Scan {
    let mut s = Scan::default();
    for r in records {
        s.add(r);
    }
    s
}

pub fn malstone_a<'a>(records: impl IntoIterator<Item = &'a EventRecord>) -> RatioTable {
    scan(records).increments(None).table_a()
}

pub fn malstone_b<'a>(
    records: impl IntoIterator<Item = &'a EventRecord>,
    width: i64,
    origin: i64,
) -> Result<RatioTable, MalstoneError> {
    let w = Windowing::new(origin, width)?;
    Ok(scan(records).increments(Some(&w)).table_b(&w))
}
