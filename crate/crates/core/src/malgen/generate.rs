use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use super::record::{EventRecord, MAX_TIMESTAMP, MIN_TIMESTAMP};
use super::MalgenError;

const VISIT_STREAM: u64 = 0;
const SITE_STREAM: u64 = 1;
const COIN_STREAM: u64 = 2;

/// 2008-01-01T00:00:00Z
pub const DEFAULT_PERIOD_START: i64 = 1_199_145_600;

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub num_records: u64,
    pub num_entities: u64,
    pub num_sites: u64,
    pub fraction_malicious_sites: f64,
    pub p_compromise: f64,
    pub zipf_exponent: f64,
    pub period_start: i64,
    pub period_days: u32,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            num_records: 10_000,
            num_entities: 1_000,
            num_sites: 1_000,
            fraction_malicious_sites: 0.01,
            p_compromise: 0.2,
            zipf_exponent: 1.0,
            period_start: DEFAULT_PERIOD_START,
            period_days: 56,
            seed: 1,
        }
    }
}

impl GenConfig {
    pub fn period_secs(&self) -> i64 {
        i64::from(self.period_days) * 86_400
    }

    pub fn malicious_site_count(&self) -> u64 {
        (self.fraction_malicious_sites * self.num_sites as f64).ceil() as u64
    }

    pub fn validate(&self) -> Result<(), MalgenError> {
        let bad = |m: String| Err(MalgenError::Config(m));
        for (name, p) in [
            ("fraction_malicious_sites", self.fraction_malicious_sites),
            ("p_compromise", self.p_compromise),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} outside [0, 1]"));
            }
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return bad(format!("zipf exponent {} must be >= 0", self.zipf_exponent));
        }
        if self.period_days == 0 {
            return bad("period_days must be positive".into());
        }
        if self.num_records > 0 && (self.num_entities == 0 || self.num_sites == 0) {
            return bad(
                "num_entities and num_sites must be positive when generating records".into(),
            );
        }
        if usize::try_from(self.num_sites).is_err() {
            return bad("num_sites too large".into());
        }
        let end = self.period_start.checked_add(self.period_secs() - 1);
        if self.period_start < MIN_TIMESTAMP || end.is_none_or(|e| e > MAX_TIMESTAMP) {
            return bad("period does not fit four-digit years".into());
        }
        Ok(())
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

struct VisitSource {
    rng: ChaCha8Rng,
    zipf: Zipf<f64>,
    entities: u64,
    start: i64,
    span: i64,
}

impl VisitSource {
    fn new(cfg: &GenConfig) -> Self {
        Self {
            rng: rng(cfg.seed, VISIT_STREAM),
            zipf: Zipf::new(cfg.num_sites.max(1) as f64, cfg.zipf_exponent).expect("validated"),
            entities: cfg.num_entities,
            start: cfg.period_start,
            span: cfg.period_secs(),
        }
    }

    /// (entity, site, timestamp)
    fn next(&mut self) -> (u64, u64, i64) {
        let entity = self.rng.random_range(0..self.entities);
        let site = self.zipf.sample(&mut self.rng) as u64 - 1;
        let ts = self.start + self.rng.random_range(0..self.span);
        (entity, site, ts)
    }
}

/// Deterministic MalStone record stream. Construction makes one pass over
/// the visits to decide compromises; iteration replays the same visits.
pub struct Generator {
    cfg: GenConfig,
    malicious: HashSet<u64>,
    visits: VisitSource,
    flagged: Vec<u64>,
    next_flag: usize,
    index: u64,
}

impl Generator {
    pub fn new(cfg: GenConfig) -> Result<Self, MalgenError> {
        cfg.validate()?;
        let malicious: HashSet<u64> = if cfg.num_sites == 0 {
            HashSet::new()
        } else {
            let mut r = rng(cfg.seed, SITE_STREAM);
            let m = cfg.malicious_site_count() as usize;
            index::sample(&mut r, cfg.num_sites as usize, m)
                .into_iter()
                .map(|i| i as u64)
                .collect()
        };

        // each entity's malicious visits in time order; flip a coin at each
        // until one comes up
        let mut exposures: Vec<(u64, i64, u64)> = Vec::new();
        let mut src = VisitSource::new(&cfg);
        for i in 0..cfg.num_records {
            let (entity, site, ts) = src.next();
            if malicious.contains(&site) {
                exposures.push((entity, ts, i));
            }
        }
        exposures.sort_unstable();
        let mut coins = rng(cfg.seed, COIN_STREAM);
        let mut flagged = Vec::new();
        let mut current: Option<(u64, bool)> = None;
        for (entity, _, i) in exposures {
            if current.map(|c| c.0) != Some(entity) {
                current = Some((entity, false));
            }
            let c = current.as_mut().unwrap();
            if !c.1 && coins.random_bool(cfg.p_compromise) {
                c.1 = true;
                flagged.push(i);
            }
        }
        flagged.sort_unstable();

        Ok(Self {
            visits: VisitSource::new(&cfg),
            cfg,
            malicious,
            flagged,
            next_flag: 0,
            index: 0,
        })
    }

    pub fn config(&self) -> &GenConfig {
        &self.cfg
    }

    pub fn is_malicious(&self, site: u64) -> bool {
        self.malicious.contains(&site)
    }

    pub fn malicious_sites(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self.malicious.iter().copied().collect();
        v.sort_unstable();
        v
    }

    /// Number of records that will carry flag = 1.
    pub fn compromised_count(&self) -> usize {
        self.flagged.len()
    }
}

impl Iterator for Generator {
    type Item = EventRecord;

    fn next(&mut self) -> Option<EventRecord> {
        if self.index >= self.cfg.num_records {
            return None;
        }
        let i = self.index;
        self.index += 1;
        let (entity, site, ts) = self.visits.next();
        let compromised = self.flagged.get(self.next_flag) == Some(&i);
        if compromised {
            self.next_flag += 1;
        }
        Some(EventRecord {
            event_id: i,
            timestamp: ts,
            site_id: site,
            compromised,
            entity_id: entity,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.cfg.num_records - self.index) as usize;
        (left, Some(left))
    }
}

pub fn generate(cfg: GenConfig) -> Result<Generator, MalgenError> {
    Generator::new(cfg)
}
