use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::MalstoneError;

pub const TABLE_HEADER: &str = "site_id,window_index,numerator,denominator,ratio";

/// Per-site (MalStone-A) or per-(site, window) (MalStone-B) counts of
/// compromised and total distinct visiting entities.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RatioTable {
    rows: BTreeMap<(u64, Option<i64>), (u64, u64)>,
}

impl RatioTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, site: u64, window: Option<i64>, num: u64, den: u64) {
        debug_assert!(num <= den && den >= 1);
        self.rows.insert((site, window), (num, den));
    }

    pub fn get(&self, site: u64, window: Option<i64>) -> Option<(u64, u64)> {
        self.rows.get(&(site, window)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((u64, Option<i64>), (u64, u64))> + '_ {
        self.rows.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn sites(&self) -> impl Iterator<Item = u64> + '_ {
        let mut last = None;
        self.rows
            .keys()
            .map(|&(s, _)| s)
            .filter(move |&s| last.replace(s) != Some(s))
    }

    /// The last window of each site, keyed by site.
    pub fn final_windows(&self) -> BTreeMap<u64, (i64, u64, u64)> {
        let mut out = BTreeMap::new();
        for (&(s, w), &(n, d)) in &self.rows {
            if let Some(w) = w {
                out.insert(s, (w, n, d));
            }
        }
        out
    }

    pub fn to_csv(&self, comments: &str) -> String {
        let mut out = String::new();
        for c in comments.lines() {
            let _ = writeln!(out, "# {c}");
        }
        out.push_str(TABLE_HEADER);
        out.push('\n');
        for (&(s, w), &(n, d)) in &self.rows {
            let w = w.map_or_else(|| "-".to_string(), |w| w.to_string());
            let _ = writeln!(out, "{s},{w},{n},{d},{:.6}", n as f64 / d as f64);
        }
        out
    }

    pub fn to_text(&self, comments: &str) -> String {
        let mut out = String::new();
        for c in comments.lines() {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(
            out,
            "{:>12} {:>8} {:>10} {:>11} {:>9}",
            "site", "window", "numerator", "denominator", "ratio"
        );
        for (&(s, w), &(n, d)) in &self.rows {
            let w = w.map_or_else(|| "-".to_string(), |w| w.to_string());
            let _ = writeln!(
                out,
                "{s:>12} {w:>8} {n:>10} {d:>11} {:>9.6}",
                n as f64 / d as f64
            );
        }
        out
    }

    /// Reads the CSV produced by [`RatioTable::to_csv`]; the ratio column is
    /// ignored since it is derived.
    pub fn from_csv(text: &str) -> Result<Self, MalstoneError> {
        let mut t = Self::new();
        let mut seen_header = false;
        for (i, line) in text.lines().enumerate() {
            let bad = |m: &str| MalstoneError::Table(format!("line {}: {m}", i + 1));
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if !seen_header {
                if line != TABLE_HEADER {
                    return Err(bad("missing header"));
                }
                seen_header = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad("expected 5 fields"));
            }
            let site = f[0].parse().map_err(|_| bad("bad site_id"))?;
            let window = match f[1] {
                "-" => None,
                w => Some(w.parse().map_err(|_| bad("bad window_index"))?),
            };
            let num: u64 = f[2].parse().map_err(|_| bad("bad numerator"))?;
            let den: u64 = f[3].parse().map_err(|_| bad("bad denominator"))?;
            if den == 0 || num > den {
                return Err(bad("numerator must be <= denominator >= 1"));
            }
            t.insert(site, window, num, den);
        }
        if !seen_header {
            return Err(MalstoneError::Table("missing header".into()));
        }
        Ok(t)
    }
}

/// Per-(site, first-visit window) increments: how many entities first
/// visited the site in that window, and how many of those were compromised
/// at or after that first visit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Increments {
    pub cells: BTreeMap<(u64, i64), (u64, u64)>,
    /// Latest timestamp over all records seen.
    pub max_ts: Option<i64>,
}

impl Increments {
    pub fn add(&mut self, site: u64, window: i64, compromised: bool) {
        let c = self.cells.entry((site, window)).or_default();
        c.0 += u64::from(compromised);
        c.1 += 1;
    }

    pub fn see_ts(&mut self, ts: i64) {
        self.max_ts = Some(self.max_ts.map_or(ts, |m| m.max(ts)));
    }

    pub fn merge(&mut self, other: &Increments) {
        for (&k, &(n, d)) in &other.cells {
            let c = self.cells.entry(k).or_default();
            c.0 += n;
            c.1 += d;
        }
        if let Some(t) = other.max_ts {
            self.see_ts(t);
        }
    }

    pub fn table_a(&self) -> RatioTable {
        let mut sums: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
        for (&(s, _), &(n, d)) in &self.cells {
            let e = sums.entry(s).or_default();
            e.0 += n;
            e.1 += d;
        }
        let mut t = RatioTable::new();
        for (s, (n, d)) in sums {
            t.insert(s, None, n, d);
        }
        t
    }

    /// Cumulative windows from each site's first window through the window
    /// holding `max_ts`.
    pub fn table_b(&self, window: &Windowing) -> RatioTable {
        let mut t = RatioTable::new();
        let Some(max_ts) = self.max_ts else {
            return t;
        };
        let last = window.index(max_ts);
        let mut by_site: BTreeMap<u64, Vec<(i64, u64, u64)>> = BTreeMap::new();
        for (&(s, k), &(n, d)) in &self.cells {
            by_site.entry(s).or_default().push((k, n, d));
        }
        for (s, cells) in by_site {
            let (mut num, mut den) = (0u64, 0u64);
            let mut it = cells.into_iter().peekable();
            let first = it.peek().map(|c| c.0).unwrap_or(last);
            for k in first..=last {
                while let Some(&(ck, n, d)) = it.peek() {
                    if ck != k {
                        break;
                    }
                    num += n;
                    den += d;
                    it.next();
                }
                t.insert(s, Some(k), num, den);
            }
        }
        t
    }
}

/// Window geometry: window `k` covers `[origin + k*width, origin + (k+1)*width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Windowing {
    pub origin: i64,
    pub width: i64,
}

impl Windowing {
    pub fn new(origin: i64, width: i64) -> Result<Self, MalstoneError> {
        if width <= 0 {
            return Err(MalstoneError::Config(format!(
                "window width must be positive, got {width}"
            )));
        }
        Ok(Self { origin, width })
    }

    pub fn index(&self, ts: i64) -> i64 {
        (ts - self.origin).div_euclid(self.width)
    }
}
