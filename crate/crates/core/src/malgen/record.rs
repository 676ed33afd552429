//! Fixed-width 100-byte event records:
//!
//! ```text
//! 00000000000000000042|2008-01-03T17:04:11|000000000000000000000007|0|0000000000000000000000000001234
//! ```
//!
//! event id (20 digits), ISO-8601 timestamp (19), site id (24), flag (1),
//! entity id (31), newline.

use chrono::{DateTime, NaiveDateTime};
use thiserror::Error;

pub const RECORD_LEN: usize = 100;

const EVENT_W: usize = 20;
const TS_W: usize = 19;
const SITE_W: usize = 24;
const ENTITY_W: usize = 31;

const TS_OFF: usize = EVENT_W + 1;
const SITE_OFF: usize = TS_OFF + TS_W + 1;
const FLAG_OFF: usize = SITE_OFF + SITE_W + 1;
const ENTITY_OFF: usize = FLAG_OFF + 2;

const TS_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// 0000-01-01T00:00:00 and 9999-12-31T23:59:59: the range a four-digit
/// year can express.
pub const MIN_TIMESTAMP: i64 = -62_167_219_200;
pub const MAX_TIMESTAMP: i64 = 253_402_300_799;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventRecord {
    pub event_id: u64,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub site_id: u64,
    pub compromised: bool,
    pub entity_id: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecordError {
    #[error("wrong record length: {0} bytes")]
    WrongLength(usize),
    #[error("expected '{expected}' at byte {at}")]
    BadSeparator { at: usize, expected: char },
    #[error("non-digit in {0}")]
    NonDigit(&'static str),
    #[error("{0} out of range")]
    OutOfRange(&'static str),
    #[error("flag must be 0 or 1, got {0:?}")]
    BadFlag(char),
    #[error("bad timestamp {0:?}")]
    BadTimestamp(String),
}

fn format_ts(ts: i64) -> Result<String, RecordError> {
    if !(MIN_TIMESTAMP..=MAX_TIMESTAMP).contains(&ts) {
        return Err(RecordError::OutOfRange("timestamp"));
    }
    let dt = DateTime::from_timestamp(ts, 0).ok_or(RecordError::OutOfRange("timestamp"))?;
    Ok(dt.naive_utc().format(TS_FORMAT).to_string())
}

impl EventRecord {
    /// Appends the 100-byte line, newline included.
    pub fn write_to(&self, out: &mut Vec<u8>) -> Result<(), RecordError> {
        let ts = format_ts(self.timestamp)?;
        let before = out.len();
        use std::io::Write;
        writeln!(
            out,
            "{:020}|{}|{:024}|{}|{:031}",
            self.event_id,
            ts,
            self.site_id,
            u8::from(self.compromised),
            self.entity_id
        )
        .expect("writing to a Vec cannot fail");
        debug_assert_eq!(out.len() - before, RECORD_LEN);
        Ok(())
    }

    pub fn format(&self) -> Result<String, RecordError> {
        let mut v = Vec::with_capacity(RECORD_LEN);
        self.write_to(&mut v)?;
        Ok(String::from_utf8(v).unwrap())
    }

    /// Parses one line. The trailing newline is required.
    pub fn parse(line: &[u8]) -> Result<Self, RecordError> {
        if line.len() != RECORD_LEN {
            return Err(RecordError::WrongLength(line.len()));
        }
        for (at, expected) in [
            (EVENT_W, '|'),
            (SITE_OFF - 1, '|'),
            (FLAG_OFF - 1, '|'),
            (FLAG_OFF + 1, '|'),
            (RECORD_LEN - 1, '\n'),
        ] {
            if line[at] != expected as u8 {
                return Err(RecordError::BadSeparator { at, expected });
            }
        }
        let event_id = digits(&line[..EVENT_W], "event_id")?;
        let ts_text = std::str::from_utf8(&line[TS_OFF..TS_OFF + TS_W]).map_err(|_| {
            RecordError::BadTimestamp(String::from_utf8_lossy(&line[TS_OFF..TS_OFF + TS_W]).into())
        })?;
        let timestamp = NaiveDateTime::parse_from_str(ts_text, TS_FORMAT)
            .ok()
            .filter(|_| {
                ts_text.len() == TS_W && ts_text.as_bytes()[..4].iter().all(u8::is_ascii_digit)
            })
            .ok_or_else(|| RecordError::BadTimestamp(ts_text.to_string()))?
            .and_utc()
            .timestamp();
        let site_id = digits(&line[SITE_OFF..SITE_OFF + SITE_W], "site_id")?;
        let compromised = match line[FLAG_OFF] {
            b'0' => false,
            b'1' => true,
            b => return Err(RecordError::BadFlag(b as char)),
        };
        let entity_id = digits(&line[ENTITY_OFF..ENTITY_OFF + ENTITY_W], "entity_id")?;
        Ok(Self {
            event_id,
            timestamp,
            site_id,
            compromised,
            entity_id,
        })
    }
}

fn digits(field: &[u8], name: &'static str) -> Result<u64, RecordError> {
    let mut v: u64 = 0;
    for &b in field {
        if !b.is_ascii_digit() {
            return Err(RecordError::NonDigit(name));
        }
        v = v
            .checked_mul(10)
            .and_then(|v| v.checked_add(u64::from(b - b'0')))
            .ok_or(RecordError::OutOfRange(name))?;
    }
    Ok(v)
}
