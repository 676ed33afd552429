//! MalStone input generator: site-visit logs in which visits to malicious
//! sites sometimes compromise the visiting entity.

mod files;
mod generate;
mod record;

pub use files::{partition_path, read_records, split, write_records, WriteSummary};
pub use generate::{generate, GenConfig, Generator, DEFAULT_PERIOD_START};
pub use record::{EventRecord, RecordError, MAX_TIMESTAMP, MIN_TIMESTAMP, RECORD_LEN};

use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MalgenError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("{}:{line}: {source}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        source: RecordError,
    },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("partition count must be at least 1")]
    NoPartitions,
}
