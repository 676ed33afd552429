use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::record::{EventRecord, RECORD_LEN};
use super::MalgenError;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MalgenError + '_ {
    move |source| MalgenError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteSummary {
    pub records: u64,
    pub compromised: u64,
    pub bytes: u64,
}

pub fn write_records(
    path: &Path,
    records: impl IntoIterator<Item = EventRecord>,
) -> Result<WriteSummary, MalgenError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::with_capacity(1 << 20, f);
    let mut buf = Vec::with_capacity(RECORD_LEN * 1024);
    let mut sum = WriteSummary::default();
    for r in records {
        r.write_to(&mut buf)?;
        sum.records += 1;
        sum.compromised += u64::from(r.compromised);
        if buf.len() >= RECORD_LEN * 1024 {
            w.write_all(&buf).map_err(io_err(path))?;
            buf.clear();
        }
    }
    w.write_all(&buf).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))?;
    sum.bytes = sum.records * RECORD_LEN as u64;
    Ok(sum)
}

/// Reads and parses every line of a record file.
pub fn read_records(path: &Path) -> Result<Vec<EventRecord>, MalgenError> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut rdr = BufReader::with_capacity(1 << 20, f);
    let mut out = Vec::new();
    let mut line = Vec::with_capacity(RECORD_LEN);
    let mut n = 0u64;
    loop {
        line.clear();
        if rdr.read_until(b'\n', &mut line).map_err(io_err(path))? == 0 {
            return Ok(out);
        }
        n += 1;
        let r = EventRecord::parse(&line).map_err(|source| MalgenError::Parse {
            path: path.to_path_buf(),
            line: n,
            source,
        })?;
        out.push(r);
    }
}

/// `dir/<stem>.part-NNN`
pub fn partition_path(input: &Path, dir: &Path, i: usize) -> PathBuf {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "records".into());
    dir.join(format!("{stem}.part-{i:03}"))
}

/// Deals lines round-robin into `k` partition files under `out_dir`.
pub fn split(input: &Path, k: usize, out_dir: &Path) -> Result<Vec<PathBuf>, MalgenError> {
    if k == 0 {
        return Err(MalgenError::NoPartitions);
    }
    let f = File::open(input).map_err(io_err(input))?;
    let mut rdr = BufReader::with_capacity(1 << 20, f);
    let paths: Vec<PathBuf> = (0..k).map(|i| partition_path(input, out_dir, i)).collect();
    let mut writers = paths
        .iter()
        .map(|p| Ok(BufWriter::new(File::create(p).map_err(io_err(p))?)))
        .collect::<Result<Vec<_>, MalgenError>>()?;
    let mut line = Vec::with_capacity(RECORD_LEN);
    let mut i = 0usize;
    loop {
        line.clear();
        if rdr.read_until(b'\n', &mut line).map_err(io_err(input))? == 0 {
            break;
        }
        writers[i % k]
            .write_all(&line)
            .map_err(io_err(&paths[i % k]))?;
        i += 1;
    }
    for (w, p) in writers.iter_mut().zip(&paths) {
        w.flush().map_err(io_err(p))?;
    }
    Ok(paths)
}
