//! Big-endian bodies for the `ms.*` RPC methods.

use crate::topology::NodeId;

pub const M_START: &str = "ms.start";
pub const M_FETCH: &str = "ms.fetch";
pub const M_FLAGS: &str = "ms.flags";
pub const M_VISITS: &str = "ms.visits";
pub const M_DONE: &str = "ms.done";
pub const M_COUNTS: &str = "ms.counts";

pub const METHODS: [&str; 6] = [M_START, M_FETCH, M_FLAGS, M_VISITS, M_DONE, M_COUNTS];

#[derive(Debug, Default)]
pub struct Writer(pub Vec<u8>);

impl Writer {
    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.0.push(v);
        self
    }
    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.0.extend_from_slice(&v.to_be_bytes());
        self
    }
    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.extend_from_slice(&v.to_be_bytes());
        self
    }
    pub fn i64(&mut self, v: i64) -> &mut Self {
        self.0.extend_from_slice(&v.to_be_bytes());
        self
    }
    pub fn finish(self) -> Vec<u8> {
        self.0
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N], String> {
        if self.buf.len() < N {
            return Err("truncated body".into());
        }
        let (h, t) = self.buf.split_at(N);
        self.buf = t;
        Ok(h.try_into().unwrap())
    }

    pub fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take::<1>()?[0])
    }
    pub fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_be_bytes(self.take()?))
    }
    pub fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_be_bytes(self.take()?))
    }
    pub fn i64(&mut self) -> Result<i64, String> {
        Ok(i64::from_be_bytes(self.take()?))
    }

    /// Reads a u32 count and checks that `count * item_len` bytes remain.
    pub fn count(&mut self, item_len: usize) -> Result<usize, String> {
        let n = self.u32()? as usize;
        if self.buf.len() < n.saturating_mul(item_len) {
            return Err("count exceeds body".into());
        }
        Ok(n)
    }

    pub fn end(&self) -> Result<(), String> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(format!("{} trailing bytes", self.buf.len()))
        }
    }
}

/// Phase-1 start: worker roster, windowing, and this worker's fetch plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StartPlan {
    pub workers: Vec<NodeId>,
    pub origin: i64,
    /// 0 for MalStone-A.
    pub width: i64,
    pub fetch: Vec<(u32, NodeId)>,
}

impl StartPlan {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.u8(1).u32(self.workers.len() as u32);
        for n in &self.workers {
            w.u32(n.0);
        }
        w.i64(self.origin)
            .i64(self.width)
            .u32(self.fetch.len() as u32);
        for &(p, src) in &self.fetch {
            w.u32(p).u32(src.0);
        }
        w.finish()
    }

    /// Decodes after the leading phase byte.
    pub fn decode(r: &mut Reader<'_>) -> Result<Self, String> {
        let n = r.count(4)?;
        let workers = (0..n)
            .map(|_| r.u32().map(NodeId))
            .collect::<Result<_, _>>()?;
        let origin = r.i64()?;
        let width = r.i64()?;
        let n = r.count(8)?;
        let fetch = (0..n)
            .map(|_| Ok((r.u32()?, NodeId(r.u32()?))))
            .collect::<Result<_, String>>()?;
        r.end()?;
        Ok(Self {
            workers,
            origin,
            width,
            fetch,
        })
    }
}

/// Multiply-shift owner of an entity among `n` reducers.
pub fn owner_index(entity: u64, n: usize) -> usize {
    let h = entity.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    ((h as u128 * n as u128) >> 64) as usize
}
