/// Sliding record of delivered sequence numbers for one peer session.
///
/// Tracks the highest delivered sequence and a bitmap of the `size`
/// sequences at or below it. Anything further behind is treated as already
/// delivered; the sender keeps its outstanding sequences within one window
/// so a live message is never that old.
#[derive(Debug, Clone)]
pub struct DedupWindow {
    size: u32,
    highest: Option<u32>,
    bits: Vec<u64>,
}

impl DedupWindow {
    pub fn new(size: u32) -> Self {
        assert!(size > 0, "dedup window must be nonzero");
        let words = size.div_ceil(64) as usize;
        Self {
            size,
            highest: None,
            bits: vec![0; words],
        }
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn highest(&self) -> Option<u32> {
        self.highest
    }

    fn slot(&self, seq: u32) -> (usize, u64) {
        let i = seq % self.size;
        ((i / 64) as usize, 1u64 << (i % 64))
    }

    fn clear(&mut self, seq: u32) {
        let (w, m) = self.slot(seq);
        self.bits[w] &= !m;
    }

    /// Whether `seq` counts as delivered.
    pub fn contains(&self, seq: u32) -> bool {
        match self.highest {
            None => false,
            Some(h) if seq > h => false,
            Some(h) if h - seq >= self.size => true,
            Some(_) => {
                let (w, m) = self.slot(seq);
                self.bits[w] & m != 0
            }
        }
    }

    /// Records `seq` as delivered. Returns `false` if it already was.
    pub fn insert(&mut self, seq: u32) -> bool {
        match self.highest {
            Some(h) if seq <= h => {
                if h - seq >= self.size {
                    return false;
                }
                let (w, m) = self.slot(seq);
                if self.bits[w] & m != 0 {
                    return false;
                }
                self.bits[w] |= m;
                true
            }
            prev => {
                let advance = prev.map_or(u64::MAX, |h| u64::from(seq - h));
                if advance >= u64::from(self.size) {
                    self.bits.iter_mut().for_each(|w| *w = 0);
                } else {
                    let h = prev.unwrap();
                    for s in h + 1..=seq {
                        self.clear(s);
                    }
                }
                self.highest = Some(seq);
                let (w, m) = self.slot(seq);
                self.bits[w] |= m;
                true
            }
        }
    }

    /// Number of sequences currently marked inside the window.
    pub fn marked(&self) -> u32 {
        self.bits.iter().map(|w| w.count_ones()).sum()
    }
}
