use std::time::Duration;

use rand::Rng;

/// One-way propagation delay of a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Latency {
    Fixed(Duration),
    /// Uniform over the closed range.
    Uniform(Duration, Duration),
}

impl Latency {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Duration {
        match *self {
            Latency::Fixed(d) => d,
            Latency::Uniform(lo, hi) if lo == hi => lo,
            Latency::Uniform(lo, hi) => {
                let ns = rng.random_range(lo.as_nanos() as u64..=hi.as_nanos() as u64);
                Duration::from_nanos(ns)
            }
        }
    }

    pub fn max(&self) -> Duration {
        match *self {
            Latency::Fixed(d) => d,
            Latency::Uniform(_, hi) => hi,
        }
    }
}

impl Default for Latency {
    fn default() -> Self {
        Latency::Fixed(Duration::ZERO)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub latency: Latency,
    pub loss_prob: f64,
    /// Bytes per second; 0 means unlimited.
    pub bandwidth: u64,
    pub duplicate_prob: f64,
    /// Extra uniform delay in `[0, reorder_jitter]` per traversal.
    pub reorder_jitter: Duration,
}

impl Default for LinkSpec {
    fn default() -> Self {
        Self {
            latency: Latency::default(),
            loss_prob: 0.0,
            bandwidth: 0,
            duplicate_prob: 0.0,
            reorder_jitter: Duration::ZERO,
        }
    }
}

impl LinkSpec {
    pub fn fixed(latency: Duration) -> Self {
        Self {
            latency: Latency::Fixed(latency),
            ..Self::default()
        }
    }

    pub fn with_loss(mut self, p: f64) -> Self {
        self.loss_prob = p;
        self
    }

    pub fn with_bandwidth(mut self, bytes_per_sec: u64) -> Self {
        self.bandwidth = bytes_per_sec;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(format!("loss_prob {} outside [0, 1]", self.loss_prob));
        }
        if !(0.0..=1.0).contains(&self.duplicate_prob) {
            return Err(format!(
                "duplicate_prob {} outside [0, 1]",
                self.duplicate_prob
            ));
        }
        if let Latency::Uniform(lo, hi) = self.latency {
            if lo > hi {
                return Err(format!("latency range {lo:?}..{hi:?} is reversed"));
            }
        }
        Ok(())
    }

    /// Time to clock `bytes` onto the link.
    pub fn serialization(&self, bytes: usize) -> Duration {
        if self.bandwidth == 0 {
            return Duration::ZERO;
        }
        let ns = (bytes as u128 * 1_000_000_000).div_ceil(self.bandwidth as u128);
        Duration::from_nanos(ns as u64)
    }
}
