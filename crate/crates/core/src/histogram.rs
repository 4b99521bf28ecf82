use std::fmt::Write as _;

const BUCKETS: usize = 41;

/// Microsecond histogram with power-of-two buckets.
///
/// Bucket 0 holds the value 0; bucket `k >= 1` holds `[2^(k-1), 2^k)`.
/// Exact count, sum, min and max are kept alongside.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    buckets: [u64; BUCKETS],
    count: u64,
    sum: u128,
    min: u64,
    max: u64,
}

impl Default for Histogram {
    fn default() -> Self {
        Histogram {
            buckets: [0; BUCKETS],
            count: 0,
            sum: 0,
            min: u64::MAX,
            max: 0,
        }
    }
}

impl Histogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bucket_of(value: u64) -> usize {
        let bits = (u64::BITS - value.leading_zeros()) as usize;
        bits.min(BUCKETS - 1)
    }

    /// Exclusive upper bound of bucket `k`.
    pub fn bucket_upper(k: usize) -> u64 {
        if k == 0 {
            1
        } else {
            1u64 << k.min(63)
        }
    }

    pub fn record(&mut self, value: u64) {
        self.buckets[Self::bucket_of(value)] += 1;
        self.count += 1;
        self.sum += value as u128;
        self.min = self.min.min(value);
        self.max = self.max.max(value);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn min(&self) -> Option<u64> {
        (self.count > 0).then_some(self.min)
    }

    pub fn max(&self) -> Option<u64> {
        (self.count > 0).then_some(self.max)
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum as f64 / self.count as f64)
    }

    pub fn buckets(&self) -> &[u64] {
        &self.buckets
    }

    /// Upper bucket bound below which at least `q` of the samples fall.
    pub fn quantile_upper_bound(&self, q: f64) -> Option<u64> {
        if self.count == 0 {
            return None;
        }
        let target = ((q.clamp(0.0, 1.0) * self.count as f64).ceil() as u64).max(1);
        let mut seen = 0;
        for (k, &n) in self.buckets.iter().enumerate() {
            seen += n;
            if seen >= target {
                return Some(Self::bucket_upper(k).min(self.max.saturating_add(1)));
            }
        }
        Some(self.max.saturating_add(1))
    }

    /// `key=value` lines: count, min, max, mean and nonempty buckets as
    /// `<upper>:<count>` pairs.
    pub fn write_key_values(&self, out: &mut String, name: &str) {
        let _ = writeln!(out, "{name}_count={}", self.count);
        let _ = writeln!(out, "{name}_min_us={}", self.min().unwrap_or(0));
        let _ = writeln!(out, "{name}_max_us={}", self.max().unwrap_or(0));
        let _ = writeln!(out, "{name}_mean_us={:.3}", self.mean().unwrap_or(0.0));
        let buckets: Vec<String> = self
            .buckets
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(k, n)| format!("{}:{}", Self::bucket_upper(k), n))
            .collect();
        let _ = writeln!(out, "{name}_hist={}", buckets.join(","));
    }
}
