//! Seedable PRNG used by the simulator, id generation and load profiles.
//!
//! SplitMix64 is tiny, fast and trivially reproducible in any language, which
//! keeps golden values stable forever.

/// SplitMix64 generator (public-domain algorithm by Sebastiano Vigna).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn next_in_range(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        let span = hi - lo + 1;
        lo + (self.next_f64() * span as f64) as u64
    }

    /// Triangular distribution via inverse CDF, rounded to the nearest integer.
    pub fn next_triangular(&mut self, min: u64, mode: u64, max: u64) -> u64 {
        debug_assert!(min <= mode && mode <= max);
        if min == max {
            return min;
        }
        let (a, c, b) = (min as f64, mode as f64, max as f64);
        let u = self.next_f64();
        let fc = (c - a) / (b - a);
        let x = if u < fc {
            a + (u * (b - a) * (c - a)).sqrt()
        } else {
            b - ((1.0 - u) * (b - a) * (b - c)).sqrt()
        };
        x.round() as u64
    }

    /// Derive an independent stream for a named sub-component.
    pub fn fork(&self, label: &str) -> SplitMix64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        SplitMix64::new(self.state ^ h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_stream() {
        let mut a = SplitMix64::new(7);
        let mut b = SplitMix64::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_seeds_diverge() {
        let mut a = SplitMix64::new(1);
        let mut b = SplitMix64::new(2);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn f64_in_unit_interval() {
        let mut r = SplitMix64::new(99);
        for _ in 0..10_000 {
            let v = r.next_f64();
            assert!((0.0..1.0).contains(&v));
        }
    }

    #[test]
    fn triangular_within_bounds_and_deterministic() {
        let mut r = SplitMix64::new(5);
        let mut sum = 0u64;
        for _ in 0..1000 {
            let v = r.next_triangular(100, 500, 2000);
            assert!((100..=2000).contains(&v));
            sum += v;
        }
        // Mean of tri(100, 500, 2000) is ~866; allow a generous band.
        let mean = sum as f64 / 1000.0;
        assert!((700.0..1050.0).contains(&mean), "mean {mean}");
    }

    #[test]
    fn fork_streams_independent() {
        let base = SplitMix64::new(42);
        let mut a = base.fork("alpha");
        let mut b = base.fork("beta");
        assert_ne!(a.next_u64(), b.next_u64());
    }
}
