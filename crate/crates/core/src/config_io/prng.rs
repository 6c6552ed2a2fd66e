//! Shared deterministic generator.
//!
//! The algorithm is SplitMix64 (Steele, Lea and Flood), one 64-bit word of
//! state:
//!
//! ```text
//! state = state + 0x9E3779B97F4A7C15            (wrapping)
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9      (wrapping)
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB      (wrapping)
//! return z ^ (z >> 31)
//! ```
//!
//! A binary32 draw in `[lo, hi)` takes the top 24 bits `u = raw >> 40` and
//! evaluates `lo + (hi - lo) * u / 2^24` in binary64, rounding once to
//! binary32. Golden vectors live in `tests/data/prng_golden.txt`.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prng {
    state: u64,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Next value in `[lo, hi)`; returns `lo` when `lo == hi`.
    pub fn uniform(&mut self, lo: f32, hi: f32) -> f32 {
        debug_assert!(lo <= hi);
        let unit = (self.next_u64() >> 40) as f64 / (1u64 << 24) as f64;
        if lo == hi {
            return lo;
        }
        let v = (lo as f64 + (hi as f64 - lo as f64) * unit) as f32;
        if v >= hi {
            hi.next_down().max(lo)
        } else {
            v
        }
    }

    /// Fills a vector with `len` draws from `[lo, hi)`.
    pub fn uniform_vec(&mut self, len: usize, lo: f32, hi: f32) -> Vec<f32> {
        (0..len).map(|_| self.uniform(lo, hi)).collect()
    }
}

/// Free-function form of [`Prng::uniform`].
pub fn prng_uniform(state: &mut Prng, lo: f32, hi: f32) -> f32 {
    state.uniform(lo, hi)
}
