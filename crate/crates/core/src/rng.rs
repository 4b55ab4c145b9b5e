//! Counter-based deterministic random number generation with named
//! substreams.
//!
//! Every draw is `mix64(key + counter * GOLDEN)` — the SplitMix64 output
//! function applied to a keyed counter — so a stream is a pure function of
//! `(key, position)` and produces identical bits in every process.
//! Substreams derive a fresh key from `(parent key, tag)`; keying generator
//! regions and task indices by tag means adding tasks or reordering grid
//! points never perturbs the draws of existing streams.
//!
//! Not cryptographically secure; simulation use only.

/// Weyl increment for the counter walk (SplitMix64's golden-ratio constant).
const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
/// Salt folded into substream tags so `substream(0)` differs from the parent.
const SUBSTREAM_SALT: u64 = 0xA076_1D64_78BD_642F;

/// SplitMix64 finalizer: a bijective avalanche mix of the full 64-bit state.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A deterministic stream of 64-bit values addressed by `(key, counter)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    /// Root stream for a seed.
    pub fn new(seed: u64) -> Self {
        Self {
            key: mix64(seed ^ GOLDEN),
            counter: 0,
        }
    }

    /// Child stream whose draws are independent of the parent position.
    /// Derivation is pure in `(parent key, tag)`, so the same tag always
    /// yields the same substream regardless of how much the parent consumed.
    pub fn substream(&self, tag: u64) -> Stream {
        Stream {
            key: mix64(self.key ^ mix64(tag ^ SUBSTREAM_SALT)),
            counter: 0,
        }
    }

    /// A seed value for handing to an independent component, derived from a
    /// tag path without consuming this stream.
    pub fn derive_seed(&self, tags: &[u64]) -> u64 {
        let mut s = self.clone();
        for &t in tags {
            s = s.substream(t);
        }
        s.key
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, bound)` by rejection, free of modulo bias.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "next_below requires a positive bound");
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }

    /// Bernoulli draw with probability `p`.
    pub fn next_bool(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via the Box-Muller transform.
    ///
    /// Consumes exactly two uniforms per variate (the sine branch is
    /// discarded), keeping stream positions independent of the values drawn.
    pub fn next_gaussian(&mut self) -> f64 {
        // Map to (0, 1] so the log argument is never zero.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Fisher-Yates shuffle of `0..n` into a uniform random permutation.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            perm.swap(i, j);
        }
        perm
    }
}
