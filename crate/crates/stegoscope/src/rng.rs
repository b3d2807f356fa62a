//! Deterministic randomness for every stochastic step in the toolkit.
//!
//! All randomness flows from one 64-bit master seed through three documented
//! derivation rules, so any run is bit-reproducible regardless of thread
//! count or iteration order:
//!
//! * [`derive`] turns a seed plus a role string (`"train-corpus"`,
//!   `"lsbm-select"`, a filename, ...) into an independent stream key.
//! * [`split`] turns a stream key plus an index (image number in a corpus,
//!   learner number in an ensemble) into a per-item seed.
//! * [`word`] turns a stream key plus a counter (pixel index) into a single
//!   64-bit word with no sequential state, so per-pixel draws do not depend
//!   on the order pixels are visited.
//!
//! The mixer is the SplitMix64 finalizer. [`Stream`] is the sequential
//! SplitMix64 generator, used only where a sequence is genuinely needed
//! (shuffles and bootstrap resampling).

/// Golden-ratio increment of the SplitMix64 sequence.
pub const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer: a bijective avalanche mix on 64 bits.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream key from `seed` and a role string.
///
/// The role bytes are folded in FNV-1a style before the final mix, so
/// distinct roles give unrelated streams even for adjacent seeds.
pub fn derive(seed: u64, role: &str) -> u64 {
    let mut h = seed ^ 0xcbf2_9ce4_8422_2325;
    for &b in role.as_bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}

/// Derives the seed for item `index` of a sequence keyed by `seed`.
///
/// Used for per-image seeds in a corpus and per-learner seeds in an
/// ensemble. `index + 1` is scaled by [`GOLDEN`] so index 0 does not
/// collapse to the parent seed.
#[inline]
pub fn split(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Stateless counter-based draw: word `counter` of the stream `key`.
///
/// This is the SplitMix64 sequence element at position `counter`, computed
/// directly, which is what makes per-pixel draws order-independent.
#[inline]
pub fn word(key: u64, counter: u64) -> u64 {
    mix64(key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Maps a 64-bit word to a double in `[0, 1)` using its top 53 bits.
#[inline]
pub fn unit_f64(w: u64) -> f64 {
    (w >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw for counter `i` of stream `key` (Box-Muller on the
/// counter pair `2i`, `2i + 1`).
pub fn normal(key: u64, i: u64) -> f64 {
    let u1 = unit_f64(word(key, 2 * i));
    let u2 = unit_f64(word(key, 2 * i + 1));
    // 1 - u1 lies in (0, 1], keeping the log finite.
    (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Sequential SplitMix64 generator for shuffles and resampling.
#[derive(Debug, Clone)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform draw in `[0, n)` via Lemire's multiply-shift with rejection,
    /// so the result is exactly uniform.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below needs a nonempty range");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(n);
            if m as u64 >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    pub fn next_unit(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        let n = xs.len();
        for i in 0..n.saturating_sub(1) {
            let j = i + self.next_below((n - i) as u64) as usize;
            xs.swap(i, j);
        }
    }

    /// Partial Fisher-Yates: after the call, the first `k` elements are a
    /// uniform ordered sample of the slice without replacement.
    pub fn partial_shuffle<T>(&mut self, xs: &mut [T], k: usize) {
        let n = xs.len();
        let k = k.min(n);
        for i in 0..k {
            let j = i + self.next_below((n - i) as u64) as usize;
            xs.swap(i, j);
        }
    }
}
