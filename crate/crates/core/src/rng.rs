//! Counter-based random number generation.
//!
//! Every random draw is a pure function of `(base seed, path index, step
//! index, slot)`, so path ensembles are bit-identical regardless of thread
//! count or the order in which paths are sampled. Derived substreams (for
//! restarts and nested inner sampling) re-key the base seed instead of
//! advancing shared state.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 finalizer; full-avalanche 64-bit mixer.
#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Identity of one sampled path: a base seed plus the path's index in the
/// ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedId {
    pub base: u64,
    pub path: u64,
}

impl SeedId {
    pub fn new(base: u64, path: u64) -> Self {
        SeedId { base, path }
    }

    /// Derive an independent substream, e.g. for the k-th inner restart of
    /// this path. `tag` distinguishes substream families.
    pub fn substream(&self, tag: u64, k: u64) -> SeedId {
        let base = mix64(
            self.base
                ^ mix64(self.path.wrapping_add(GOLDEN))
                ^ mix64(tag.wrapping_mul(0xd605_0b91_f0fd_5cb7).wrapping_add(k)),
        );
        SeedId { base, path: k }
    }
}

/// Stateless counter RNG over one path's stream.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: SeedId) -> Self {
        let key = mix64(seed.base.wrapping_add(GOLDEN) ^ mix64(seed.path.wrapping_mul(0xc2b2_ae3d_27d4_eb4f)));
        CounterRng { key }
    }

    #[inline(always)]
    fn word(&self, step: u64, slot: u64) -> u64 {
        mix64(
            self.key
                ^ mix64(step.wrapping_mul(0xff51_afd7_ed55_8ccd).wrapping_add(slot)),
        )
    }

    /// Uniform in (0, 1], keyed by (step, slot).
    #[inline(always)]
    pub fn uniform(&self, step: u64, slot: u64) -> f64 {
        // 53 high bits; +1 keeps the value strictly positive for log().
        (((self.word(step, slot) >> 11) + 1) as f64) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal via Box-Muller, keyed by (step, slots 0 and 1).
    #[inline(always)]
    pub fn normal(&self, step: u64) -> f64 {
        let u1 = self.uniform(step, 0);
        let u2 = self.uniform(step, 1);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `0..n`, keyed by (step, slot).
    #[inline(always)]
    pub fn below(&self, step: u64, slot: u64, n: u64) -> u64 {
        // 64-bit multiply-shift; bias is negligible for the small n used here.
        ((self.word(step, slot) as u128 * n as u128) >> 64) as u64
    }
}
