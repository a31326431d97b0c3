//! Splittable, counter-addressed random streams.
//!
//! A [`StreamKey`] is a 64-bit key that can be split deterministically by
//! hashing in a tag (run index, arm, ...). A key is expanded into a ChaCha8
//! block cipher key; the cipher's 64-bit stream id selects a [`Purpose`] and
//! the block counter is positioned at the time step. Any `(key, purpose, t)`
//! triple therefore addresses a fixed, independent sequence of draws no matter
//! in which order runs or steps are evaluated.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// What a sub-stream is used for. Distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Scenario = 1,
    Round = 2,
    Reward = 3,
    Policy = 4,
    Margin = 5,
    Sensing = 6,
    Oracle = 7,
    Misc = 8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        StreamKey(mix64(seed.wrapping_add(GOLDEN_GAMMA)))
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    /// Derives an independent child key. `child(a)` never depends on any
    /// sibling, so run `k` of an experiment is the same whatever the run count.
    pub fn child(self, tag: u64) -> Self {
        StreamKey(mix64(self.0 ^ mix64(tag.wrapping_mul(GOLDEN_GAMMA).wrapping_add(0x632b_e59b_d9b4_e019))))
    }

    /// Stream positioned at the start of `(purpose, t)`.
    pub fn stream_at(self, purpose: Purpose, t: u64) -> RandomStream {
        let mut rng = ChaCha8Rng::from_seed(self.seed_bytes());
        rng.set_stream(purpose as u64);
        // 2^32 words of headroom per step.
        rng.set_word_pos((t as u128) << 32);
        RandomStream { rng }
    }

    pub fn stream(self, purpose: Purpose) -> RandomStream {
        self.stream_at(purpose, 0)
    }

    fn seed_bytes(self) -> [u8; 32] {
        let mut out = [0u8; 32];
        let mut state = self.0;
        for chunk in out.chunks_exact_mut(8) {
            state = state.wrapping_add(GOLDEN_GAMMA);
            chunk.copy_from_slice(&mix64(state).to_le_bytes());
        }
        out
    }
}

/// A positioned random sequence. Cloning forks an identical copy.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn from_seed(seed: u64) -> Self {
        StreamKey::new(seed).stream(Purpose::Misc)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.standard_normal();
        }
    }

    pub fn standard_normal_vec(&mut self, dim: usize) -> alloc::vec::Vec<f64> {
        let mut v = alloc::vec![0.0; dim];
        self.fill_standard_normal(&mut v);
        v
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
