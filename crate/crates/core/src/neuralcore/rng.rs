use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Seeded random stream.
///
/// Backed by ChaCha8, a counter-based generator whose output depends only on
/// (key, stream, position), so the same seed yields the same sequence on
/// every platform. The full position is exposed through [`RngState`] for
/// checkpointing.
#[derive(Clone, Debug, PartialEq)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

/// Complete, serializable position of an [`RngStream`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub key: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream keyed by SHA-256 of a label and a seed; used to give every
    /// (experiment, language, seed) triple an independent generator.
    pub fn derive(label: &str, seed: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(label.as_bytes());
        hasher.update([0u8]);
        hasher.update(seed.to_le_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        Self {
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    /// Child stream for a named sub-task; does not advance `self`.
    pub fn fork(&self, label: &str) -> Self {
        let st = self.state();
        let mut hasher = Sha256::new();
        hasher.update(st.key);
        hasher.update(st.stream.to_le_bytes());
        hasher.update(st.word_pos.to_le_bytes());
        hasher.update(label.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        Self {
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn state(&self) -> RngState {
        RngState {
            key: self.inner.get_seed(),
            stream: self.inner.get_stream(),
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn from_state(state: RngState) -> Self {
        let mut inner = ChaCha8Rng::from_seed(state.key);
        inner.set_stream(state.stream);
        inner.set_word_pos(state.word_pos);
        Self { inner }
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngStream::new(42);
        let mut b = RngStream::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_ne!(RngStream::new(1).next_u64(), RngStream::new(2).next_u64());
    }

    #[test]
    fn frozen_first_outputs() {
        // Pinned so a dependency bump that changes the stream is noticed.
        assert_eq!(RngStream::new(0).next_u64(), 13080132717333068652);
        assert_eq!(RngStream::derive("exp/nest", 3).next_u64(), 5230556902550422603);
    }

    #[test]
    fn state_round_trip_resumes_exactly() {
        let mut a = RngStream::derive("exp/nest", 3);
        for _ in 0..37 {
            a.next_u32();
        }
        let mut b = RngStream::from_state(a.state());
        for _ in 0..50 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn derived_streams_differ() {
        let mut a = RngStream::derive("exp/nest", 1);
        let mut b = RngStream::derive("exp/flat", 1);
        let mut c = RngStream::derive("exp/nest", 2);
        let (x, y, z) = (a.next_u64(), b.next_u64(), c.next_u64());
        assert!(x != y && x != z && y != z);
    }
}
