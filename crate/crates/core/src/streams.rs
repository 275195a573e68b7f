//! Independent child RNG streams derived from one master seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub(crate) enum Purpose {
    Count = 1,
    Monitor = 2,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct StreamFactory {
    master: u64,
}

impl StreamFactory {
    pub(crate) fn from_rng<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StreamFactory { master: rng.gen() }
    }

    /// Stream for `(round, iteration, purpose)`; rounds < 2^24, iterations < 2^32.
    pub(crate) fn child(&self, round: u64, iteration: u64, purpose: Purpose) -> ChaCha20Rng {
        debug_assert!(round < 1 << 24 && iteration < 1 << 32);
        let mut rng = ChaCha20Rng::seed_from_u64(self.master);
        rng.set_stream((round << 40) | (iteration << 8) | purpose as u64);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn children_differ_and_repeat() {
        let f = StreamFactory { master: 7 };
        let a: u64 = f.child(1, 2, Purpose::Monitor).gen();
        let b: u64 = f.child(1, 2, Purpose::Count).gen();
        let c: u64 = f.child(1, 2, Purpose::Monitor).gen();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
