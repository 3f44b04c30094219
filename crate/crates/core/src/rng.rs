//! Per-trial random streams.
//!
//! Each trial seed feeds two ChaCha8 streams: stream 0 for node coins and
//! stream 1 for the adversary. The two wrappers are distinct types, so an
//! adversary cannot be handed the nodes' coins.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NODE_STREAM: u64 = 0;
const ADVERSARY_STREAM: u64 = 1;

macro_rules! labeled_rng {
    ($name:ident, $stream:expr) => {
        #[derive(Clone, Debug)]
        pub struct $name(ChaCha8Rng);

        impl $name {
            pub fn new(seed: u64) -> Self {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream($stream);
                Self(rng)
            }
        }

        impl RngCore for $name {
            fn next_u32(&mut self) -> u32 {
                self.0.next_u32()
            }

            fn next_u64(&mut self) -> u64 {
                self.0.next_u64()
            }

            fn fill_bytes(&mut self, dest: &mut [u8]) {
                self.0.fill_bytes(dest)
            }

            fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
                self.0.try_fill_bytes(dest)
            }
        }
    };
}

labeled_rng!(NodeRng, NODE_STREAM);
labeled_rng!(AdversaryRng, ADVERSARY_STREAM);

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(mut rng: impl RngCore) -> Vec<u64> {
        (0..4).map(|_| rng.next_u64()).collect()
    }

    #[test]
    fn streams_differ_and_repeat() {
        assert_ne!(draws(NodeRng::new(7)), draws(AdversaryRng::new(7)));
        assert_eq!(draws(NodeRng::new(7)), draws(NodeRng::new(7)));
        assert_ne!(draws(NodeRng::new(7)), draws(NodeRng::new(8)));
    }
}
