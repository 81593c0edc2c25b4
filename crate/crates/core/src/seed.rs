//! Seed derivation for stochastic operators.
//!
//! Every random stream is keyed by (master seed, frame id, stage index) so
//! results do not depend on scheduling order or worker count.

use rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use sha2::{Digest, Sha256};

const DOMAIN: &[u8] = b"perturbench/stage-seed/v1";

/// Derives 256 bits of generator state from the stream key.
pub fn mix(master_seed: u64, frame_id: &str, stage: usize) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(DOMAIN);
    h.update(master_seed.to_le_bytes());
    h.update((frame_id.len() as u64).to_le_bytes());
    h.update(frame_id.as_bytes());
    h.update((stage as u64).to_le_bytes());
    h.finalize().into()
}

pub fn stage_rng(master_seed: u64, frame_id: &str, stage: usize) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::from_seed(mix(master_seed, frame_id, stage))
}
