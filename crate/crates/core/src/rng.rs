//! Seed derivation for reproducible, order-independent random substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keep substreams for different draws independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ResampleIndices = 1,
    PenaltyWeights = 2,
    Topology = 3,
    Precision = 4,
    Sampling = 5,
    Replicate = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed, an index and a purpose tag into a child seed.
pub fn derive_seed(master: u64, index: u64, stream: Stream) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    splitmix64(b ^ (stream as u64).wrapping_mul(0x8CB9_2BA7_2F3D_8DD7))
}

pub fn substream(master: u64, index: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, index, stream))
}
