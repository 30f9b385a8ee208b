//! Named PRNG sub-streams derived from a single root seed.
//!
//! Every random decision in the simulator draws from a stream keyed by a
//! stable name such as `"partition"` or `"client:3:r12"`, so results do not
//! depend on the order in which components execute.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

// FNV-1a; std's hasher is not stable across releases.
fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Returns the stream `name` under `seed`.
pub fn substream(seed: u64, name: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name));
    rng
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives a child seed, for components that take a plain `u64`.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    use rand::RngCore;
    substream(seed, name).next_u64()
}
