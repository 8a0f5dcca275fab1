use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used everywhere randomness is drawn. ChaCha keeps streams
/// identical across platforms and crate upgrades for a given seed.
pub type ModelRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> ModelRng {
    ChaCha8Rng::seed_from_u64(seed)
}
