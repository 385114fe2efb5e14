use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// What a random stream is used for. Each purpose gets its own ChaCha key, so
/// changing how many points one consumer draws never shifts another's stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub(crate) enum Purpose {
    Init = 1,
    Interior = 2,
    Boundary = 3,
    Test = 4,
}

/// ChaCha20 keyed by `(seed, purpose)` on stream `draw`.
pub(crate) fn keyed(seed: u64, purpose: Purpose, draw: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(draw);
    rng
}
