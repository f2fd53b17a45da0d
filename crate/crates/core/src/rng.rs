use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream roles, so that different random inputs of one path never share draws.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Role {
    Events = 0,
    Prices = 1,
}

/// Generator for `(seed, path, role)`, independent of thread scheduling.
pub(crate) fn path_rng(seed: u64, path: u64, role: Role) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((path << 2) | role as u64);
    rng
}
