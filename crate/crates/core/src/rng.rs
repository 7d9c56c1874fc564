use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seedable generator used throughout; ChaCha output is stable across
/// platforms and crate versions, which keeps runs reproducible.
pub type RandomSource = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> RandomSource {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a master seed and a task path
/// (e.g. model index, grid index). Pure function of its inputs, so parallel
/// tasks get the same seeds regardless of scheduling.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut h = splitmix(master);
    for &p in path {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
