//! Deterministic seed derivation. Every random stream in the crate is keyed by
//! a root seed plus a path of counters, so replicates and sub-steps never share
//! or depend on hidden global state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes `root` with each counter in `path` in order.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

pub fn rng_for(root: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, path))
}

/// Purpose tags used as the first path element.
pub mod stream {
    pub const GRAPH_ROWS: u64 = 1;
    pub const GRAPH_COLS: u64 = 2;
    pub const LATENT: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const LABELS_ROWS: u64 = 5;
    pub const LABELS_COLS: u64 = 6;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_paths_give_distinct_seeds() {
        let a = derive_seed(7, &[1, 0]);
        let b = derive_seed(7, &[1, 1]);
        let c = derive_seed(7, &[0, 1]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, &[1, 0]));
    }
}
