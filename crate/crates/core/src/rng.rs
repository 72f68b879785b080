//! Seeded random streams.
//!
//! Every consumer derives its generator from `(seed, domain, index)`, so
//! chains, prediction draws and simulation replicates never share a stream
//! and each is reproducible on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DOMAIN_CHAINS: u64 = 1;
pub const DOMAIN_LATENT_CHAINS: u64 = 2;
pub const DOMAIN_PREDICTION: u64 = 3;
pub const DOMAIN_PRIOR_PREDICTIVE: u64 = 4;
pub const DOMAIN_SIMULATION: u64 = 5;
pub const DOMAIN_ELICITATION: u64 = 6;
pub const DOMAIN_EXPERIMENT: u64 = 7;

pub fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: u64 = stream_rng(1, DOMAIN_CHAINS, 0).random();
        let b: u64 = stream_rng(1, DOMAIN_CHAINS, 1).random();
        let c: u64 = stream_rng(1, DOMAIN_PREDICTION, 0).random();
        let a2: u64 = stream_rng(1, DOMAIN_CHAINS, 0).random();
        assert_eq!(a, a2);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }
}
