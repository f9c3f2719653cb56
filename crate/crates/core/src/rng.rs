//! Deterministic stream derivation. Every randomness consumer gets its own
//! stream keyed by (scenario seed, purpose, index) so that adding robots or
//! toggling features never perturbs unrelated draws.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche, stable across platforms.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, purpose: &str, index: u64) -> u64 {
    let mut h = mix(seed);
    for b in purpose.as_bytes() {
        h = mix(h ^ u64::from(*b));
    }
    mix(h ^ index)
}

pub fn stream(seed: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, purpose, index))
}

/// Stateless Bernoulli draw keyed by message coordinates; used for packet
/// delivery so that unrelated traffic never shifts the outcome.
pub fn hash_bernoulli(key: u64, p: f64) -> bool {
    if p >= 1.0 {
        return true;
    }
    if p <= 0.0 {
        return false;
    }
    let u = mix(key) as f64 / u64::MAX as f64;
    u < p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_stable() {
        assert_eq!(derive(42, "lidar", 3), derive(42, "lidar", 3));
        assert_ne!(derive(42, "lidar", 3), derive(42, "lidar", 4));
        assert_ne!(derive(42, "lidar", 3), derive(42, "comms", 3));
        assert_ne!(derive(42, "lidar", 3), derive(43, "lidar", 3));
    }

    #[test]
    fn bernoulli_extremes() {
        assert!(hash_bernoulli(123, 1.0));
        assert!(!hash_bernoulli(123, 0.0));
    }
}
