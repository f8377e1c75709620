//! Deterministic seed derivation.
//!
//! Every stochastic task (a data split, a fold assignment, a bootstrap
//! replicate) receives its own RNG seeded from the master seed and the task's
//! position in the work tree. Results are therefore reproducible regardless of
//! how tasks are scheduled across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; good avalanche behaviour for small structured inputs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `parent` and a path of indices.
pub fn child_seed(parent: u64, path: &[u64]) -> u64 {
    let mut s = mix(parent);
    for &p in path {
        s = mix(s ^ mix(p));
    }
    s
}

/// RNG for the task identified by `path` under `master`.
pub fn task_rng(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(master, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn child_seeds_are_distinct_and_stable() {
        let a = child_seed(7, &[0, 1]);
        let b = child_seed(7, &[0, 2]);
        let c = child_seed(7, &[1, 0]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(b, c);
        // Stable across calls.
        assert_eq!(a, child_seed(7, &[0, 1]));
        // Path structure matters, not just the multiset of indices.
        assert_ne!(child_seed(7, &[1, 2]), child_seed(7, &[2, 1]));
    }

    #[test]
    fn rng_streams_differ_between_tasks() {
        use rand::RngCore;
        let mut r1 = task_rng(42, &[0]);
        let mut r2 = task_rng(42, &[1]);
        assert_ne!(r1.next_u64(), r2.next_u64());
    }
}
