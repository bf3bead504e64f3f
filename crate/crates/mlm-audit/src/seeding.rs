//! Deterministic derivation of per-purpose RNG streams from one master seed.
//!
//! Every randomized stage (train/test split, background sampling, LIME
//! perturbations, protocol resampling) owns a stream derived from
//! `(master seed, label)`. Streams are independent of call order, so adding
//! or removing one stage never perturbs another — the property the
//! end-to-end determinism guarantees rest on.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Derive a child seed from `master` and a purpose label.
///
/// FNV-1a over the label bytes, mixed with the master seed through a
/// SplitMix64 finalizer. Stable across platforms and releases; collisions
/// between distinct labels are as unlikely as 64-bit hash collisions get.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET;
    for &b in label.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(master ^ h)
}

/// RNG for the stream identified by `(master, label)`.
pub fn stream(master: u64, label: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(master, label))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_inputs_same_stream() {
        let mut a = stream(42, "split");
        let mut b = stream(42, "split");
        for _ in 0..32 {
            assert_eq!(a.gen::<u64>(), b.gen::<u64>());
        }
    }

    #[test]
    fn distinct_labels_distinct_streams() {
        assert_ne!(derive_seed(42, "split"), derive_seed(42, "lime"));
        assert_ne!(derive_seed(42, "split"), derive_seed(43, "split"));
        // label structure matters, not just content hash of the prefix
        assert_ne!(derive_seed(7, "eval/ne/0"), derive_seed(7, "eval/ne/1"));
    }
}
