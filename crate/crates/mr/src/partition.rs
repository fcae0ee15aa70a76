use std::hash::Hasher;

use fnv::FnvHasher;

use crate::codec::Codec;

/// FNV-1a offset basis for partition routing. Changing it reshuffles every
/// key, so it is part of the on-disk contract of spill files.
pub const PARTITION_SEED: u64 = 0xcbf2_9ce4_8422_2325;

/// Stable 64-bit hash of a key's canonical bytes: FNV-1a followed by the
/// murmur3 64-bit finalizer so that the low bits are well mixed.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut hasher = FnvHasher::with_key(PARTITION_SEED);
    hasher.write(bytes);
    fmix64(hasher.finish())
}

fn fmix64(mut h: u64) -> u64 {
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^= h >> 33;
    h
}

/// Partition for an already-encoded key.
///
/// # Panics
///
/// Panics if `partitions` is zero.
pub fn partition_of_bytes(key: &[u8], partitions: usize) -> usize {
    assert!(partitions >= 1, "partitions must be at least 1");
    (stable_hash(key) % partitions as u64) as usize
}

/// Reduce partition in `[0, partitions)` for `key`. Depends only on the
/// key's canonical encoding, so it is stable across runs and processes.
pub fn partition_of<K: Codec>(key: &K, partitions: usize) -> usize {
    partition_of_bytes(&key.to_bytes(), partitions)
}
