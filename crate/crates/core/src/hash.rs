//! Fixed 64-bit hashing used for feature buckets, cache keys and file digests.
//!
//! All hashing is FNV-1a over raw bytes. Feature buckets start from
//! [`FEATURE_SEED`] instead of the standard offset basis so that bucket
//! assignments are pinned independently of the digest function. Both are
//! platform independent: inputs are bytes, never native integers.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Starting state for n-gram bucket hashing.
pub const FEATURE_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy)]
pub struct Fnv64(u64);

impl Fnv64 {
    pub fn new() -> Self {
        Fnv64(FNV_OFFSET)
    }

    pub fn with_seed(seed: u64) -> Self {
        Fnv64(seed)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv64 {
    fn default() -> Self {
        Self::new()
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = Fnv64::new();
    h.update(bytes);
    h.finish()
}

/// Bucket of an n-gram in a `feature_dim`-sized hashed feature space.
pub fn feature_bucket(ngram: &str, feature_dim: usize) -> usize {
    let mut h = Fnv64::with_seed(FEATURE_SEED);
    h.update(ngram.as_bytes());
    (h.finish() % feature_dim as u64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_fnv_vectors() {
        // Reference values of 64-bit FNV-1a.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn incremental_matches_oneshot() {
        let mut h = Fnv64::new();
        h.update(b"foo");
        h.update(b"bar");
        assert_eq!(h.finish(), fnv1a64(b"foobar"));
    }

    #[test]
    fn bucket_in_range() {
        for dim in [1, 7, 1024] {
            assert!(feature_bucket("ab", dim) < dim);
        }
        assert_eq!(feature_bucket("xyz", 1), 0);
    }
}
