//! Counting Bloom filter over 64-bit keys.
//!
//! Probe positions use double hashing, `h1 + i * h2`, where both hashes come
//! from a 64-bit finalizer applied to the key and the filter salt.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountingBloomFilter {
    counters: Vec<u8>,
    k_hashes: u32,
    salt: u64,
    /// Removals of items the filter did not contain. Always zero when the
    /// caller only removes items it inserted.
    rejected_removals: u64,
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Pack two 32-bit fields into one filter key.
pub fn pair_key(a: u32, b: u32) -> u64 {
    ((a as u64) << 32) | b as u64
}

impl CountingBloomFilter {
    pub fn new(m_bits: usize, k_hashes: u32, salt: u64) -> Self {
        assert!(
            m_bits > 0 && k_hashes > 0,
            "filter needs at least one counter and one hash"
        );
        Self {
            counters: vec![0; m_bits],
            k_hashes,
            salt,
            rejected_removals: 0,
        }
    }

    pub fn m_bits(&self) -> usize {
        self.counters.len()
    }

    pub fn k_hashes(&self) -> u32 {
        self.k_hashes
    }

    fn positions(&self, item: u64) -> impl Iterator<Item = usize> + '_ {
        let h1 = mix64(item ^ self.salt);
        let h2 = mix64(h1 ^ 0x9e37_79b9_7f4a_7c15) | 1;
        let m = self.counters.len() as u64;
        (0..self.k_hashes as u64).map(move |i| (h1.wrapping_add(i.wrapping_mul(h2)) % m) as usize)
    }

    pub fn insert(&mut self, item: u64) {
        let pos: Vec<usize> = self.positions(item).collect();
        for p in pos {
            self.counters[p] = self.counters[p].saturating_add(1);
        }
    }

    pub fn contains(&self, item: u64) -> bool {
        self.positions(item).all(|p| self.counters[p] > 0)
    }

    /// Decrement the item's counters. Returns false, leaving the filter
    /// untouched, when the item cannot be present: some counter is zero, or
    /// lower than the number of the item's hashes landing on it.
    pub fn remove(&mut self, item: u64) -> bool {
        if !self.contains(item) {
            debug_assert!(false, "removal of an item absent from the counting filter");
            self.rejected_removals += 1;
            return false;
        }
        let mut pos: Vec<usize> = self.positions(item).collect();
        pos.sort_unstable();
        let fits = pos.chunk_by(|a, b| a == b).all(|run| {
            let c = self.counters[run[0]];
            c == u8::MAX || c as usize >= run.len()
        });
        if !fits {
            self.rejected_removals += 1;
            return false;
        }
        for p in pos {
            // Saturated counters stay put: their true count is unknown.
            if self.counters[p] != u8::MAX {
                self.counters[p] -= 1;
            }
        }
        true
    }

    pub fn is_empty(&self) -> bool {
        self.counters.iter().all(|&c| c == 0)
    }

    pub fn rejected_removals(&self) -> u64 {
        self.rejected_removals
    }

    /// False-positive rate after `n` insertions: (1 - e^(-k n / m))^k.
    pub fn theoretical_fpr(m_bits: usize, k_hashes: u32, n: usize) -> f64 {
        let k = k_hashes as f64;
        (1.0 - (-k * n as f64 / m_bits as f64).exp()).powf(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inserted_items_are_found() {
        let mut f = CountingBloomFilter::new(1000, 4, 1);
        f.insert(42);
        assert!(f.contains(42));
    }

    #[test]
    fn remove_only_item_clears() {
        let mut f = CountingBloomFilter::new(1000, 4, 1);
        f.insert(42);
        assert!(f.remove(42));
        assert!(!f.contains(42));
        assert!(f.is_empty());
    }

    #[test]
    fn theoretical_rate() {
        let p = CountingBloomFilter::theoretical_fpr(10_000, 7, 1000);
        assert!((p - 0.00819).abs() < 5e-5, "{p}");
    }

    #[test]
    #[cfg(not(debug_assertions))]
    fn absent_removal_rejected() {
        let mut f = CountingBloomFilter::new(1000, 4, 1);
        assert!(!f.remove(7));
        assert_eq!(f.rejected_removals(), 1);
    }

    #[test]
    #[cfg(debug_assertions)]
    #[should_panic(expected = "absent")]
    fn absent_removal_flagged_in_debug() {
        let mut f = CountingBloomFilter::new(1000, 4, 1);
        f.remove(7);
    }
}
