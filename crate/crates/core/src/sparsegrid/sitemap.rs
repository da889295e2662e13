use crate::geometry::Site;

const EMPTY: u32 = u32::MAX;

/// Open-addressing (linear probing) map from voxel site to row index.
/// Built once per site set and then read-only.
#[derive(Clone, Debug)]
pub struct SiteMap {
    keys: Vec<Site>,
    vals: Vec<u32>,
    mask: usize,
    len: usize,
}

#[inline]
fn hash(s: &Site) -> usize {
    // large odd multipliers, then a final avalanche
    let mut h = (s[0] as u32 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (s[1] as u32 as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (s[2] as u32 as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    h ^= h >> 29;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 32;
    h as usize
}

impl SiteMap {
    pub fn with_capacity(n: usize) -> Self {
        let cap = (n * 2).max(8).next_power_of_two();
        Self { keys: vec![[0; 3]; cap], vals: vec![EMPTY; cap], mask: cap - 1, len: 0 }
    }

    /// Maps each site to its position in `sites`; on duplicates the first
    /// occurrence wins.
    pub fn build(sites: &[Site]) -> Self {
        let mut m = Self::with_capacity(sites.len());
        for (i, s) in sites.iter().enumerate() {
            m.insert(*s, i as u32);
        }
        m
    }

    /// Inserts if absent; returns the index stored for `site`.
    pub fn insert(&mut self, site: Site, index: u32) -> u32 {
        if (self.len + 1) * 2 > self.keys.len() {
            self.grow();
        }
        let mut slot = hash(&site) & self.mask;
        loop {
            if self.vals[slot] == EMPTY {
                self.keys[slot] = site;
                self.vals[slot] = index;
                self.len += 1;
                return index;
            }
            if self.keys[slot] == site {
                return self.vals[slot];
            }
            slot = (slot + 1) & self.mask;
        }
    }

    fn grow(&mut self) {
        let old_keys = std::mem::take(&mut self.keys);
        let old_vals = std::mem::take(&mut self.vals);
        let cap = old_keys.len() * 2;
        self.keys = vec![[0; 3]; cap];
        self.vals = vec![EMPTY; cap];
        self.mask = cap - 1;
        self.len = 0;
        for (k, v) in old_keys.into_iter().zip(old_vals) {
            if v != EMPTY {
                self.insert(k, v);
            }
        }
    }

    #[inline]
    pub fn get(&self, site: &Site) -> Option<usize> {
        let mut slot = hash(site) & self.mask;
        loop {
            let v = self.vals[slot];
            if v == EMPTY {
                return None;
            }
            if self.keys[slot] == *site {
                return Some(v as usize);
            }
            slot = (slot + 1) & self.mask;
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn agrees_with_btreemap(sites in prop::collection::vec(prop::array::uniform3(-20i32..20), 0..300)) {
            let map = SiteMap::build(&sites);
            let mut reference = std::collections::BTreeMap::new();
            for (i, s) in sites.iter().enumerate() {
                reference.entry(*s).or_insert(i);
            }
            prop_assert_eq!(map.len(), reference.len());
            for (s, i) in &reference {
                prop_assert_eq!(map.get(s), Some(*i));
            }
            prop_assert_eq!(map.get(&[100, 100, 100]), None);
        }
    }

    #[test]
    fn grows_past_initial_capacity() {
        let mut m = SiteMap::with_capacity(1);
        for i in 0..1000 {
            m.insert([i, -i, i * 7], i as u32);
        }
        assert_eq!(m.len(), 1000);
        assert_eq!(m.get(&[500, -500, 3500]), Some(500));
    }
}
