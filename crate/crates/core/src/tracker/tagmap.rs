use std::collections::BTreeMap;

pub const PAGE_SIZE: u64 = 4096;

/// Byte-granular memory shadow. Pages are allocated on first nonzero write;
/// absent bytes carry tag 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tagmap {
    pages: BTreeMap<u64, Box<[u8]>>,
}

impl Tagmap {
    pub fn new() -> Tagmap {
        Tagmap::default()
    }

    pub fn get(&self, addr: u64) -> u8 {
        self.pages
            .get(&(addr / PAGE_SIZE))
            .map_or(0, |p| p[(addr % PAGE_SIZE) as usize])
    }

    pub fn set(&mut self, addr: u64, tag: u8) {
        let page = addr / PAGE_SIZE;
        if tag == 0 && !self.pages.contains_key(&page) {
            return;
        }
        let p = self
            .pages
            .entry(page)
            .or_insert_with(|| vec![0u8; PAGE_SIZE as usize].into_boxed_slice());
        p[(addr % PAGE_SIZE) as usize] = tag;
    }

    /// OR of the `sz` tags starting at `addr`.
    pub fn get_taint(&self, addr: u64, sz: u64) -> u8 {
        (0..sz).fold(0, |acc, i| acc | self.get(addr.wrapping_add(i)))
    }

    /// Sets each of the `sz` tags starting at `addr` to `tag`.
    pub fn set_taint(&mut self, addr: u64, tag: u8, sz: u64) {
        for i in 0..sz {
            self.set(addr.wrapping_add(i), tag);
        }
    }

    pub fn read(&self, addr: u64, n: u64) -> Vec<u8> {
        (0..n).map(|i| self.get(addr.wrapping_add(i))).collect()
    }

    pub fn write(&mut self, addr: u64, tags: &[u8]) {
        for (i, &t) in tags.iter().enumerate() {
            self.set(addr.wrapping_add(i as u64), t);
        }
    }

    /// Number of pages ever written with a nonzero tag.
    pub fn used_pages(&self) -> usize {
        self.pages.len()
    }

    /// Nonzero tags by address, walking only used pages.
    pub fn tainted(&self) -> Vec<(u64, u8)> {
        let mut out = Vec::new();
        for (&page, bytes) in &self.pages {
            for (i, &t) in bytes.iter().enumerate() {
                if t != 0 {
                    out.push((page * PAGE_SIZE + i as u64, t));
                }
            }
        }
        out
    }

    pub fn tainted_count(&self) -> usize {
        self.pages.values().map(|p| p.iter().filter(|&&t| t != 0).count()).sum()
    }

    pub fn is_clean(&self) -> bool {
        self.pages.values().all(|p| p.iter().all(|&t| t == 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn or_fold_and_overwrite() {
        let mut t = Tagmap::new();
        assert_eq!(t.get_taint(0x2000, 8), 0);
        t.set_taint(0x2000, 0x01, 4);
        t.set_taint(0x2004, 0x02, 4);
        assert_eq!(t.get_taint(0x2000, 8), 0x03);
        assert_eq!(t.get_taint(0x2000, 0), 0);
        t.set_taint(0x2000, 0x04, 2);
        assert_eq!(t.get_taint(0x2000, 1), 0x04);
        t.set_taint(0x2000, 0, 8);
        assert_eq!(t.get_taint(0x2000, 8), 0);
        assert!(t.is_clean());
    }

    #[test]
    fn crosses_pages() {
        let mut t = Tagmap::new();
        t.set_taint(PAGE_SIZE - 2, 0x08, 4);
        assert_eq!(t.used_pages(), 2);
        assert_eq!(t.tainted_count(), 4);
    }
}
