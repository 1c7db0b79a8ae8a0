//! Linear LPN -> PPN mapping table with optional per-subpage key slots and
//! a dirty bit per serialized table page.
//!
//! With key slots (the static key store) an entry serializes to
//! `4 + 4 * slots` bytes: the PPN word followed by one word per 4 KiB host
//! page. Unmapped PPNs and empty key slots are both stored as all-ones.

use bitvec::vec::BitVec;
use smallvec::SmallVec;

use crate::key::AccessKey;

const NIL: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MappingEntry {
    pub ppn: Option<u32>,
    /// `None` means the host page has never been key-registered.
    pub subpage_keys: SmallVec<[Option<AccessKey>; 8]>,
}

impl MappingEntry {
    fn empty(slots: usize) -> Self {
        MappingEntry {
            ppn: None,
            subpage_keys: SmallVec::from_elem(None, slots),
        }
    }
}

#[derive(Clone, Debug)]
pub struct KeyedMapTable {
    entries: Vec<MappingEntry>,
    slots: usize,
    entries_per_page: usize,
    dirty: BitVec,
}

impl KeyedMapTable {
    /// `slots == 0` gives a plain PPN table.
    pub fn new(entry_count: u64, slots: usize, payload_bytes_per_page: usize) -> Self {
        let entry_bytes = Self::entry_bytes_for(slots);
        let entries_per_page = (payload_bytes_per_page / entry_bytes).max(1);
        let pages = (entry_count as usize).div_ceil(entries_per_page);
        KeyedMapTable {
            entries: vec![MappingEntry::empty(slots); entry_count as usize],
            slots,
            entries_per_page,
            dirty: BitVec::repeat(false, pages),
        }
    }

    pub fn entry_bytes_for(slots: usize) -> usize {
        4 + 4 * slots
    }

    pub fn entry_bytes(&self) -> usize {
        Self::entry_bytes_for(self.slots)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn entries_per_page(&self) -> usize {
        self.entries_per_page
    }

    pub fn table_pages(&self) -> usize {
        self.dirty.len()
    }

    pub fn page_of(&self, dlpn: u64) -> usize {
        dlpn as usize / self.entries_per_page
    }

    pub fn entry(&self, dlpn: u64) -> &MappingEntry {
        &self.entries[dlpn as usize]
    }

    pub fn ppn(&self, dlpn: u64) -> Option<u64> {
        self.entries[dlpn as usize].ppn.map(u64::from)
    }

    pub fn set_ppn(&mut self, dlpn: u64, ppn: Option<u64>) {
        let e = &mut self.entries[dlpn as usize];
        let new = ppn.map(|p| p as u32);
        if e.ppn != new {
            e.ppn = new;
            let page = self.page_of(dlpn);
            self.dirty.set(page, true);
        }
    }

    pub fn key(&self, dlpn: u64, sub: usize) -> Option<AccessKey> {
        self.entries[dlpn as usize].subpage_keys[sub]
    }

    pub fn set_key(&mut self, dlpn: u64, sub: usize, key: Option<AccessKey>) {
        let slot = &mut self.entries[dlpn as usize].subpage_keys[sub];
        if *slot != key {
            *slot = key;
            let page = self.page_of(dlpn);
            self.dirty.set(page, true);
        }
    }

    pub fn is_dirty(&self, page: usize) -> bool {
        self.dirty[page]
    }

    pub fn dirty_pages(&self) -> Vec<usize> {
        self.dirty.iter_ones().collect()
    }

    pub fn clear_dirty(&mut self) {
        self.dirty.fill(false);
    }

    pub fn serialize_page(&self, page: usize) -> Vec<u8> {
        let start = page * self.entries_per_page;
        let end = (start + self.entries_per_page).min(self.entries.len());
        let mut out = Vec::with_capacity((end - start) * self.entry_bytes());
        for e in &self.entries[start..end] {
            out.extend_from_slice(&e.ppn.unwrap_or(NIL).to_le_bytes());
            for k in &e.subpage_keys {
                out.extend_from_slice(&k.map_or(NIL, AccessKey::value).to_le_bytes());
            }
        }
        out
    }

    /// Inverse of [`serialize_page`](Self::serialize_page). Returns false
    /// if the payload length does not match the page's entry count.
    pub fn load_page(&mut self, page: usize, payload: &[u8]) -> bool {
        let start = page * self.entries_per_page;
        if start >= self.entries.len() {
            return false;
        }
        let end = (start + self.entries_per_page).min(self.entries.len());
        let eb = self.entry_bytes();
        if payload.len() != (end - start) * eb {
            return false;
        }
        let word = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        for (e, raw) in self.entries[start..end].iter_mut().zip(payload.chunks(eb)) {
            let ppn = word(&raw[..4]);
            e.ppn = (ppn != NIL).then_some(ppn);
            for (slot, kb) in e.subpage_keys.iter_mut().zip(raw[4..].chunks(4)) {
                let k = word(kb);
                *slot = (k != NIL).then_some(AccessKey::new(k));
            }
        }
        true
    }

    /// Order-sensitive digest of all key slots.
    pub fn key_digest(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for e in &self.entries {
            for k in &e.subpage_keys {
                h.update(&k.map_or(NIL, AccessKey::value).to_le_bytes());
            }
        }
        h.finalize()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_words_per_keyed_entry() {
        let t = KeyedMapTable::new(100, 8, 32 * 1024 - 32);
        assert_eq!(t.entry_bytes(), 36);
        assert_eq!(t.entries_per_page(), 909);
        assert_eq!(t.table_pages(), 1);
        let plain = KeyedMapTable::new(100, 0, 32 * 1024 - 32);
        assert_eq!(plain.entry_bytes(), 4);
    }

    #[test]
    fn only_changes_mark_dirty() {
        let mut t = KeyedMapTable::new(30, 8, 36 * 10);
        assert_eq!(t.table_pages(), 3);
        t.set_ppn(25, Some(7));
        assert_eq!(t.dirty_pages(), vec![2]);
        t.clear_dirty();
        t.set_ppn(25, Some(7));
        t.set_key(3, 1, None);
        assert!(t.dirty_pages().is_empty());
        t.set_key(3, 1, Some(AccessKey::new(0x33)));
        assert_eq!(t.dirty_pages(), vec![0]);
    }

    #[test]
    fn page_codec_round_trip() {
        let mut t = KeyedMapTable::new(25, 8, 36 * 10);
        t.set_ppn(12, Some(99));
        t.set_key(12, 7, Some(AccessKey::new(0)));
        t.set_key(14, 0, Some(AccessKey::new(0xFF_FFFF)));
        let mut back = KeyedMapTable::new(25, 8, 36 * 10);
        for p in 0..t.table_pages() {
            assert!(back.load_page(p, &t.serialize_page(p)));
        }
        for d in 0..25 {
            assert_eq!(back.entry(d), t.entry(d));
        }
        assert_eq!(back.key_digest(), t.key_digest());
        // Last page holds 5 entries.
        assert_eq!(t.serialize_page(2).len(), 5 * 36);
        assert!(!back.load_page(2, &[0u8; 36]));
    }
}
