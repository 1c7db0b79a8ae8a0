//! Host-side key maps: which key an open file was opened with, and which
//! key a block request in flight carries.

use std::collections::HashMap;
use std::sync::Mutex;

use super::fs::InodeId;
use crate::key::AccessKey;

pub type HandleId = u64;

/// Keys of open files, one entry per (inode, handle).
#[derive(Debug, Default)]
pub struct KeyInodeTable {
    map: Mutex<HashMap<(InodeId, HandleId), AccessKey>>,
}

impl KeyInodeTable {
    pub fn insert(&self, inode: InodeId, handle: HandleId, key: AccessKey) {
        self.map.lock().unwrap().insert((inode, handle), key);
    }

    pub fn get(&self, inode: InodeId, handle: HandleId) -> Option<AccessKey> {
        self.map.lock().unwrap().get(&(inode, handle)).copied()
    }

    pub fn remove(&self, inode: InodeId, handle: HandleId) -> Option<AccessKey> {
        self.map.lock().unwrap().remove(&(inode, handle))
    }

    pub fn remove_inode(&self, inode: InodeId) -> usize {
        let mut map = self.map.lock().unwrap();
        let before = map.len();
        map.retain(|(i, _), _| *i != inode);
        before - map.len()
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Keys of requests between construction and completion, by sector
/// address. Concurrent requests to one address each hold an entry.
#[derive(Debug, Default)]
pub struct KeyLbaTable {
    map: Mutex<HashMap<u64, Vec<AccessKey>>>,
}

impl KeyLbaTable {
    pub fn insert(&self, lba: u64, key: AccessKey) {
        self.map.lock().unwrap().entry(lba).or_default().push(key);
    }

    pub fn get(&self, lba: u64) -> Option<AccessKey> {
        self.map
            .lock()
            .unwrap()
            .get(&lba)
            .and_then(|v| v.last().copied())
    }

    pub fn remove(&self, lba: u64, key: AccessKey) -> bool {
        let mut map = self.map.lock().unwrap();
        let Some(keys) = map.get_mut(&lba) else {
            return false;
        };
        let Some(pos) = keys.iter().rposition(|k| *k == key) else {
            return false;
        };
        keys.remove(pos);
        if keys.is_empty() {
            map.remove(&lba);
        }
        true
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_lba_multimap() {
        let t = KeyLbaTable::default();
        t.insert(8, AccessKey::new(1));
        t.insert(8, AccessKey::new(2));
        assert_eq!(t.len(), 2);
        assert!(t.remove(8, AccessKey::new(1)));
        assert_eq!(t.get(8), Some(AccessKey::new(2)));
        assert!(!t.remove(8, AccessKey::new(1)));
        assert!(t.remove(8, AccessKey::new(2)));
        assert!(t.is_empty());
    }

    #[test]
    fn key_inode_per_handle() {
        let t = KeyInodeTable::default();
        t.insert(1, 10, AccessKey::new(5));
        t.insert(1, 11, AccessKey::new(5));
        t.insert(2, 12, AccessKey::NONE);
        assert_eq!(t.len(), 3);
        assert_eq!(t.remove_inode(1), 2);
        assert_eq!(t.get(2, 12), Some(AccessKey::NONE));
    }
}
