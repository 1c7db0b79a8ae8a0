use std::num::NonZeroUsize;

use lru::LruCache;

use super::fs::InodeId;

/// LRU cache of file pages keyed by (inode, file page). A capacity of zero
/// disables caching.
#[derive(Debug)]
pub struct PageCache {
    lru: Option<LruCache<(InodeId, u64), Vec<u8>>>,
    hits: u64,
    misses: u64,
}

impl PageCache {
    pub fn new(capacity: usize) -> Self {
        PageCache {
            lru: NonZeroUsize::new(capacity).map(LruCache::new),
            hits: 0,
            misses: 0,
        }
    }

    pub fn get(&mut self, inode: InodeId, page: u64) -> Option<Vec<u8>> {
        let hit = self
            .lru
            .as_mut()
            .and_then(|c| c.get(&(inode, page)).cloned());
        if hit.is_some() {
            self.hits += 1;
        } else {
            self.misses += 1;
        }
        hit
    }

    pub fn contains(&self, inode: InodeId, page: u64) -> bool {
        self.lru
            .as_ref()
            .is_some_and(|c| c.contains(&(inode, page)))
    }

    pub fn put(&mut self, inode: InodeId, page: u64, data: Vec<u8>) {
        if let Some(c) = self.lru.as_mut() {
            c.put((inode, page), data);
        }
    }

    pub fn drop_inode(&mut self, inode: InodeId) {
        if let Some(c) = self.lru.as_mut() {
            let keys: Vec<_> = c.iter().map(|(k, _)| *k).filter(|k| k.0 == inode).collect();
            for k in keys {
                c.pop(&k);
            }
        }
    }

    pub fn clear(&mut self) {
        if let Some(c) = self.lru.as_mut() {
            c.clear();
        }
    }

    pub fn len(&self) -> usize {
        self.lru.as_ref().map_or(0, LruCache::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }
}
