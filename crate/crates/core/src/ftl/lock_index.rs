//! Dynamic key store: one red-black tree of locked LPNs per key, plus a
//! global membership bitmap so a lookup can tell "not locked" apart from
//! "locked by another key" without scanning every tree.

use std::collections::HashMap;

use bitvec::vec::BitVec;
use thiserror::Error;

use super::rbtree::LockTree;
use crate::key::AccessKey;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchResult {
    Match,
    NotLocked,
    WrongKey,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IndexError {
    #[error("LPN {lpn} is already locked under another key")]
    InsertConflict { lpn: u64 },
    #[error("the no-key sentinel cannot lock a page")]
    SentinelKey,
    #[error("LPN {lpn} outside index range {limit}")]
    OutOfRange { lpn: u64, limit: u64 },
    #[error("malformed index image: {0}")]
    Malformed(&'static str),
}

#[derive(Clone, Debug)]
pub struct KeyLockIndex {
    per_key: HashMap<AccessKey, LockTree>,
    locked: BitVec,
}

impl KeyLockIndex {
    pub fn new(lpn_count: u64) -> Self {
        KeyLockIndex {
            per_key: HashMap::new(),
            locked: BitVec::repeat(false, lpn_count as usize),
        }
    }

    pub fn lpn_count(&self) -> u64 {
        self.locked.len() as u64
    }

    fn check(&self, lpn: u64) -> Result<usize, IndexError> {
        if lpn >= self.lpn_count() {
            return Err(IndexError::OutOfRange {
                lpn,
                limit: self.lpn_count(),
            });
        }
        Ok(lpn as usize)
    }

    pub fn is_locked(&self, lpn: u64) -> bool {
        self.locked.get(lpn as usize).is_some_and(|b| *b)
    }

    /// Locks `lpn` under `key`. Returns `Ok(true)` when a new node was
    /// inserted, `Ok(false)` when the pair was already present.
    pub fn insert(&mut self, lpn: u64, key: AccessKey) -> Result<bool, IndexError> {
        if key.is_none() {
            return Err(IndexError::SentinelKey);
        }
        let idx = self.check(lpn)?;
        if self.locked[idx] {
            return if self.per_key.get(&key).is_some_and(|t| t.contains(lpn)) {
                Ok(false)
            } else {
                Err(IndexError::InsertConflict { lpn })
            };
        }
        self.per_key.entry(key).or_default().insert(lpn);
        self.locked.set(idx, true);
        Ok(true)
    }

    pub fn search(&self, lpn: u64, key: AccessKey) -> SearchResult {
        if !self.is_locked(lpn) {
            SearchResult::NotLocked
        } else if self.per_key.get(&key).is_some_and(|t| t.contains(lpn)) {
            SearchResult::Match
        } else {
            SearchResult::WrongKey
        }
    }

    /// Unlocks `lpn` if it is held by `key`.
    pub fn remove(&mut self, lpn: u64, key: AccessKey) -> bool {
        let Some(tree) = self.per_key.get_mut(&key) else {
            return false;
        };
        if !tree.remove(lpn) {
            return false;
        }
        if tree.is_empty() {
            self.per_key.remove(&key);
        }
        self.locked.set(lpn as usize, false);
        true
    }

    /// Linear scan over all trees; diagnostics only.
    pub fn owner_of(&self, lpn: u64) -> Option<AccessKey> {
        if !self.is_locked(lpn) {
            return None;
        }
        self.per_key
            .iter()
            .find(|(_, t)| t.contains(lpn))
            .map(|(k, _)| *k)
    }

    pub fn key_count(&self) -> usize {
        self.per_key.len()
    }

    pub fn locked_count(&self) -> usize {
        self.locked.count_ones()
    }

    /// Sorted `(key, lpns)` view.
    pub fn entries(&self) -> Vec<(AccessKey, Vec<u64>)> {
        let mut v: Vec<_> = self
            .per_key
            .iter()
            .map(|(k, t)| (*k, t.iter().collect::<Vec<_>>()))
            .collect();
        v.sort_by_key(|(k, _)| *k);
        v
    }

    /// Records of `key:u32, count:u32, lpn:u32 * count`, little-endian,
    /// ordered by key; LPNs ascending.
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (key, lpns) in self.entries() {
            out.extend_from_slice(&key.value().to_le_bytes());
            out.extend_from_slice(&(lpns.len() as u32).to_le_bytes());
            for lpn in lpns {
                out.extend_from_slice(&(lpn as u32).to_le_bytes());
            }
        }
        out
    }

    pub fn deserialize(lpn_count: u64, mut bytes: &[u8]) -> Result<Self, IndexError> {
        fn word(b: &mut &[u8]) -> Result<u32, IndexError> {
            if b.len() < 4 {
                return Err(IndexError::Malformed("truncated record"));
            }
            let w = u32::from_le_bytes(b[..4].try_into().unwrap());
            *b = &b[4..];
            Ok(w)
        }
        let mut idx = KeyLockIndex::new(lpn_count);
        while !bytes.is_empty() {
            let key = AccessKey::new(word(&mut bytes)?);
            let count = word(&mut bytes)?;
            for _ in 0..count {
                let lpn = u64::from(word(&mut bytes)?);
                match idx.insert(lpn, key) {
                    Ok(true) => {}
                    Ok(false) | Err(IndexError::InsertConflict { .. }) => {
                        return Err(IndexError::Malformed("LPN listed twice"))
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(idx)
    }
}
