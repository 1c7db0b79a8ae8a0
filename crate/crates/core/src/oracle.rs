//! Naive reference model of keyed access control: a flat map from host
//! LPN to the key that first wrote it. Shares no code with the FTL.

use std::collections::HashMap;

use crate::key::AccessKey;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OracleModel {
    keys: HashMap<u64, AccessKey>,
    data: HashMap<u64, Vec<u8>>,
}

impl OracleModel {
    pub fn new() -> Self {
        OracleModel::default()
    }

    /// Write rule: empty slot -> register (unless keyless) and write;
    /// same key -> write; different key -> deny.
    pub fn write(&mut self, lpn: u64, key: AccessKey, data: &[u8]) -> bool {
        match self.keys.get(&lpn) {
            Some(k) if *k != key => false,
            Some(_) => {
                self.data.insert(lpn, data.to_vec());
                true
            }
            None => {
                if key.is_some() {
                    self.keys.insert(lpn, key);
                }
                self.data.insert(lpn, data.to_vec());
                true
            }
        }
    }

    /// Read rule: empty slot or same key -> grant (no registration).
    pub fn read(&self, lpn: u64, key: AccessKey) -> Option<Option<&[u8]>> {
        match self.keys.get(&lpn) {
            Some(k) if *k != key => None,
            _ => Some(self.data.get(&lpn).map(Vec::as_slice)),
        }
    }

    pub fn key_of(&self, lpn: u64) -> Option<AccessKey> {
        self.keys.get(&lpn).copied()
    }

    pub fn clear(&mut self, lpn: u64) {
        self.keys.remove(&lpn);
        self.data.remove(&lpn);
    }
}
