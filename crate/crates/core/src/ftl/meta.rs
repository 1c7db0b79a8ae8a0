//! Mapping-table persistence: a log of checksummed metadata pages in a
//! reserved block region.
//!
//! Page layout (little-endian):
//!
//! | bytes      | field                                  |
//! |------------|----------------------------------------|
//! | 0..4       | magic `KMTA`                           |
//! | 4          | FTL variant                            |
//! | 5          | region (1 = map table, 2 = key index)  |
//! | 6..8       | zero                                   |
//! | 8..16      | flush sequence number                  |
//! | 16..20     | page index within the region           |
//! | 20..24     | region page count at that flush       |
//! | 24..28     | payload length                         |
//! | 28..       | payload, padded with 0xFF              |
//! | last 4     | CRC-32 of everything before it         |
//!
//! For every `(region, index)` the copy with the highest sequence number
//! wins. Full blocks are compacted by relocating their live pages
//! verbatim, so one erased block is always held in reserve.

use std::collections::{BTreeMap, VecDeque};

use super::FtlError;
use crate::flash::{FlashDevice, PageState};

pub(crate) const META_MAGIC: [u8; 4] = *b"KMTA";
pub(crate) const HEADER_BYTES: usize = 28;
pub(crate) const OVERHEAD_BYTES: usize = HEADER_BYTES + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) enum Region {
    Table = 1,
    Index = 2,
}

impl Region {
    fn from_byte(b: u8) -> Option<Region> {
        match b {
            1 => Some(Region::Table),
            2 => Some(Region::Index),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct MetaPage {
    pub variant: u8,
    pub region: Region,
    pub seq: u64,
    pub index: u32,
    pub region_pages: u32,
    pub payload: Vec<u8>,
}

impl MetaPage {
    pub(crate) fn encode(&self, page_bytes: usize) -> Vec<u8> {
        assert!(self.payload.len() + OVERHEAD_BYTES <= page_bytes);
        let mut out = vec![0xFFu8; page_bytes];
        out[0..4].copy_from_slice(&META_MAGIC);
        out[4] = self.variant;
        out[5] = self.region as u8;
        out[6] = 0;
        out[7] = 0;
        out[8..16].copy_from_slice(&self.seq.to_le_bytes());
        out[16..20].copy_from_slice(&self.index.to_le_bytes());
        out[20..24].copy_from_slice(&self.region_pages.to_le_bytes());
        out[24..28].copy_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out[HEADER_BYTES..HEADER_BYTES + self.payload.len()].copy_from_slice(&self.payload);
        let crc = crc32fast::hash(&out[..page_bytes - 4]);
        out[page_bytes - 4..].copy_from_slice(&crc.to_le_bytes());
        out
    }

    pub(crate) fn decode(bytes: &[u8]) -> Result<MetaPage, &'static str> {
        let n = bytes.len();
        if n < OVERHEAD_BYTES {
            return Err("page too small");
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        if bytes[0..4] != META_MAGIC {
            return Err("bad magic");
        }
        if crc32fast::hash(&bytes[..n - 4]) != u32_at(n - 4) {
            return Err("checksum mismatch");
        }
        let region = Region::from_byte(bytes[5]).ok_or("unknown region")?;
        let len = u32_at(24) as usize;
        if HEADER_BYTES + len > n - 4 {
            return Err("payload length exceeds page");
        }
        Ok(MetaPage {
            variant: bytes[4],
            region,
            seq: u64::from_le_bytes(bytes[8..16].try_into().unwrap()),
            index: u32_at(16),
            region_pages: u32_at(20),
            payload: bytes[HEADER_BYTES..HEADER_BYTES + len].to_vec(),
        })
    }
}

/// Latest image of one region as found on flash.
#[derive(Clone, Debug, Default)]
pub(crate) struct RecoveredRegion {
    pub region_pages: u32,
    pub pages: BTreeMap<u32, Vec<u8>>,
}

#[derive(Clone, Debug)]
pub(crate) struct MetaLog {
    first: u64,
    count: u64,
    ppb: u64,
    live: BTreeMap<(Region, u32), (u64, u64)>,
    live_per_block: Vec<u32>,
    erased: VecDeque<u64>,
    current: Option<(u64, u64)>,
    seq: u64,
    relocations: u64,
}

impl MetaLog {
    pub(crate) fn fresh(first: u64, count: u64, ppb: u64) -> Self {
        MetaLog {
            first,
            count,
            ppb,
            live: BTreeMap::new(),
            live_per_block: vec![0; count as usize],
            erased: (first..first + count).collect(),
            current: None,
            seq: 0,
            relocations: 0,
        }
    }

    pub(crate) fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    pub(crate) fn relocations(&self) -> u64 {
        self.relocations
    }

    fn rel(&self, block: u64) -> usize {
        (block - self.first) as usize
    }

    fn note_live(&mut self, key: (Region, u32), ppn: u64, seq: u64) {
        if let Some((old, _)) = self.live.insert(key, (ppn, seq)) {
            let b = self.rel(old / self.ppb);
            self.live_per_block[b] -= 1;
        }
        let b = self.rel(ppn / self.ppb);
        self.live_per_block[b] += 1;
    }

    fn program_next(&mut self, flash: &mut FlashDevice, bytes: &[u8]) -> Result<u64, FtlError> {
        let (block, next) = self.current.as_mut().ok_or(FtlError::NoSpace)?;
        if *next == self.ppb {
            return Err(FtlError::NoSpace);
        }
        let ppn = *block * self.ppb + *next;
        *next += 1;
        flash.program_page(ppn, bytes)?;
        Ok(ppn)
    }

    fn ensure_room(&mut self, flash: &mut FlashDevice) -> Result<(), FtlError> {
        if matches!(self.current, Some((_, next)) if next < self.ppb) {
            return Ok(());
        }
        let block = self.erased.pop_front().ok_or(FtlError::NoSpace)?;
        self.current = Some((block, 0));
        if self.erased.is_empty() {
            self.compact(flash)?;
        }
        Ok(())
    }

    fn compact(&mut self, flash: &mut FlashDevice) -> Result<(), FtlError> {
        let current = self.current.map(|(b, _)| b);
        let Some(victim) = (self.first..self.first + self.count)
            .filter(|b| Some(*b) != current && !self.erased.contains(b))
            .min_by_key(|b| (self.live_per_block[self.rel(*b)], *b))
        else {
            return Ok(());
        };
        let moving: Vec<_> = self
            .live
            .iter()
            .filter(|(_, (ppn, _))| ppn / self.ppb == victim)
            .map(|(k, v)| (*k, *v))
            .collect();
        for (key, (ppn, seq)) in moving {
            let bytes = flash.read_page(ppn)?;
            let dest = self.program_next(flash, &bytes)?;
            self.note_live(key, dest, seq);
            self.relocations += 1;
        }
        flash.erase_block(victim)?;
        self.erased.push_back(victim);
        Ok(())
    }

    pub(crate) fn append(
        &mut self,
        flash: &mut FlashDevice,
        page: &MetaPage,
    ) -> Result<u64, FtlError> {
        self.ensure_room(flash)?;
        let bytes = page.encode(flash.geometry().device_page_bytes as usize);
        let ppn = self.program_next(flash, &bytes)?;
        self.note_live((page.region, page.index), ppn, page.seq);
        Ok(ppn)
    }

    /// Scans the region and returns the newest image of each region.
    pub(crate) fn recover(
        flash: &mut FlashDevice,
        first: u64,
        count: u64,
        variant: u8,
    ) -> Result<(MetaLog, BTreeMap<Region, RecoveredRegion>), FtlError> {
        let ppb = flash.geometry().pages_per_block;
        let mut log = MetaLog::fresh(first, count, ppb);
        log.erased.clear();
        let mut best: BTreeMap<(Region, u32), (u64, MetaPage)> = BTreeMap::new();
        for block in first..first + count {
            if flash.block_is_erased(block)? {
                log.erased.push_back(block);
                continue;
            }
            for ppn in block * ppb..(block + 1) * ppb {
                if flash.page_state(ppn)? == PageState::Erased {
                    continue;
                }
                let bytes = flash.read_page(ppn)?;
                let page = MetaPage::decode(&bytes)
                    .map_err(|why| FtlError::CorruptImage(format!("metadata page {ppn}: {why}")))?;
                if page.variant != variant {
                    return Err(FtlError::VariantMismatch {
                        found: page.variant,
                        expected: variant,
                    });
                }
                log.seq = log.seq.max(page.seq);
                let key = (page.region, page.index);
                if best.get(&key).is_none_or(|(_, b)| page.seq > b.seq) {
                    best.insert(key, (ppn, page));
                }
            }
        }

        // Region size comes from the newest page of that region.
        let mut newest: BTreeMap<Region, (u64, u32)> = BTreeMap::new();
        for ((region, _), (_, page)) in &best {
            let e = newest.entry(*region).or_insert((0, 0));
            if page.seq >= e.0 {
                *e = (page.seq, page.region_pages);
            }
        }
        let mut regions: BTreeMap<Region, RecoveredRegion> = BTreeMap::new();
        for ((region, index), (ppn, page)) in best {
            let pages = newest[&region].1;
            if index >= pages {
                continue;
            }
            log.note_live((region, index), ppn, page.seq);
            let r = regions.entry(region).or_default();
            r.region_pages = pages;
            r.pages.insert(index, page.payload);
        }
        Ok((log, regions))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flash::FlashGeometry;

    fn flash() -> FlashDevice {
        FlashDevice::new(FlashGeometry {
            blocks_per_device: 4,
            pages_per_block: 4,
            device_page_bytes: 128,
            host_page_bytes: 64,
            sector_bytes: 64,
        })
        .unwrap()
    }

    fn page(region: Region, index: u32, seq: u64, fill: u8) -> MetaPage {
        MetaPage {
            variant: 1,
            region,
            seq,
            index,
            region_pages: 2,
            payload: vec![fill; 10],
        }
    }

    #[test]
    fn codec_round_trip_and_checksum() {
        let p = page(Region::Index, 3, 77, 0xAB);
        let mut bytes = p.encode(128);
        assert_eq!(&bytes[0..4], b"KMTA");
        assert_eq!(MetaPage::decode(&bytes).unwrap(), p);
        bytes[40] ^= 1;
        assert_eq!(MetaPage::decode(&bytes), Err("checksum mismatch"));
    }

    #[test]
    fn newest_copy_wins_across_compaction() {
        let mut f = flash();
        let mut log = MetaLog::fresh(0, 3, 4);
        // Enough appends to force several compactions of a 3-block region.
        for seq in 1..=40u64 {
            let idx = (seq % 2) as u32;
            log.append(&mut f, &page(Region::Table, idx, seq, seq as u8))
                .unwrap();
        }
        assert!(log.relocations() > 0 || f.counters().erases > 0);
        let (rec, regions) = MetaLog::recover(&mut f, 0, 3, 1).unwrap();
        assert_eq!(rec.seq, 40);
        let t = &regions[&Region::Table];
        assert_eq!(t.region_pages, 2);
        assert_eq!(t.pages[&0], vec![40u8; 10]);
        assert_eq!(t.pages[&1], vec![39u8; 10]);
    }

    #[test]
    fn variant_mismatch_detected() {
        let mut f = flash();
        let mut log = MetaLog::fresh(0, 3, 4);
        log.append(&mut f, &page(Region::Table, 0, 1, 1)).unwrap();
        assert!(matches!(
            MetaLog::recover(&mut f, 0, 3, 2),
            Err(FtlError::VariantMismatch {
                found: 1,
                expected: 2
            })
        ));
    }
}
