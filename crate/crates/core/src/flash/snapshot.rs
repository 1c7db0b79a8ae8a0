//! Flat-file image of a flash device.
//!
//! Layout: the 8-byte magic `KSSDFLSH`; blocks, pages per block, device page
//! bytes and host page bytes as little-endian `u64`; then one record per
//! physical page in order: a state byte (0 erased, 1 programmed, 2 invalid)
//! followed by the page data for programmed pages only.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::{FlashDevice, FlashGeometry, GeometryError, Page, PageState};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"KSSDFLSH";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic")]
    BadMagic,
    #[error("unknown page state byte {byte:#x} at page {ppn}")]
    BadState { ppn: u64, byte: u8 },
    #[error("invalid geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("trailing bytes after last page record")]
    TrailingBytes,
}

impl FlashDevice {
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<(), SnapshotError> {
        let g = &self.geometry;
        w.write_all(SNAPSHOT_MAGIC)?;
        for v in [
            g.blocks_per_device,
            g.pages_per_block,
            g.device_page_bytes,
            g.host_page_bytes,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        let erased = vec![0xFFu8; g.device_page_bytes as usize];
        for page in &self.pages {
            w.write_all(&[page.state.to_byte()])?;
            if page.state == PageState::Programmed {
                w.write_all(page.data.as_deref().unwrap_or(&erased))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Loads an image. The sector size is not part of the format and is
    /// supplied by the caller (512 for the standard geometry).
    pub fn read_snapshot<R: Read>(mut r: R, sector_bytes: u64) -> Result<Self, SnapshotError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let mut words = [0u64; 4];
        for w in &mut words {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *w = u64::from_le_bytes(b);
        }
        let geometry = FlashGeometry {
            blocks_per_device: words[0],
            pages_per_block: words[1],
            device_page_bytes: words[2],
            host_page_bytes: words[3],
            sector_bytes,
        };
        geometry.validate()?;
        let mut pages = Vec::with_capacity(geometry.total_pages() as usize);
        for ppn in 0..geometry.total_pages() {
            let mut s = [0u8; 1];
            r.read_exact(&mut s)?;
            let state =
                PageState::from_byte(s[0]).ok_or(SnapshotError::BadState { ppn, byte: s[0] })?;
            let data = if state == PageState::Programmed {
                let mut d = vec![0u8; geometry.device_page_bytes as usize];
                r.read_exact(&mut d)?;
                Some(d.into_boxed_slice())
            } else {
                None
            };
            pages.push(Page { state, data });
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(SnapshotError::TrailingBytes);
        }
        Ok(FlashDevice {
            geometry,
            pages,
            counters: Default::default(),
        })
    }
}
