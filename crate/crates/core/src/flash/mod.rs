//! NAND flash model: pages are programmed once between erases, erase works
//! on whole blocks, and contents survive power cycles.

mod geometry;
mod snapshot;

pub use geometry::{FlashGeometry, GeometryError};
pub use snapshot::{SnapshotError, SNAPSHOT_MAGIC};

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PageState {
    Erased,
    Programmed,
    /// Superseded by a newer copy; data is kept until the block is erased.
    Invalid,
}

impl PageState {
    pub(crate) fn to_byte(self) -> u8 {
        match self {
            PageState::Erased => 0,
            PageState::Programmed => 1,
            PageState::Invalid => 2,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(PageState::Erased),
            1 => Some(PageState::Programmed),
            2 => Some(PageState::Invalid),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlashError {
    #[error("physical page {0} is not erased")]
    ProgramOnDirtyPage(u64),
    #[error("address {addr} out of range (limit {limit})")]
    OutOfRange { addr: u64, limit: u64 },
    #[error("payload is {got} bytes, device page is {expected} bytes")]
    PayloadSize { got: usize, expected: u64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Per-boot operation counters. Reset by [`FlashDevice::power_cycle`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlashCounters {
    pub programs: u64,
    pub reads: u64,
    pub erases: u64,
}

impl FlashCounters {
    pub fn saturating_sub(self, earlier: FlashCounters) -> FlashCounters {
        FlashCounters {
            programs: self.programs.saturating_sub(earlier.programs),
            reads: self.reads.saturating_sub(earlier.reads),
            erases: self.erases.saturating_sub(earlier.erases),
        }
    }
}

impl std::ops::Add for FlashCounters {
    type Output = FlashCounters;

    fn add(self, rhs: FlashCounters) -> FlashCounters {
        FlashCounters {
            programs: self.programs + rhs.programs,
            reads: self.reads + rhs.reads,
            erases: self.erases + rhs.erases,
        }
    }
}

#[derive(Clone, Debug)]
struct Page {
    state: PageState,
    data: Option<Box<[u8]>>,
}

#[derive(Clone, Debug)]
pub struct FlashDevice {
    geometry: FlashGeometry,
    pages: Vec<Page>,
    counters: FlashCounters,
}

impl FlashDevice {
    pub fn new(geometry: FlashGeometry) -> Result<Self, FlashError> {
        geometry.validate()?;
        let n = geometry.total_pages() as usize;
        Ok(FlashDevice {
            geometry,
            pages: vec![
                Page {
                    state: PageState::Erased,
                    data: None,
                };
                n
            ],
            counters: FlashCounters::default(),
        })
    }

    pub fn geometry(&self) -> &FlashGeometry {
        &self.geometry
    }

    pub fn counters(&self) -> FlashCounters {
        self.counters
    }

    fn check_ppn(&self, ppn: u64) -> Result<usize, FlashError> {
        let limit = self.geometry.total_pages();
        if ppn >= limit {
            return Err(FlashError::OutOfRange { addr: ppn, limit });
        }
        Ok(ppn as usize)
    }

    fn check_block(&self, block: u64) -> Result<(), FlashError> {
        let limit = self.geometry.blocks_per_device;
        if block >= limit {
            return Err(FlashError::OutOfRange { addr: block, limit });
        }
        Ok(())
    }

    pub fn program_page(&mut self, ppn: u64, data: &[u8]) -> Result<(), FlashError> {
        let idx = self.check_ppn(ppn)?;
        if data.len() as u64 != self.geometry.device_page_bytes {
            return Err(FlashError::PayloadSize {
                got: data.len(),
                expected: self.geometry.device_page_bytes,
            });
        }
        let page = &mut self.pages[idx];
        if page.state != PageState::Erased {
            return Err(FlashError::ProgramOnDirtyPage(ppn));
        }
        page.state = PageState::Programmed;
        page.data = Some(data.into());
        self.counters.programs += 1;
        Ok(())
    }

    /// Erased pages read back as all-0xFF.
    pub fn read_page(&mut self, ppn: u64) -> Result<Vec<u8>, FlashError> {
        let idx = self.check_ppn(ppn)?;
        self.counters.reads += 1;
        Ok(match &self.pages[idx].data {
            Some(d) => d.to_vec(),
            None => vec![0xFF; self.geometry.device_page_bytes as usize],
        })
    }

    pub fn erase_block(&mut self, block: u64) -> Result<(), FlashError> {
        self.check_block(block)?;
        let first = self.geometry.first_page(block) as usize;
        let ppb = self.geometry.pages_per_block as usize;
        for page in &mut self.pages[first..first + ppb] {
            page.state = PageState::Erased;
            page.data = None;
        }
        self.counters.erases += 1;
        Ok(())
    }

    /// Marks a programmed page as superseded. Idempotent on invalid pages.
    pub fn invalidate_page(&mut self, ppn: u64) -> Result<(), FlashError> {
        let idx = self.check_ppn(ppn)?;
        let page = &mut self.pages[idx];
        if page.state == PageState::Programmed {
            page.state = PageState::Invalid;
        }
        Ok(())
    }

    pub fn page_state(&self, ppn: u64) -> Result<PageState, FlashError> {
        let idx = self.check_ppn(ppn)?;
        Ok(self.pages[idx].state)
    }

    /// True when every page of the block is erased.
    pub fn block_is_erased(&self, block: u64) -> Result<bool, FlashError> {
        self.check_block(block)?;
        let first = self.geometry.first_page(block) as usize;
        let ppb = self.geometry.pages_per_block as usize;
        Ok(self.pages[first..first + ppb]
            .iter()
            .all(|p| p.state == PageState::Erased))
    }

    /// Contents are non-volatile; only the per-boot counters reset.
    pub fn power_cycle(&mut self) {
        self.counters = FlashCounters::default();
    }

    /// Fault injection: flips bits in a stored page without going through
    /// the program path.
    pub fn corrupt_byte(&mut self, ppn: u64, offset: usize, xor: u8) -> Result<(), FlashError> {
        let idx = self.check_ppn(ppn)?;
        if let Some(d) = self.pages[idx].data.as_mut() {
            if let Some(b) = d.get_mut(offset) {
                *b ^= xor;
            }
        }
        Ok(())
    }
}
