//! Key-authenticating page-mapping FTL.
//!
//! Every host page (4 KiB) may carry an [`AccessKey`]. The first keyed
//! write to a page registers the key; later reads and writes must present
//! the same key or are denied in-band. Reads never register keys.
//!
//! Two key stores are provided:
//!
//! * [`FtlVariant::KeyStatic`]: key slots live next to the PPN in each
//!   mapping entry, one per host page of the device page. O(1) lookup.
//! * [`FtlVariant::KeyDynamic`]: a [`KeyLockIndex`] holding one
//!   red-black tree of LPNs per key, plus a locked-LPN bitmap.
//!
//! [`FtlVariant::Baseline`] ignores keys entirely.

mod blocks;
pub mod lock_index;
mod lockout;
pub mod map_table;
mod meta;
pub mod rbtree;

use std::collections::BTreeMap;

use thiserror::Error;

pub use lock_index::{IndexError, KeyLockIndex, SearchResult};
pub use lockout::{LockoutState, LockoutStatus, ZeroThreshold};
pub use map_table::{KeyedMapTable, MappingEntry};

use blocks::BlockManager;
use meta::{MetaLog, MetaPage, Region, OVERHEAD_BYTES};

use crate::flash::{FlashCounters, FlashDevice, FlashError, FlashGeometry};
use crate::key::AccessKey;
use crate::log::{EventLog, LogEvent, LogLayer, LogRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FtlVariant {
    Baseline,
    KeyStatic,
    KeyDynamic,
}

impl FtlVariant {
    pub const ALL: [FtlVariant; 3] = [
        FtlVariant::Baseline,
        FtlVariant::KeyStatic,
        FtlVariant::KeyDynamic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FtlVariant::Baseline => "baseline",
            FtlVariant::KeyStatic => "key-static",
            FtlVariant::KeyDynamic => "key-dynamic",
        }
    }

    fn tag(self) -> u8 {
        match self {
            FtlVariant::Baseline => 0,
            FtlVariant::KeyStatic => 1,
            FtlVariant::KeyDynamic => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FlushMode {
    AllFlush,
    SelectiveFlush,
}

impl FlushMode {
    pub fn short(self) -> &'static str {
        match self {
            FlushMode::AllFlush => "af",
            FlushMode::SelectiveFlush => "sf",
        }
    }
}

/// How a multi-page request is authorized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MultiMode {
    /// The first page's verdict stands for the whole request.
    FirstLpnOnly,
    /// Every page is checked; any mismatch denies the request.
    AllLpns,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccessMode {
    Read,
    Write,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Granted,
    Denied,
}

impl Verdict {
    pub fn is_granted(self) -> bool {
        self == Verdict::Granted
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReadOutcome {
    Granted(Vec<u8>),
    Denied,
}

impl ReadOutcome {
    pub fn verdict(&self) -> Verdict {
        match self {
            ReadOutcome::Granted(_) => Verdict::Granted,
            ReadOutcome::Denied => Verdict::Denied,
        }
    }
}

#[derive(Debug, Error)]
pub enum FtlError {
    #[error("device is locked out after repeated invalid keys")]
    DeviceLockedOut,
    #[error("LPN range {first}+{count} exceeds exported capacity of {limit} pages")]
    OutOfRange { first: u64, count: u64, limit: u64 },
    #[error("payload is {got} bytes, expected {expected}")]
    PayloadSize { got: usize, expected: usize },
    #[error("no reclaimable space")]
    NoSpace,
    #[error("corrupt metadata image: {0}")]
    CorruptImage(String),
    #[error("metadata written by variant tag {found}, device configured as {expected}")]
    VariantMismatch { found: u8, expected: u8 },
    #[error("volatile state lost; call recover() first")]
    NeedsRecovery,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Flash(#[from] FlashError),
}

#[derive(Clone, Debug)]
pub struct FtlConfig {
    pub geometry: FlashGeometry,
    pub variant: FtlVariant,
    /// Mode used for FLUSH commands arriving from the transport.
    pub flush_mode: FlushMode,
    pub read_multi_mode: MultiMode,
    pub write_multi_mode: MultiMode,
    pub lockout_threshold: u64,
    /// GC runs when the free-block count drops to this value.
    pub gc_watermark: u64,
    /// Spare data blocks not exported to the host; `None` picks a default.
    pub overprovision_blocks: Option<u64>,
}

impl FtlConfig {
    pub fn new(variant: FtlVariant) -> Self {
        let multi = match variant {
            FtlVariant::KeyDynamic => MultiMode::FirstLpnOnly,
            _ => MultiMode::AllLpns,
        };
        FtlConfig {
            geometry: FlashGeometry::default(),
            variant,
            flush_mode: FlushMode::SelectiveFlush,
            read_multi_mode: multi,
            write_multi_mode: multi,
            lockout_threshold: 64,
            gc_watermark: 2,
            overprovision_blocks: None,
        }
    }

    pub fn with_geometry(mut self, geometry: FlashGeometry) -> Self {
        self.geometry = geometry;
        self
    }
}

impl Default for FtlConfig {
    fn default() -> Self {
        FtlConfig::new(FtlVariant::KeyStatic)
    }
}

/// Counters kept by the FTL. Flash counters are per boot; the rest
/// accumulate for the lifetime of the object.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FtlMetrics {
    pub flash: FlashCounters,
    pub grants: u64,
    pub denials: u64,
    pub flushes: u64,
    pub flushed_bytes: u64,
    pub flushed_pages: u64,
    /// Sum over flushes of the metadata image size in pages.
    pub flush_image_pages: u64,
    pub gc_runs: u64,
    pub gc_moves: u64,
    pub index_inserts: u64,
    pub index_searches: u64,
    pub meta_relocations: u64,
    pub trims: u64,
}

impl FtlMetrics {
    pub fn decisions(&self) -> u64 {
        self.grants + self.denials
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Layout {
    meta_blocks: u64,
    data_blocks: u64,
    device_lpns: u64,
    subpages: u64,
    payload_bytes: usize,
}

impl Layout {
    fn compute(cfg: &FtlConfig) -> Result<Layout, FtlError> {
        let g = &cfg.geometry;
        g.validate().map_err(|e| FtlError::Config(e.to_string()))?;
        let subpages = g.subpages();
        let page = g.device_page_bytes as usize;
        let slots = match cfg.variant {
            FtlVariant::KeyStatic => subpages as usize,
            _ => 0,
        };
        let entry_bytes = KeyedMapTable::entry_bytes_for(slots);
        if page < OVERHEAD_BYTES + entry_bytes.max(12) {
            return Err(FtlError::Config(format!(
                "device page of {page} B cannot hold a metadata page"
            )));
        }
        let payload = page - OVERHEAD_BYTES;
        // Size the metadata region for the largest possible image.
        let max_lpns = g.total_pages() as usize;
        let mut max_pages = max_lpns.div_ceil(payload / entry_bytes);
        if cfg.variant == FtlVariant::KeyDynamic {
            max_pages += (max_lpns * subpages as usize * 12).div_ceil(payload).max(1);
        }
        let meta_blocks = (max_pages as u64).div_ceil(g.pages_per_block) + 2;
        let data_blocks = g
            .blocks_per_device
            .checked_sub(meta_blocks)
            .ok_or_else(|| FtlError::Config("too few blocks for metadata region".into()))?;
        let op = cfg
            .overprovision_blocks
            .unwrap_or_else(|| (cfg.gc_watermark + 2).max(data_blocks / 8));
        if op <= cfg.gc_watermark || data_blocks <= op {
            return Err(FtlError::Config(format!(
                "{data_blocks} data blocks cannot cover {op} spare blocks above watermark {}",
                cfg.gc_watermark
            )));
        }
        Ok(Layout {
            meta_blocks,
            data_blocks,
            device_lpns: (data_blocks - op) * g.pages_per_block,
            subpages,
            payload_bytes: payload,
        })
    }
}

pub struct KeyFtl {
    cfg: FtlConfig,
    layout: Layout,
    flash: FlashDevice,
    table: KeyedMapTable,
    index: Option<KeyLockIndex>,
    blocks: BlockManager,
    meta: MetaLog,
    flushed_index_pages: Vec<Vec<u8>>,
    lockout: LockoutState,
    metrics: FtlMetrics,
    log: EventLog,
    op_index: u64,
    needs_recovery: bool,
}

impl std::fmt::Debug for KeyFtl {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyFtl")
            .field("variant", &self.cfg.variant)
            .field("host_lpns", &self.host_lpns())
            .field("metrics", &self.metrics())
            .finish_non_exhaustive()
    }
}

impl KeyFtl {
    /// A device on freshly erased flash.
    pub fn new(cfg: FtlConfig) -> Result<Self, FtlError> {
        let flash = FlashDevice::new(cfg.geometry)?;
        let mut ftl = Self::assemble(cfg, flash)?;
        ftl.needs_recovery = false;
        Ok(ftl)
    }

    /// Mounts existing flash contents and rebuilds volatile state from the
    /// last flushed image.
    pub fn open(cfg: FtlConfig, flash: FlashDevice) -> Result<Self, FtlError> {
        if flash.geometry() != &cfg.geometry {
            return Err(FtlError::Config(
                "flash geometry does not match configuration".into(),
            ));
        }
        let mut ftl = Self::assemble(cfg, flash)?;
        ftl.recover()?;
        Ok(ftl)
    }

    fn assemble(cfg: FtlConfig, flash: FlashDevice) -> Result<Self, FtlError> {
        let layout = Layout::compute(&cfg)?;
        let lockout = LockoutState::new(cfg.lockout_threshold)
            .map_err(|e| FtlError::Config(e.to_string()))?;
        let g = cfg.geometry;
        Ok(KeyFtl {
            table: Self::empty_table(&cfg, &layout),
            index: Self::empty_index(&cfg, &layout),
            blocks: BlockManager::new(layout.meta_blocks, layout.data_blocks, g.pages_per_block),
            meta: MetaLog::fresh(0, layout.meta_blocks, g.pages_per_block),
            flushed_index_pages: Vec::new(),
            lockout,
            metrics: FtlMetrics::default(),
            log: EventLog::default(),
            op_index: 0,
            needs_recovery: true,
            cfg,
            layout,
            flash,
        })
    }

    fn empty_table(cfg: &FtlConfig, layout: &Layout) -> KeyedMapTable {
        let slots = match cfg.variant {
            FtlVariant::KeyStatic => layout.subpages as usize,
            _ => 0,
        };
        KeyedMapTable::new(layout.device_lpns, slots, layout.payload_bytes)
    }

    fn empty_index(cfg: &FtlConfig, layout: &Layout) -> Option<KeyLockIndex> {
        (cfg.variant == FtlVariant::KeyDynamic)
            .then(|| KeyLockIndex::new(layout.device_lpns * layout.subpages))
    }

    pub fn set_log(&mut self, log: EventLog) {
        self.log = log;
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn config(&self) -> &FtlConfig {
        &self.cfg
    }

    pub fn variant(&self) -> FtlVariant {
        self.cfg.variant
    }

    pub fn geometry(&self) -> &FlashGeometry {
        &self.cfg.geometry
    }

    pub fn set_flush_mode(&mut self, mode: FlushMode) {
        self.cfg.flush_mode = mode;
    }

    pub fn set_multi_modes(&mut self, read: MultiMode, write: MultiMode) {
        self.cfg.read_multi_mode = read;
        self.cfg.write_multi_mode = write;
    }

    /// Exported capacity in host pages.
    pub fn host_lpns(&self) -> u64 {
        self.layout.device_lpns * self.layout.subpages
    }

    pub fn device_lpns(&self) -> u64 {
        self.layout.device_lpns
    }

    pub fn meta_blocks(&self) -> u64 {
        self.layout.meta_blocks
    }

    /// Pages in the serialized mapping table (excluding any key index).
    pub fn table_pages(&self) -> usize {
        self.table.table_pages()
    }

    pub fn table(&self) -> &KeyedMapTable {
        &self.table
    }

    pub fn lock_index(&self) -> Option<&KeyLockIndex> {
        self.index.as_ref()
    }

    pub fn flash(&self) -> &FlashDevice {
        &self.flash
    }

    /// Direct access for fault injection.
    pub fn flash_mut(&mut self) -> &mut FlashDevice {
        &mut self.flash
    }

    pub fn into_flash(self) -> FlashDevice {
        self.flash
    }

    pub fn lockout(&self) -> &LockoutState {
        &self.lockout
    }

    pub fn metrics(&self) -> FtlMetrics {
        FtlMetrics {
            flash: self.flash.counters(),
            meta_relocations: self.meta.relocations(),
            ..self.metrics
        }
    }

    pub fn admin_reset_lockout(&mut self) {
        self.lockout.admin_reset();
    }

    /// Key registered for a host page, if any.
    pub fn stored_key(&self, lpn: u64) -> Option<AccessKey> {
        match self.cfg.variant {
            FtlVariant::Baseline => None,
            FtlVariant::KeyStatic => {
                let (d, s) = self.split(lpn);
                self.table.key(d, s)
            }
            FtlVariant::KeyDynamic => self.index.as_ref().and_then(|i| i.owner_of(lpn)),
        }
    }

    /// Digest over all key state.
    pub fn key_state_digest(&self) -> u32 {
        match (&self.cfg.variant, &self.index) {
            (FtlVariant::KeyDynamic, Some(idx)) => crc32fast::hash(&idx.serialize()),
            _ => self.table.key_digest(),
        }
    }

    /// Digest over mapping and key state.
    pub fn state_digest(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for p in 0..self.table.table_pages() {
            h.update(&self.table.serialize_page(p));
        }
        if let Some(idx) = &self.index {
            h.update(&idx.serialize());
        }
        h.finalize()
    }

    fn split(&self, lpn: u64) -> (u64, usize) {
        (
            lpn / self.layout.subpages,
            (lpn % self.layout.subpages) as usize,
        )
    }

    fn lba_of(&self, lpn: u64) -> u64 {
        lpn * self.cfg.geometry.sectors_per_host_page()
    }

    fn host_page_bytes(&self) -> usize {
        self.cfg.geometry.host_page_bytes as usize
    }

    fn begin(&mut self) -> Result<(), FtlError> {
        if self.needs_recovery {
            return Err(FtlError::NeedsRecovery);
        }
        self.op_index += 1;
        if self.lockout.is_locked_out() {
            return Err(FtlError::DeviceLockedOut);
        }
        Ok(())
    }

    fn check_range(&self, first: u64, count: u64) -> Result<(), FtlError> {
        let limit = self.host_lpns();
        if count == 0 || first.checked_add(count).is_none_or(|end| end > limit) {
            return Err(FtlError::OutOfRange {
                first,
                count,
                limit,
            });
        }
        Ok(())
    }

    fn emit(&self, event: LogEvent, lpn: u64, key: AccessKey, detail: String) {
        self.log.record(LogRecord {
            ts: self.op_index,
            layer: LogLayer::Ftl,
            event,
            lba: self.lba_of(lpn),
            key,
            detail,
        });
    }

    fn grant(&mut self, lpn: u64, key: AccessKey, what: &str) -> Verdict {
        self.metrics.grants += 1;
        self.emit(LogEvent::Grant, lpn, key, what.to_string());
        Verdict::Granted
    }

    fn deny(&mut self, lpn: u64, key: AccessKey, what: &str) -> Verdict {
        self.metrics.denials += 1;
        self.emit(LogEvent::Deny, lpn, key, format!("{what}-unauthenticated"));
        let was = self.lockout.is_locked_out();
        if self.lockout.check_and_record(false) == LockoutStatus::LockedOut && !was {
            self.emit(
                LogEvent::Lockout,
                lpn,
                key,
                format!("invalid-attempts={}", self.lockout.invalid_attempts()),
            );
        }
        Verdict::Denied
    }

    fn page_allowed(&mut self, lpn: u64, key: AccessKey) -> bool {
        match self.cfg.variant {
            FtlVariant::Baseline => true,
            FtlVariant::KeyStatic => {
                let (d, s) = self.split(lpn);
                self.table.key(d, s).is_none_or(|k| k == key)
            }
            FtlVariant::KeyDynamic => {
                self.metrics.index_searches += 1;
                let idx = self.index.as_ref().expect("dynamic variant has an index");
                idx.search(lpn, key) != SearchResult::WrongKey
            }
        }
    }

    /// Authorization decision for a request of `count` pages starting at
    /// `first`. Does not touch the lockout counter or any key state.
    pub fn authorize_multi(
        &mut self,
        first: u64,
        count: u64,
        key: AccessKey,
        mode: MultiMode,
    ) -> Result<Verdict, FtlError> {
        self.check_range(first, count)?;
        let checked = match mode {
            MultiMode::FirstLpnOnly => 1,
            MultiMode::AllLpns => count,
        };
        for lpn in first..first + checked {
            if !self.page_allowed(lpn, key) {
                return Ok(Verdict::Denied);
            }
        }
        Ok(Verdict::Granted)
    }

    fn register(&mut self, lpn: u64, key: AccessKey) {
        if key.is_none() {
            return;
        }
        match self.cfg.variant {
            FtlVariant::Baseline => {}
            FtlVariant::KeyStatic => {
                let (d, s) = self.split(lpn);
                if self.table.key(d, s).is_none() {
                    self.table.set_key(d, s, Some(key));
                }
            }
            FtlVariant::KeyDynamic => {
                let idx = self.index.as_mut().expect("dynamic variant has an index");
                // A page held by another key keeps its owner.
                if let Ok(true) = idx.insert(lpn, key) {
                    self.metrics.index_inserts += 1;
                }
            }
        }
    }

    pub fn handle_write(
        &mut self,
        lpn: u64,
        key: AccessKey,
        data: &[u8],
    ) -> Result<Verdict, FtlError> {
        self.write_multi(lpn, 1, key, data)
    }

    pub fn handle_read(&mut self, lpn: u64, key: AccessKey) -> Result<ReadOutcome, FtlError> {
        self.read_multi(lpn, 1, key)
    }

    pub fn write_multi(
        &mut self,
        first: u64,
        count: u64,
        key: AccessKey,
        data: &[u8],
    ) -> Result<Verdict, FtlError> {
        self.begin()?;
        self.check_range(first, count)?;
        let expected = count as usize * self.host_page_bytes();
        if data.len() != expected {
            return Err(FtlError::PayloadSize {
                got: data.len(),
                expected,
            });
        }
        let mode = self.cfg.write_multi_mode;
        if !self.authorize_multi(first, count, key, mode)?.is_granted() {
            return Ok(self.deny(first, key, "write"));
        }
        for lpn in first..first + count {
            self.register(lpn, key);
        }
        self.program_host_pages(
            first,
            |off, buf| {
                let hp = buf.len();
                buf.copy_from_slice(&data[off * hp..(off + 1) * hp]);
            },
            count,
        )?;
        Ok(self.grant(first, key, "write"))
    }

    pub fn read_multi(
        &mut self,
        first: u64,
        count: u64,
        key: AccessKey,
    ) -> Result<ReadOutcome, FtlError> {
        self.begin()?;
        self.check_range(first, count)?;
        let mode = self.cfg.read_multi_mode;
        if !self.authorize_multi(first, count, key, mode)?.is_granted() {
            self.deny(first, key, "read");
            return Ok(ReadOutcome::Denied);
        }
        let hp = self.host_page_bytes();
        let mut out = Vec::with_capacity(count as usize * hp);
        let mut lpn = first;
        while lpn < first + count {
            let (d, s) = self.split(lpn);
            let run = ((self.layout.subpages - s as u64).min(first + count - lpn)) as usize;
            match self.table.ppn(d) {
                Some(ppn) => {
                    let page = self.flash.read_page(ppn)?;
                    out.extend_from_slice(&page[s * hp..(s + run) * hp]);
                }
                None => out.resize(out.len() + run * hp, 0xFF),
            }
            lpn += run as u64;
        }
        self.grant(first, key, "read");
        Ok(ReadOutcome::Granted(out))
    }

    /// Deallocates host pages and clears their keys. Every page must be
    /// authorized by `key`.
    pub fn trim(&mut self, first: u64, count: u64, key: AccessKey) -> Result<Verdict, FtlError> {
        self.begin()?;
        self.check_range(first, count)?;
        if !self
            .authorize_multi(first, count, key, MultiMode::AllLpns)?
            .is_granted()
        {
            return Ok(self.deny(first, key, "trim"));
        }
        for lpn in first..first + count {
            match self.cfg.variant {
                FtlVariant::Baseline => {}
                FtlVariant::KeyStatic => {
                    let (d, s) = self.split(lpn);
                    self.table.set_key(d, s, None);
                }
                FtlVariant::KeyDynamic => {
                    self.index.as_mut().unwrap().remove(lpn, key);
                }
            }
        }
        // Whole device pages are unmapped; partial ones are rewritten with
        // the erased pattern in the trimmed slots.
        let sub = self.layout.subpages;
        let mut lpn = first;
        while lpn < first + count {
            let (d, s) = self.split(lpn);
            let run = (sub - s as u64).min(first + count - lpn);
            if run == sub {
                if let Some(old) = self.table.ppn(d) {
                    self.table.set_ppn(d, None);
                    self.retire(old)?;
                }
            } else if self.table.ppn(d).is_some() {
                self.program_host_pages(lpn, |_, buf| buf.fill(0xFF), run)?;
            }
            lpn += run;
        }
        self.metrics.trims += 1;
        Ok(self.grant(first, key, "trim"))
    }

    fn retire(&mut self, ppn: u64) -> Result<(), FtlError> {
        self.blocks.invalidate(ppn);
        self.flash.invalidate_page(ppn)?;
        Ok(())
    }

    /// Read-modify-write of the device pages covering `count` host pages.
    /// `fill(i, buf)` supplies host page `first + i`.
    fn program_host_pages(
        &mut self,
        first: u64,
        mut fill: impl FnMut(usize, &mut [u8]),
        count: u64,
    ) -> Result<(), FtlError> {
        let hp = self.host_page_bytes();
        let mut lpn = first;
        while lpn < first + count {
            let (d, s) = self.split(lpn);
            let run = ((self.layout.subpages - s as u64).min(first + count - lpn)) as usize;
            // Allocate before reading: GC may relocate this very page.
            let dest = self.allocate(true)?;
            let mut buf = match self.table.ppn(d) {
                Some(old) => self.flash.read_page(old)?,
                None => vec![0xFF; self.cfg.geometry.device_page_bytes as usize],
            };
            for i in 0..run {
                let off = (lpn - first) as usize + i;
                fill(off, &mut buf[(s + i) * hp..(s + i + 1) * hp]);
            }
            self.flash.program_page(dest, &buf)?;
            if let Some(old) = self.table.ppn(d) {
                self.retire(old)?;
            }
            self.blocks.set_valid(dest, d);
            self.table.set_ppn(d, Some(dest));
            lpn += run as u64;
        }
        Ok(())
    }

    fn allocate(&mut self, allow_gc: bool) -> Result<u64, FtlError> {
        loop {
            if let Some(ppn) = self.blocks.take_page() {
                return Ok(ppn);
            }
            if allow_gc {
                let mut rounds = 0;
                while self.blocks.free_count() <= self.cfg.gc_watermark
                    && rounds < 2 * self.layout.data_blocks
                {
                    match self.gc_once() {
                        Ok(_) => rounds += 1,
                        Err(FtlError::NoSpace) => break,
                        Err(e) => return Err(e),
                    }
                    if self.blocks.take_page_available() {
                        break;
                    }
                }
                if let Some(ppn) = self.blocks.take_page() {
                    return Ok(ppn);
                }
            }
            if !self.blocks.open_next() {
                return Err(FtlError::NoSpace);
            }
        }
    }

    fn gc_once(&mut self) -> Result<usize, FtlError> {
        let victim = self.blocks.victim().ok_or(FtlError::NoSpace)?;
        if u64::from(self.blocks.valid_in(victim)) == self.cfg.geometry.pages_per_block {
            return Err(FtlError::NoSpace);
        }
        let moving = self.blocks.valid_pages(victim);
        for &(ppn, dlpn) in &moving {
            let data = self.flash.read_page(ppn)?;
            let dest = self.allocate(false)?;
            self.flash.program_page(dest, &data)?;
            self.retire(ppn)?;
            self.blocks.set_valid(dest, dlpn);
            self.table.set_ppn(dlpn, Some(dest));
        }
        self.flash.erase_block(victim)?;
        self.blocks.release(victim);
        self.metrics.gc_runs += 1;
        self.metrics.gc_moves += moving.len() as u64;
        self.log.record(LogRecord {
            ts: self.op_index,
            layer: LogLayer::Ftl,
            event: LogEvent::Gc,
            lba: 0,
            key: AccessKey::NONE,
            detail: format!("victim={victim} moved={}", moving.len()),
        });
        Ok(moving.len())
    }

    /// Reclaims one victim block (greedy: fewest valid pages). Returns the
    /// number of valid pages moved.
    pub fn run_gc(&mut self) -> Result<usize, FtlError> {
        if self.needs_recovery {
            return Err(FtlError::NeedsRecovery);
        }
        self.gc_once()
    }

    /// Persists the mapping table (and key index). Returns bytes programmed.
    pub fn handle_flush(&mut self, mode: FlushMode) -> Result<u64, FtlError> {
        self.begin()?;
        let table_total = self.table.table_pages() as u32;
        let table_pages: Vec<usize> = match mode {
            FlushMode::AllFlush => (0..table_total as usize).collect(),
            FlushMode::SelectiveFlush => self.table.dirty_pages(),
        };
        let mut writes: Vec<(Region, u32, u32, Vec<u8>)> = table_pages
            .into_iter()
            .map(|p| {
                (
                    Region::Table,
                    p as u32,
                    table_total,
                    self.table.serialize_page(p),
                )
            })
            .collect();
        let mut image_pages = u64::from(table_total);
        let mut index_image = None;
        if let Some(idx) = &self.index {
            let bytes = idx.serialize();
            let chunks: Vec<Vec<u8>> = if bytes.is_empty() {
                vec![Vec::new()]
            } else {
                bytes
                    .chunks(self.layout.payload_bytes)
                    .map(<[u8]>::to_vec)
                    .collect()
            };
            let n = chunks.len() as u32;
            let rewrite_all =
                mode == FlushMode::AllFlush || chunks.len() != self.flushed_index_pages.len();
            for (i, c) in chunks.iter().enumerate() {
                if rewrite_all || self.flushed_index_pages[i] != *c {
                    writes.push((Region::Index, i as u32, n, c.clone()));
                }
            }
            image_pages += u64::from(n);
            index_image = Some(chunks);
        }
        self.metrics.flushes += 1;
        self.metrics.flush_image_pages += image_pages;
        if writes.is_empty() {
            self.emit(
                LogEvent::Flush,
                0,
                AccessKey::NONE,
                format!("mode={} pages=0", mode.short()),
            );
            return Ok(0);
        }
        let seq = self.meta.next_seq();
        let variant = self.cfg.variant.tag();
        for (region, index, region_pages, payload) in &writes {
            let page = MetaPage {
                variant,
                region: *region,
                seq,
                index: *index,
                region_pages: *region_pages,
                payload: payload.clone(),
            };
            self.meta.append(&mut self.flash, &page)?;
        }
        self.table.clear_dirty();
        if let Some(chunks) = index_image {
            self.flushed_index_pages = chunks;
        }
        let bytes = writes.len() as u64 * self.cfg.geometry.device_page_bytes;
        self.metrics.flushed_pages += writes.len() as u64;
        self.metrics.flushed_bytes += bytes;
        self.emit(
            LogEvent::Flush,
            0,
            AccessKey::NONE,
            format!("mode={} pages={} seq={seq}", mode.short(), writes.len()),
        );
        Ok(bytes)
    }

    /// FLUSH as issued by the host, using the configured mode.
    pub fn flush(&mut self) -> Result<u64, FtlError> {
        self.handle_flush(self.cfg.flush_mode)
    }

    /// Simulated power loss: flash survives, everything in RAM is gone.
    /// The device refuses commands until [`recover`](Self::recover).
    pub fn power_cycle(&mut self) {
        self.flash.power_cycle();
        self.table = Self::empty_table(&self.cfg, &self.layout);
        self.index = Self::empty_index(&self.cfg, &self.layout);
        self.flushed_index_pages.clear();
        self.lockout = LockoutState::new(self.cfg.lockout_threshold).expect("validated");
        self.needs_recovery = true;
    }

    /// Rebuilds the volatile table from the newest flushed image.
    pub fn recover(&mut self) -> Result<(), FtlError> {
        let g = self.cfg.geometry;
        let (meta, regions) = MetaLog::recover(
            &mut self.flash,
            0,
            self.layout.meta_blocks,
            self.cfg.variant.tag(),
        )?;
        let mut table = Self::empty_table(&self.cfg, &self.layout);
        if let Some(r) = regions.get(&Region::Table) {
            if r.region_pages as usize != table.table_pages() {
                return Err(FtlError::CorruptImage(format!(
                    "table image has {} pages, expected {}",
                    r.region_pages,
                    table.table_pages()
                )));
            }
            for (idx, payload) in &r.pages {
                if !table.load_page(*idx as usize, payload) {
                    return Err(FtlError::CorruptImage(format!(
                        "table page {idx} malformed"
                    )));
                }
            }
        }
        table.clear_dirty();

        let mut flushed_index_pages = Vec::new();
        let index = match self.cfg.variant {
            FtlVariant::KeyDynamic => {
                let mut bytes = Vec::new();
                if let Some(r) = regions.get(&Region::Index) {
                    for i in 0..r.region_pages {
                        let p = r.pages.get(&i).ok_or_else(|| {
                            FtlError::CorruptImage(format!("index page {i} missing"))
                        })?;
                        bytes.extend_from_slice(p);
                        flushed_index_pages.push(p.clone());
                    }
                }
                let lpns = self.layout.device_lpns * self.layout.subpages;
                Some(
                    KeyLockIndex::deserialize(lpns, &bytes)
                        .map_err(|e| FtlError::CorruptImage(e.to_string()))?,
                )
            }
            _ => None,
        };

        let flash = &self.flash;
        let mut blocks = BlockManager::rebuild(
            self.layout.meta_blocks,
            self.layout.data_blocks,
            g.pages_per_block,
            |b| flash.block_is_erased(b).unwrap_or(false),
        );
        for d in 0..self.layout.device_lpns {
            if let Some(ppn) = table.ppn(d) {
                if !blocks.contains_ppn(ppn) || !blocks.set_valid(ppn, d) {
                    return Err(FtlError::CorruptImage(format!(
                        "device LPN {d} maps to invalid PPN {ppn}"
                    )));
                }
            }
        }

        self.table = table;
        self.index = index;
        self.flushed_index_pages = flushed_index_pages;
        self.blocks = blocks;
        self.meta = meta;
        self.needs_recovery = false;
        Ok(())
    }

    /// Device-LPN -> PPN view of the mapping; diagnostics.
    pub fn mapped_pages(&self) -> BTreeMap<u64, u64> {
        (0..self.layout.device_lpns)
            .filter_map(|d| self.table.ppn(d).map(|p| (d, p)))
            .collect()
    }

    pub fn free_blocks(&self) -> u64 {
        self.blocks.free_count()
    }

    pub fn valid_pages_in(&self, block: u64) -> u32 {
        self.blocks.valid_in(block)
    }
}

#[cfg(test)]
mod tests;
