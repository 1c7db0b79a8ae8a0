//! Host-side key plumbing: a flat file layer whose block requests carry the
//! key the file was opened with.
//!
//! Every file page maps to one host LPN (eight sectors). A file read or
//! write is split into one command per page; each command's key comes from
//! the [`KeyInodeTable`] entry of the handle, is parked in the
//! [`KeyLbaTable`] while the command is in flight, and is removed once the
//! completion is back. Requests that bypass the file layer ([`HostStack::raw_io`])
//! carry [`AccessKey::NONE`].

mod cache;
mod fs;
mod tables;

use std::collections::HashMap;
use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use thiserror::Error;

pub use cache::PageCache;
pub use fs::{Extent, Inode, InodeId};
pub use tables::{HandleId, KeyInodeTable, KeyLbaTable};

use fs::FileSystem;

use crate::flash::FlashGeometry;
use crate::ftl::KeyFtl;
use crate::key::AccessKey;
use crate::log::{EventLog, LogEvent, LogLayer, LogRecord};
use crate::transport::{
    Command, CommandId, Completion, CompletionStatus, Transport, TransportError, QUEUE_CAPACITY,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CloseMode {
    /// Closing a handle deletes its KeyInode entry.
    Close,
    /// Entries are left behind on close.
    NoClose,
}

impl CloseMode {
    pub fn name(self) -> &'static str {
        match self {
            CloseMode::Close => "close",
            CloseMode::NoClose => "noclose",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HostConfig {
    /// Read the first file page from the device on open and delete, and
    /// never serve it from the cache.
    pub read_verify: bool,
    pub close_mode: CloseMode,
    /// Page cache capacity in pages; 0 disables the cache.
    pub cache_pages: usize,
    /// Commands kept outstanding per file operation.
    pub queue_depth: usize,
}

impl Default for HostConfig {
    fn default() -> Self {
        HostConfig {
            read_verify: true,
            close_mode: CloseMode::Close,
            cache_pages: 1024,
            queue_depth: 1,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HostError {
    #[error("no such file: {0}")]
    NotFound(String),
    #[error("file exists: {0}")]
    AlreadyExists(String),
    #[error("device refused the verification read for {0}")]
    OpenDeniedByDevice(String),
    #[error("bad file handle {0}")]
    BadHandle(HandleId),
    #[error("device denied access at lba {lba:#x}")]
    AccessDenied { lba: u64 },
    #[error("device refused deletion of {0}")]
    DeleteDenied(String),
    #[error("range {offset}+{len} exceeds file size {size}")]
    OutOfRange { offset: u64, len: u64, size: u64 },
    #[error("device is locked out")]
    DeviceLockedOut,
    #[error("device error at lba {lba:#x}")]
    DeviceError { lba: u64 },
    #[error("no free space")]
    NoSpace,
    #[error("{pages} pages at lpn {lpn:#x} are not free")]
    PlacementUnavailable { lpn: u64, pages: u64 },
    #[error("invalid host configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Where a block request at a given address comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RequestClass {
    NormalFileIo(InodeId),
    DirectIo,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RawOp {
    Read,
    Write(Vec<u8>),
    Trim,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FileHandle(HandleId);

impl FileHandle {
    pub fn id(self) -> HandleId {
        self.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HostMetrics {
    pub file_ops: u64,
    pub device_commands: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
}

#[derive(Debug)]
struct OpenFile {
    inode: InodeId,
}

struct PageIo {
    lpn: u64,
    key: AccessKey,
    owner: Option<InodeId>,
    command: Command,
    data: Option<Vec<u8>>,
}

pub struct HostStack {
    cfg: HostConfig,
    geometry: FlashGeometry,
    transport: Arc<Transport>,
    fs: Mutex<FileSystem>,
    handles: Mutex<HashMap<HandleId, Arc<Mutex<OpenFile>>>>,
    key_inode: KeyInodeTable,
    key_lba: KeyLbaTable,
    cache: Mutex<PageCache>,
    next_handle: AtomicU64,
    file_ops: AtomicU64,
    device_commands: AtomicU64,
    log: EventLog,
}

impl std::fmt::Debug for HostStack {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HostStack")
            .field("cfg", &self.cfg)
            .field("metrics", &self.metrics())
            .finish_non_exhaustive()
    }
}

impl HostStack {
    pub fn new(cfg: HostConfig, transport: Arc<Transport>) -> Result<Self, HostError> {
        if cfg.queue_depth == 0 || cfg.queue_depth > QUEUE_CAPACITY {
            return Err(HostError::Config(format!(
                "queue depth {} outside 1..={QUEUE_CAPACITY}",
                cfg.queue_depth
            )));
        }
        let geometry = *transport.geometry();
        let host_lpns = transport.with_device(|d| d.host_lpns());
        Ok(HostStack {
            cache: Mutex::new(PageCache::new(cfg.cache_pages)),
            cfg,
            geometry,
            log: transport.log().clone(),
            transport,
            fs: Mutex::new(FileSystem::new(host_lpns)),
            handles: Mutex::new(HashMap::new()),
            key_inode: KeyInodeTable::default(),
            key_lba: KeyLbaTable::default(),
            next_handle: AtomicU64::new(1),
            file_ops: AtomicU64::new(0),
            device_commands: AtomicU64::new(0),
        })
    }

    /// Builds the whole stack on top of `device`.
    pub fn with_device(cfg: HostConfig, device: KeyFtl) -> Result<Self, HostError> {
        HostStack::new(cfg, Arc::new(Transport::new(device)))
    }

    pub fn config(&self) -> &HostConfig {
        &self.cfg
    }

    pub fn transport(&self) -> &Arc<Transport> {
        &self.transport
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn key_inode_table(&self) -> &KeyInodeTable {
        &self.key_inode
    }

    pub fn key_lba_table(&self) -> &KeyLbaTable {
        &self.key_lba
    }

    pub fn metrics(&self) -> HostMetrics {
        let cache = self.cache.lock().unwrap();
        HostMetrics {
            file_ops: self.file_ops.load(Ordering::Relaxed),
            device_commands: self.device_commands.load(Ordering::Relaxed),
            cache_hits: cache.hits(),
            cache_misses: cache.misses(),
        }
    }

    pub fn cached_pages(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    pub fn drop_caches(&self) {
        self.cache.lock().unwrap().clear();
    }

    pub fn open_handles(&self) -> usize {
        self.handles.lock().unwrap().len()
    }

    pub fn file_count(&self) -> usize {
        self.fs.lock().unwrap().file_count()
    }

    pub fn inode(&self, path: &str) -> Option<Inode> {
        let fs = self.fs.lock().unwrap();
        fs.lookup(path).and_then(|id| fs.inode(id).cloned())
    }

    pub fn exists(&self, path: &str) -> bool {
        self.fs.lock().unwrap().lookup(path).is_some()
    }

    pub fn free_pages(&self) -> u64 {
        self.fs.lock().unwrap().free_pages()
    }

    pub fn quarantined_pages(&self) -> u64 {
        self.fs.lock().unwrap().quarantined_pages()
    }

    fn page_bytes(&self) -> u64 {
        self.geometry.host_page_bytes
    }

    fn spp(&self) -> u64 {
        self.geometry.sectors_per_host_page()
    }

    fn tick(&self) -> u64 {
        self.file_ops.fetch_add(1, Ordering::Relaxed)
    }

    fn note_deny(&self, ts: u64, lba: u64, key: AccessKey, detail: &str) {
        self.log.record(LogRecord {
            ts,
            layer: LogLayer::Host,
            event: LogEvent::Deny,
            lba,
            key,
            detail: detail.to_string(),
        });
    }

    /// Creates an empty file.
    pub fn create(&self, path: &str) -> Result<InodeId, HostError> {
        self.fs.lock().unwrap().create(path)
    }

    /// Creates an empty file whose first page sits at sector `lba`, with
    /// `bytes` preallocated contiguously from there.
    pub fn create_at(&self, path: &str, lba: u64, bytes: u64) -> Result<InodeId, HostError> {
        if !lba.is_multiple_of(self.spp()) {
            return Err(TransportError::Unaligned { lba, count: 0 }.into());
        }
        let mut fs = self.fs.lock().unwrap();
        let id = fs.create(path)?;
        let pages = bytes.div_ceil(self.page_bytes()).max(1);
        if let Err(e) = fs.place_at(id, lba / self.spp(), pages) {
            fs.remove(path, &[]);
            return Err(e);
        }
        Ok(id)
    }

    /// Opens `path` with `key`. With read-verify on, a non-empty file's
    /// first page is read from the device with that key and the open fails
    /// if the device refuses.
    pub fn open_key(
        &self,
        path: &str,
        key: AccessKey,
        create: bool,
    ) -> Result<FileHandle, HostError> {
        let ts = self.tick();
        let inode = {
            let mut fs = self.fs.lock().unwrap();
            match fs.lookup(path) {
                Some(id) => fs.inode(id).unwrap().clone(),
                None if create => {
                    let id = fs.create(path)?;
                    fs.inode(id).unwrap().clone()
                }
                None => return Err(HostError::NotFound(path.to_string())),
            }
        };
        let handle = self.next_handle.fetch_add(1, Ordering::Relaxed);
        self.key_inode.insert(inode.id, handle, key);
        if self.cfg.read_verify && inode.size > 0 {
            let lpn = inode.lpn_of(0).expect("non-empty file has a first page");
            let done = self.device_io(vec![PageIo {
                lpn,
                key,
                owner: Some(inode.id),
                command: Command::Read,
                data: None,
            }]);
            let failed = match done {
                Ok(c) => !c[0].is_success(),
                Err(e) => {
                    self.key_inode.remove(inode.id, handle);
                    return Err(e);
                }
            };
            if failed {
                self.key_inode.remove(inode.id, handle);
                self.note_deny(ts, lpn * self.spp(), key, "open-verify-failed");
                return Err(HostError::OpenDeniedByDevice(path.to_string()));
            }
        }
        self.handles
            .lock()
            .unwrap()
            .insert(handle, Arc::new(Mutex::new(OpenFile { inode: inode.id })));
        Ok(FileHandle(handle))
    }

    pub fn close_key(&self, handle: FileHandle) -> Result<(), HostError> {
        let of = self
            .handles
            .lock()
            .unwrap()
            .remove(&handle.0)
            .ok_or(HostError::BadHandle(handle.0))?;
        let inode = of.lock().unwrap().inode;
        if self.cfg.close_mode == CloseMode::Close {
            self.key_inode.remove(inode, handle.0);
        }
        Ok(())
    }

    fn handle(&self, handle: FileHandle) -> Result<Arc<Mutex<OpenFile>>, HostError> {
        self.handles
            .lock()
            .unwrap()
            .get(&handle.0)
            .cloned()
            .ok_or(HostError::BadHandle(handle.0))
    }

    fn key_for(&self, inode: InodeId, handle: FileHandle) -> Result<AccessKey, HostError> {
        self.key_inode
            .get(inode, handle.0)
            .ok_or(HostError::BadHandle(handle.0))
    }

    /// Submits one command per page, `queue_depth` at a time, and returns
    /// the completions in request order. A lockout anywhere aborts.
    fn device_io(&self, reqs: Vec<PageIo>) -> Result<Vec<Completion>, HostError> {
        let spp = self.spp();
        let mut out = Vec::with_capacity(reqs.len());
        let mut reqs = reqs.into_iter().peekable();
        while reqs.peek().is_some() {
            let batch: Vec<PageIo> = reqs.by_ref().take(self.cfg.queue_depth).collect();
            let mut ids: Vec<CommandId> = Vec::with_capacity(batch.len());
            let mut parked = Vec::with_capacity(batch.len());
            let mut submit_err = None;
            for r in batch {
                let lba = r.lpn * spp;
                if r.key.is_some() {
                    if let Some(owner) = r.owner {
                        debug_assert_eq!(
                            self.fs.lock().unwrap().owner_of(r.lpn),
                            Some(owner),
                            "keyed request outside its file"
                        );
                    }
                }
                self.key_lba.insert(lba, r.key);
                parked.push((lba, r.key));
                let key = self.key_lba.get(lba).unwrap_or(r.key);
                let res = loop {
                    match self.transport.submit_command(
                        r.command,
                        lba,
                        spp as u32,
                        key,
                        r.data.clone(),
                    ) {
                        Err(TransportError::QueueFull) => {
                            // Other clients filled the queue: let the
                            // device catch up, completions go to the mailbox.
                            self.transport.collect(&[]);
                        }
                        other => break other,
                    }
                };
                match res {
                    Ok(id) => ids.push(id),
                    Err(e) => {
                        submit_err = Some(e);
                        break;
                    }
                }
            }
            let done = self.transport.collect(&ids);
            self.device_commands
                .fetch_add(ids.len() as u64, Ordering::Relaxed);
            for (lba, key) in parked {
                self.key_lba.remove(lba, key);
            }
            if let Some(e) = submit_err {
                return Err(e.into());
            }
            if done
                .iter()
                .any(|c| c.status == CompletionStatus::DeviceLockedOut)
            {
                return Err(HostError::DeviceLockedOut);
            }
            out.extend(done);
        }
        Ok(out)
    }

    pub fn file_read(
        &self,
        handle: FileHandle,
        offset: u64,
        len: u64,
    ) -> Result<Vec<u8>, HostError> {
        let ts = self.tick();
        let of = self.handle(handle)?;
        let of = of.lock().unwrap();
        let inode = self
            .fs
            .lock()
            .unwrap()
            .inode(of.inode)
            .cloned()
            .ok_or(HostError::BadHandle(handle.0))?;
        let end = offset.checked_add(len).filter(|&e| e <= inode.size);
        let Some(end) = end else {
            return Err(HostError::OutOfRange {
                offset,
                len,
                size: inode.size,
            });
        };
        if len == 0 {
            return Ok(Vec::new());
        }
        let key = self.key_for(inode.id, handle)?;
        let pb = self.page_bytes();
        let pages = offset / pb..end.div_ceil(pb);
        let data = self.fetch_pages(ts, &inode, pages.clone(), key)?;
        let mut out = Vec::with_capacity(len as usize);
        for (p, page) in pages.zip(data) {
            let lo = offset.max(p * pb) - p * pb;
            let hi = end.min((p + 1) * pb) - p * pb;
            out.extend_from_slice(&page[lo as usize..hi as usize]);
        }
        Ok(out)
    }

    /// Page contents for `pages`, from the cache where allowed and from the
    /// device otherwise. Device reads populate the cache.
    fn fetch_pages(
        &self,
        ts: u64,
        inode: &Inode,
        pages: Range<u64>,
        key: AccessKey,
    ) -> Result<Vec<Vec<u8>>, HostError> {
        let mut slots: Vec<Option<Vec<u8>>> = Vec::with_capacity(pages.clone().count());
        let mut misses = Vec::new();
        {
            let mut cache = self.cache.lock().unwrap();
            for p in pages.clone() {
                let hit = if p == 0 && self.cfg.read_verify {
                    None
                } else {
                    cache.get(inode.id, p)
                };
                if hit.is_none() {
                    misses.push(p);
                }
                slots.push(hit);
            }
        }
        let reqs = misses
            .iter()
            .map(|&p| PageIo {
                lpn: inode.lpn_of(p).expect("page within allocation"),
                key,
                owner: Some(inode.id),
                command: Command::Read,
                data: None,
            })
            .collect();
        let done = self.device_io(reqs)?;
        if let Some(c) = done.iter().find(|c| !c.is_success()) {
            return Err(self.io_failure(ts, c, key, "read-denied"));
        }
        let mut cache = self.cache.lock().unwrap();
        for (p, c) in misses.into_iter().zip(done) {
            let data = c.payload.expect("granted read carries data");
            cache.put(inode.id, p, data.clone());
            slots[(p - pages.start) as usize] = Some(data);
        }
        Ok(slots.into_iter().map(Option::unwrap).collect())
    }

    fn io_failure(&self, ts: u64, c: &Completion, key: AccessKey, detail: &str) -> HostError {
        match c.status {
            CompletionStatus::AccessDenied => {
                self.note_deny(ts, c.lba, key, detail);
                HostError::AccessDenied { lba: c.lba }
            }
            CompletionStatus::DeviceLockedOut => HostError::DeviceLockedOut,
            _ => HostError::DeviceError { lba: c.lba },
        }
    }

    pub fn file_write(
        &self,
        handle: FileHandle,
        offset: u64,
        data: &[u8],
    ) -> Result<(), HostError> {
        let ts = self.tick();
        let of = self.handle(handle)?;
        let of = of.lock().unwrap();
        if data.is_empty() {
            return Ok(());
        }
        let pb = self.page_bytes();
        let end = offset + data.len() as u64;
        let inode = {
            let mut fs = self.fs.lock().unwrap();
            fs.reserve(of.inode, end.div_ceil(pb))?;
            fs.inode(of.inode)
                .cloned()
                .ok_or(HostError::BadHandle(handle.0))?
        };
        let key = self.key_for(inode.id, handle)?;
        let first = offset / pb;
        let last = end.div_ceil(pb);
        // Partially covered pages that already hold file data need a
        // read-modify-write.
        let partial = |p: u64| {
            let covers = offset <= p * pb && end >= (p + 1) * pb;
            !covers && p * pb < inode.size
        };
        let mut old: HashMap<u64, Vec<u8>> = HashMap::new();
        for p in [first, last - 1] {
            if partial(p) && !old.contains_key(&p) {
                let page = self.fetch_pages(ts, &inode, p..p + 1, key)?.pop().unwrap();
                old.insert(p, page);
            }
        }
        let mut bufs = Vec::with_capacity((last - first) as usize);
        for p in first..last {
            let mut buf = old.remove(&p).unwrap_or_else(|| vec![0; pb as usize]);
            let lo = offset.max(p * pb);
            let hi = end.min((p + 1) * pb);
            buf[(lo - p * pb) as usize..(hi - p * pb) as usize]
                .copy_from_slice(&data[(lo - offset) as usize..(hi - offset) as usize]);
            bufs.push(buf);
        }
        let reqs = bufs
            .iter()
            .enumerate()
            .map(|(i, b)| PageIo {
                lpn: inode.lpn_of(first + i as u64).expect("reserved"),
                key,
                owner: Some(inode.id),
                command: Command::Write,
                data: Some(b.clone()),
            })
            .collect();
        let done = self.device_io(reqs)?;
        let mut cache = self.cache.lock().unwrap();
        for (i, (c, b)) in done.iter().zip(bufs).enumerate() {
            if c.is_success() {
                cache.put(inode.id, first + i as u64, b);
            }
        }
        drop(cache);
        if let Some(c) = done.iter().find(|c| !c.is_success()) {
            return Err(self.io_failure(ts, c, key, "write-denied"));
        }
        if end > inode.size {
            self.fs.lock().unwrap().set_size(inode.id, end);
        }
        Ok(())
    }

    /// Deletes `path`. With read-verify on, the first page is read with
    /// `key` and the file is left untouched if the device refuses. The
    /// file's pages are then trimmed with `key`.
    pub fn file_delete(&self, path: &str, key: AccessKey) -> Result<(), HostError> {
        let ts = self.tick();
        let inode = self
            .inode(path)
            .ok_or_else(|| HostError::NotFound(path.to_string()))?;
        let spp = self.spp();
        if self.cfg.read_verify && inode.size > 0 {
            let lpn = inode.lpn_of(0).unwrap();
            let done = self.device_io(vec![PageIo {
                lpn,
                key,
                owner: Some(inode.id),
                command: Command::Read,
                data: None,
            }])?;
            if !done[0].is_success() {
                self.note_deny(ts, lpn * spp, key, "delete-verify-failed");
                return Err(HostError::DeleteDenied(path.to_string()));
            }
        }
        // Trim in chunks that fit the 16-bit sector count.
        let max_pages = (u64::from(u16::MAX) / spp).min(4096);
        let mut chunks = Vec::new();
        for e in &inode.extents {
            let mut lpn = e.lpn;
            while lpn < e.lpn + e.pages {
                let n = max_pages.min(e.lpn + e.pages - lpn);
                chunks.push(lpn..lpn + n);
                lpn += n;
            }
        }
        let mut refused = Vec::new();
        for r in chunks {
            let c = self.submit_one(Command::Trim, r.start * spp, r.end - r.start, key, None)?;
            if c.status == CompletionStatus::DeviceLockedOut {
                return Err(HostError::DeviceLockedOut);
            }
            if !c.is_success() {
                refused.push(r);
            }
        }
        if !refused.is_empty() {
            self.note_deny(ts, refused[0].start * spp, key, "delete-trim-denied");
            if self.cfg.read_verify {
                return Err(HostError::DeleteDenied(path.to_string()));
            }
        }
        // Without read-verify the unlink goes ahead regardless; pages the
        // device would not release are never reused.
        self.fs.lock().unwrap().remove(path, &refused);
        self.key_inode.remove_inode(inode.id);
        self.cache.lock().unwrap().drop_inode(inode.id);
        Ok(())
    }

    fn submit_one(
        &self,
        command: Command,
        lba: u64,
        pages: u64,
        key: AccessKey,
        data: Option<Vec<u8>>,
    ) -> Result<Completion, HostError> {
        let count =
            u32::try_from(pages * self.spp()).map_err(|_| TransportError::FieldOverflow {
                field: "count",
                value: pages * self.spp(),
            })?;
        let res = loop {
            match self
                .transport
                .submit_command(command, lba, count, key, data.clone())
            {
                Err(TransportError::QueueFull) => {
                    self.transport.collect(&[]);
                }
                other => break other,
            }
        };
        let id = res?;
        self.device_commands.fetch_add(1, Ordering::Relaxed);
        Ok(self.transport.collect(&[id]).pop().unwrap())
    }

    pub fn classify_request(&self, lba: u64) -> RequestClass {
        match self.fs.lock().unwrap().owner_of(lba / self.spp()) {
            Some(id) => RequestClass::NormalFileIo(id),
            None => RequestClass::DirectIo,
        }
    }

    /// Direct block access: bypasses files and the cache, carries no key,
    /// and is split into one command per host page.
    pub fn raw_io(
        &self,
        lba: u64,
        sector_count: u64,
        op: RawOp,
    ) -> Result<Vec<Completion>, HostError> {
        self.tick();
        let spp = self.spp();
        if !lba.is_multiple_of(spp) || !sector_count.is_multiple_of(spp) || sector_count == 0 {
            return Err(TransportError::Unaligned {
                lba,
                count: u16::try_from(sector_count).unwrap_or(u16::MAX),
            }
            .into());
        }
        let pages = sector_count / spp;
        let pb = self.page_bytes() as usize;
        let (command, payload) = match op {
            RawOp::Read => (Command::Read, None),
            RawOp::Trim => (Command::Trim, None),
            RawOp::Write(data) => {
                if data.len() != pages as usize * pb {
                    return Err(TransportError::PayloadSize {
                        got: data.len(),
                        expected: pages as usize * pb,
                    }
                    .into());
                }
                (Command::Write, Some(data))
            }
        };
        let reqs = (0..pages)
            .map(|i| PageIo {
                lpn: lba / spp + i,
                key: AccessKey::NONE,
                owner: None,
                command,
                data: payload
                    .as_ref()
                    .map(|d| d[i as usize * pb..(i as usize + 1) * pb].to_vec()),
            })
            .collect();
        // A lockout is reported through the completions here.
        match self.device_io(reqs) {
            Err(HostError::DeviceLockedOut) => Ok((0..pages)
                .map(|i| Completion {
                    id: 0,
                    command,
                    lba: lba + i * spp,
                    status: CompletionStatus::DeviceLockedOut,
                    payload: None,
                })
                .collect()),
            other => other,
        }
    }

    /// Issues a FLUSH.
    pub fn sync(&self) -> Result<(), HostError> {
        let c = self.submit_one(Command::Flush, 0, 0, AccessKey::NONE, None)?;
        match c.status {
            CompletionStatus::Success => Ok(()),
            CompletionStatus::DeviceLockedOut => Err(HostError::DeviceLockedOut),
            _ => Err(HostError::DeviceError { lba: 0 }),
        }
    }
}

#[cfg(test)]
mod tests;
