//! Flat-namespace file layer: inodes, contiguous extents and a first-fit
//! allocator over host LPNs.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use super::HostError;

pub type InodeId = u64;

/// A run of `pages` file pages starting at file page `file_page`, stored
/// at host LPN `lpn` onwards.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Extent {
    pub file_page: u64,
    pub lpn: u64,
    pub pages: u64,
}

impl Extent {
    pub fn lpns(&self) -> Range<u64> {
        self.lpn..self.lpn + self.pages
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Inode {
    pub id: InodeId,
    pub size: u64,
    pub extents: Vec<Extent>,
}

impl Inode {
    pub fn capacity_pages(&self) -> u64 {
        self.extents.iter().map(|e| e.pages).sum()
    }

    pub fn lpn_of(&self, file_page: u64) -> Option<u64> {
        self.extents
            .iter()
            .find(|e| (e.file_page..e.file_page + e.pages).contains(&file_page))
            .map(|e| e.lpn + (file_page - e.file_page))
    }

    /// Sector ranges owned by the file, one per extent.
    pub fn address_space(&self, sectors_per_page: u64) -> Vec<Range<u64>> {
        self.extents
            .iter()
            .map(|e| e.lpn * sectors_per_page..(e.lpn + e.pages) * sectors_per_page)
            .collect()
    }

    pub fn owns_lba(&self, lba: u64, sectors_per_page: u64) -> bool {
        let lpn = lba / sectors_per_page;
        self.extents.iter().any(|e| e.lpns().contains(&lpn))
    }
}

/// First-fit allocator of contiguous LPN runs.
#[derive(Clone, Debug)]
pub(crate) struct Allocator {
    /// start -> length of each free run, never adjacent.
    free: BTreeMap<u64, u64>,
}

impl Allocator {
    pub fn new(total: u64) -> Self {
        let mut free = BTreeMap::new();
        if total > 0 {
            free.insert(0, total);
        }
        Allocator { free }
    }

    pub fn free_pages(&self) -> u64 {
        self.free.values().sum()
    }

    /// Length of the free run beginning exactly at `lpn`.
    fn run_at(&self, lpn: u64) -> u64 {
        match self.free.range(..=lpn).next_back() {
            Some((&s, &l)) if lpn < s + l => s + l - lpn,
            _ => 0,
        }
    }

    /// Takes `[lpn, lpn + pages)` if it is entirely free.
    pub fn alloc_at(&mut self, lpn: u64, pages: u64) -> bool {
        if pages == 0 || self.run_at(lpn) < pages {
            return false;
        }
        let (&s, &l) = self.free.range(..=lpn).next_back().unwrap();
        self.free.remove(&s);
        if lpn > s {
            self.free.insert(s, lpn - s);
        }
        let end = lpn + pages;
        if end < s + l {
            self.free.insert(end, s + l - end);
        }
        true
    }

    pub fn first_fit(&mut self, pages: u64) -> Option<u64> {
        let start = self
            .free
            .iter()
            .find(|(_, &l)| l >= pages)
            .map(|(&s, _)| s)?;
        self.alloc_at(start, pages);
        Some(start)
    }

    pub fn release(&mut self, lpn: u64, pages: u64) {
        if pages == 0 {
            return;
        }
        let mut start = lpn;
        let mut len = pages;
        if let Some((&s, &l)) = self.free.range(..lpn).next_back() {
            debug_assert!(s + l <= lpn, "double free at {lpn}");
            if s + l == lpn {
                self.free.remove(&s);
                start = s;
                len += l;
            }
        }
        if let Some(l) = self.free.remove(&(lpn + pages)) {
            len += l;
        }
        self.free.insert(start, len);
    }
}

#[derive(Debug)]
pub(crate) struct FileSystem {
    names: HashMap<String, InodeId>,
    inodes: HashMap<InodeId, Inode>,
    /// extent start LPN -> (owner, pages); used for classification.
    owners: BTreeMap<u64, (InodeId, u64)>,
    alloc: Allocator,
    next_inode: InodeId,
    quarantined: u64,
}

impl FileSystem {
    pub fn new(host_lpns: u64) -> Self {
        FileSystem {
            names: HashMap::new(),
            inodes: HashMap::new(),
            owners: BTreeMap::new(),
            alloc: Allocator::new(host_lpns),
            next_inode: 1,
            quarantined: 0,
        }
    }

    pub fn lookup(&self, path: &str) -> Option<InodeId> {
        self.names.get(path).copied()
    }

    pub fn inode(&self, id: InodeId) -> Option<&Inode> {
        self.inodes.get(&id)
    }

    pub fn file_count(&self) -> usize {
        self.names.len()
    }

    pub fn free_pages(&self) -> u64 {
        self.alloc.free_pages()
    }

    pub fn quarantined_pages(&self) -> u64 {
        self.quarantined
    }

    pub fn create(&mut self, path: &str) -> Result<InodeId, HostError> {
        if self.names.contains_key(path) {
            return Err(HostError::AlreadyExists(path.to_string()));
        }
        let id = self.next_inode;
        self.next_inode += 1;
        self.names.insert(path.to_string(), id);
        self.inodes.insert(
            id,
            Inode {
                id,
                size: 0,
                extents: Vec::new(),
            },
        );
        Ok(id)
    }

    fn add_extent(&mut self, id: InodeId, lpn: u64, pages: u64) {
        let inode = self.inodes.get_mut(&id).unwrap();
        let file_page = inode.capacity_pages();
        match inode.extents.last_mut() {
            Some(last) if last.lpn + last.pages == lpn => {
                last.pages += pages;
                self.owners.get_mut(&last.lpn).unwrap().1 += pages;
            }
            _ => {
                inode.extents.push(Extent {
                    file_page,
                    lpn,
                    pages,
                });
                self.owners.insert(lpn, (id, pages));
            }
        }
    }

    /// Preallocates `pages` pages at a fixed LPN for an empty file.
    pub fn place_at(&mut self, id: InodeId, lpn: u64, pages: u64) -> Result<(), HostError> {
        let inode = self.inodes.get(&id).ok_or(HostError::NoSpace)?;
        if inode.capacity_pages() != 0 || !self.alloc.alloc_at(lpn, pages) {
            return Err(HostError::PlacementUnavailable { lpn, pages });
        }
        self.add_extent(id, lpn, pages);
        Ok(())
    }

    /// Grows the allocation of `id` to at least `pages` pages, extending the
    /// last extent in place when possible.
    pub fn reserve(&mut self, id: InodeId, pages: u64) -> Result<(), HostError> {
        let inode = &self.inodes[&id];
        let have = inode.capacity_pages();
        if have >= pages {
            return Ok(());
        }
        let mut need = pages - have;
        if need > self.alloc.free_pages() {
            return Err(HostError::NoSpace);
        }
        if let Some(last) = inode.extents.last() {
            let end = last.lpn + last.pages;
            let take = self.alloc.run_at(end).min(need);
            if take > 0 {
                self.alloc.alloc_at(end, take);
                self.add_extent(id, end, take);
                need -= take;
            }
        }
        while need > 0 {
            if let Some(lpn) = self.alloc.first_fit(need) {
                self.add_extent(id, lpn, need);
                break;
            }
            // Fragmented: take the first run whole.
            let (&s, &l) = self.alloc.free.iter().next().expect("free space checked");
            self.alloc.alloc_at(s, l);
            self.add_extent(id, s, l);
            need -= l;
        }
        Ok(())
    }

    pub fn set_size(&mut self, id: InodeId, size: u64) {
        if let Some(inode) = self.inodes.get_mut(&id) {
            inode.size = size;
        }
    }

    /// Removes the file. Extents whose LPNs are in `keep_out` are never
    /// handed out again.
    pub fn remove(&mut self, path: &str, keep_out: &[Range<u64>]) -> Option<Inode> {
        let id = self.names.remove(path)?;
        let inode = self.inodes.remove(&id)?;
        for e in &inode.extents {
            self.owners.remove(&e.lpn);
            for lpn in e.lpns() {
                if keep_out.iter().any(|r| r.contains(&lpn)) {
                    self.quarantined += 1;
                } else {
                    self.alloc.release(lpn, 1);
                }
            }
        }
        Some(inode)
    }

    pub fn owner_of(&self, lpn: u64) -> Option<InodeId> {
        match self.owners.range(..=lpn).next_back() {
            Some((&s, &(id, pages))) if lpn < s + pages => Some(id),
            _ => None,
        }
    }
}
