//! Bookkeeping for the data-block region: free list, the open block,
//! per-block valid counts and the reverse (PPN -> device LPN) map used by GC.

use std::collections::VecDeque;

const NIL: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum BlockState {
    Free,
    Open,
    Closed,
}

#[derive(Clone, Debug)]
pub(crate) struct BlockManager {
    first: u64,
    count: u64,
    ppb: u64,
    state: Vec<BlockState>,
    valid: Vec<u32>,
    rmap: Vec<u32>,
    free: VecDeque<u64>,
    open: Option<(u64, u64)>,
}

impl BlockManager {
    /// All blocks free.
    pub(crate) fn new(first: u64, count: u64, ppb: u64) -> Self {
        BlockManager {
            first,
            count,
            ppb,
            state: vec![BlockState::Free; count as usize],
            valid: vec![0; count as usize],
            rmap: vec![NIL; (count * ppb) as usize],
            free: (first..first + count).collect(),
            open: None,
        }
    }

    /// Rebuild after power loss: blocks not fully erased are closed.
    pub(crate) fn rebuild(
        first: u64,
        count: u64,
        ppb: u64,
        mut is_erased: impl FnMut(u64) -> bool,
    ) -> Self {
        let mut m = BlockManager::new(first, count, ppb);
        m.free.clear();
        for b in first..first + count {
            if is_erased(b) {
                m.free.push_back(b);
            } else {
                m.state[(b - first) as usize] = BlockState::Closed;
            }
        }
        m
    }

    pub(crate) fn contains_ppn(&self, ppn: u64) -> bool {
        let lo = self.first * self.ppb;
        ppn >= lo && ppn < lo + self.count * self.ppb
    }

    fn rel_block(&self, block: u64) -> usize {
        (block - self.first) as usize
    }

    fn rel_page(&self, ppn: u64) -> usize {
        (ppn - self.first * self.ppb) as usize
    }

    pub(crate) fn free_count(&self) -> u64 {
        self.free.len() as u64
    }

    pub(crate) fn valid_in(&self, block: u64) -> u32 {
        self.valid[self.rel_block(block)]
    }

    pub(crate) fn state_of(&self, block: u64) -> BlockState {
        self.state[self.rel_block(block)]
    }

    /// Next page of the open block, if it has room.
    pub(crate) fn take_page(&mut self) -> Option<u64> {
        let (block, next) = self.open.as_mut()?;
        if *next == self.ppb {
            return None;
        }
        let ppn = *block * self.ppb + *next;
        *next += 1;
        Some(ppn)
    }

    pub(crate) fn take_page_available(&self) -> bool {
        matches!(self.open, Some((_, next)) if next < self.ppb)
    }

    /// Closes the current open block and opens the next free one.
    pub(crate) fn open_next(&mut self) -> bool {
        if let Some((b, _)) = self.open.take() {
            let i = self.rel_block(b);
            self.state[i] = BlockState::Closed;
        }
        match self.free.pop_front() {
            Some(b) => {
                let i = self.rel_block(b);
                self.state[i] = BlockState::Open;
                self.open = Some((b, 0));
                true
            }
            None => false,
        }
    }

    pub(crate) fn set_valid(&mut self, ppn: u64, dlpn: u64) -> bool {
        let p = self.rel_page(ppn);
        if self.rmap[p] != NIL {
            return false;
        }
        self.rmap[p] = dlpn as u32;
        let b = self.rel_block(ppn / self.ppb);
        self.valid[b] += 1;
        true
    }

    pub(crate) fn invalidate(&mut self, ppn: u64) {
        let p = self.rel_page(ppn);
        if self.rmap[p] != NIL {
            self.rmap[p] = NIL;
            let b = self.rel_block(ppn / self.ppb);
            self.valid[b] -= 1;
        }
    }

    /// Greedy victim: the closed block with the fewest valid pages.
    pub(crate) fn victim(&self) -> Option<u64> {
        (self.first..self.first + self.count)
            .filter(|b| self.state_of(*b) == BlockState::Closed)
            .min_by_key(|b| (self.valid_in(*b), *b))
    }

    pub(crate) fn valid_pages(&self, block: u64) -> Vec<(u64, u64)> {
        let base = block * self.ppb;
        (base..base + self.ppb)
            .filter_map(|ppn| {
                let d = self.rmap[self.rel_page(ppn)];
                (d != NIL).then_some((ppn, u64::from(d)))
            })
            .collect()
    }

    /// Call after the block has been erased.
    pub(crate) fn release(&mut self, block: u64) {
        let i = self.rel_block(block);
        debug_assert_eq!(self.valid[i], 0);
        self.state[i] = BlockState::Free;
        self.free.push_back(block);
    }
}
