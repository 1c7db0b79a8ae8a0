//! Left-leaning red-black tree of LPNs: the per-key node set of the
//! dynamic key store.

use std::cmp::Ordering;

type Link = Option<Box<Node>>;

#[derive(Clone, Debug)]
struct Node {
    lpn: u64,
    red: bool,
    left: Link,
    right: Link,
}

impl Node {
    fn new(lpn: u64) -> Box<Node> {
        Box::new(Node {
            lpn,
            red: true,
            left: None,
            right: None,
        })
    }
}

fn is_red(link: &Link) -> bool {
    link.as_ref().is_some_and(|n| n.red)
}

fn left_left_red(h: &Node) -> bool {
    h.left.as_ref().is_some_and(|l| is_red(&l.left))
}

fn rotate_left(mut h: Box<Node>) -> Box<Node> {
    let mut x = h.right.take().expect("rotate_left needs a right child");
    h.right = x.left.take();
    x.red = h.red;
    h.red = true;
    x.left = Some(h);
    x
}

fn rotate_right(mut h: Box<Node>) -> Box<Node> {
    let mut x = h.left.take().expect("rotate_right needs a left child");
    h.left = x.right.take();
    x.red = h.red;
    h.red = true;
    x.right = Some(h);
    x
}

fn flip_colors(h: &mut Node) {
    h.red = !h.red;
    if let Some(l) = h.left.as_mut() {
        l.red = !l.red;
    }
    if let Some(r) = h.right.as_mut() {
        r.red = !r.red;
    }
}

fn balance(mut h: Box<Node>) -> Box<Node> {
    if is_red(&h.right) && !is_red(&h.left) {
        h = rotate_left(h);
    }
    if is_red(&h.left) && left_left_red(&h) {
        h = rotate_right(h);
    }
    if is_red(&h.left) && is_red(&h.right) {
        flip_colors(&mut h);
    }
    h
}

fn insert(link: Link, lpn: u64, inserted: &mut bool) -> Box<Node> {
    let mut h = match link {
        None => {
            *inserted = true;
            return Node::new(lpn);
        }
        Some(h) => h,
    };
    match lpn.cmp(&h.lpn) {
        Ordering::Less => h.left = Some(insert(h.left.take(), lpn, inserted)),
        Ordering::Greater => h.right = Some(insert(h.right.take(), lpn, inserted)),
        Ordering::Equal => {}
    }
    balance(h)
}

fn move_red_left(mut h: Box<Node>) -> Box<Node> {
    flip_colors(&mut h);
    if h.right.as_ref().is_some_and(|r| is_red(&r.left)) {
        h.right = Some(rotate_right(h.right.take().unwrap()));
        h = rotate_left(h);
        flip_colors(&mut h);
    }
    h
}

fn move_red_right(mut h: Box<Node>) -> Box<Node> {
    flip_colors(&mut h);
    if left_left_red(&h) {
        h = rotate_right(h);
        flip_colors(&mut h);
    }
    h
}

fn min_lpn(h: &Node) -> u64 {
    let mut cur = h;
    while let Some(l) = cur.left.as_ref() {
        cur = l;
    }
    cur.lpn
}

fn delete_min(mut h: Box<Node>) -> Link {
    h.left.as_ref()?;
    if !is_red(&h.left) && !left_left_red(&h) {
        h = move_red_left(h);
    }
    h.left = delete_min(h.left.take().unwrap());
    Some(balance(h))
}

// Caller guarantees `lpn` is present.
fn delete(mut h: Box<Node>, lpn: u64) -> Link {
    if lpn < h.lpn {
        if !is_red(&h.left) && !left_left_red(&h) {
            h = move_red_left(h);
        }
        h.left = delete(h.left.take().unwrap(), lpn);
    } else {
        if is_red(&h.left) {
            h = rotate_right(h);
        }
        if lpn == h.lpn && h.right.is_none() {
            return None;
        }
        if !is_red(&h.right) && !h.right.as_ref().is_some_and(|r| is_red(&r.left)) {
            h = move_red_right(h);
        }
        if lpn == h.lpn {
            let right = h.right.take().unwrap();
            h.lpn = min_lpn(&right);
            h.right = delete_min(right);
        } else {
            h.right = delete(h.right.take().unwrap(), lpn);
        }
    }
    Some(balance(h))
}

/// Ordered set of LPNs backed by a left-leaning red-black tree.
#[derive(Clone, Debug, Default)]
pub struct LockTree {
    root: Link,
    len: usize,
}

impl LockTree {
    pub fn new() -> Self {
        LockTree::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, lpn: u64) -> bool {
        let mut cur = &self.root;
        while let Some(n) = cur {
            match lpn.cmp(&n.lpn) {
                Ordering::Less => cur = &n.left,
                Ordering::Greater => cur = &n.right,
                Ordering::Equal => return true,
            }
        }
        false
    }

    /// Returns true if the LPN was not already present.
    pub fn insert(&mut self, lpn: u64) -> bool {
        let mut inserted = false;
        let mut root = insert(self.root.take(), lpn, &mut inserted);
        root.red = false;
        self.root = Some(root);
        if inserted {
            self.len += 1;
        }
        inserted
    }

    /// Returns true if the LPN was present.
    pub fn remove(&mut self, lpn: u64) -> bool {
        if !self.contains(lpn) {
            return false;
        }
        let mut root = self.root.take().unwrap();
        if !is_red(&root.left) && !is_red(&root.right) {
            root.red = true;
        }
        self.root = delete(root, lpn);
        if let Some(r) = self.root.as_mut() {
            r.red = false;
        }
        self.len -= 1;
        true
    }

    /// In-order traversal.
    pub fn iter(&self) -> Iter<'_> {
        let mut it = Iter { stack: Vec::new() };
        it.push_left(&self.root);
        it
    }

    /// Checks the red-black invariants and returns the black height.
    #[cfg(test)]
    fn check(&self) -> usize {
        fn walk(link: &Link, lo: Option<u64>, hi: Option<u64>) -> usize {
            let Some(n) = link else { return 1 };
            assert!(lo.is_none_or(|l| n.lpn > l), "order");
            assert!(hi.is_none_or(|h| n.lpn < h), "order");
            assert!(!is_red(&n.right), "right-leaning red link");
            if n.red {
                assert!(!is_red(&n.left), "two reds in a row");
            }
            let lh = walk(&n.left, lo, Some(n.lpn));
            let rh = walk(&n.right, Some(n.lpn), hi);
            assert_eq!(lh, rh, "black height");
            lh + usize::from(!n.red)
        }
        assert!(!is_red(&self.root));
        walk(&self.root, None, None)
    }
}

pub struct Iter<'a> {
    stack: Vec<&'a Node>,
}

impl<'a> Iter<'a> {
    fn push_left(&mut self, mut link: &'a Link) {
        while let Some(n) = link {
            self.stack.push(n);
            link = &n.left;
        }
    }
}

impl Iterator for Iter<'_> {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        let n = self.stack.pop()?;
        self.push_left(&n.right);
        Some(n.lpn)
    }
}

impl FromIterator<u64> for LockTree {
    fn from_iter<I: IntoIterator<Item = u64>>(iter: I) -> Self {
        let mut t = LockTree::new();
        for lpn in iter {
            t.insert(lpn);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn sequential_inserts_stay_balanced() {
        let mut t = LockTree::new();
        for lpn in 0..4096 {
            assert!(t.insert(lpn));
        }
        assert!(!t.insert(17));
        assert_eq!(t.len(), 4096);
        // 2 * log2(4097) bound on height implies black height <= 13.
        assert!(t.check() <= 14);
        assert!(t.iter().eq(0..4096));
        for lpn in (0..4096).step_by(2) {
            assert!(t.remove(lpn));
        }
        t.check();
        assert!(t.iter().eq((1..4096).step_by(2)));
        assert!(!t.remove(0));
    }

    proptest! {
        #[test]
        fn matches_btreeset(ops in prop::collection::vec((any::<bool>(), 0u64..64), 0..400)) {
            let mut t = LockTree::new();
            let mut model = BTreeSet::new();
            for (ins, lpn) in ops {
                if ins {
                    prop_assert_eq!(t.insert(lpn), model.insert(lpn));
                } else {
                    prop_assert_eq!(t.remove(lpn), model.remove(&lpn));
                }
                t.check();
                prop_assert_eq!(t.len(), model.len());
            }
            prop_assert!(t.iter().eq(model.iter().copied()));
            for lpn in 0..64 {
                prop_assert_eq!(t.contains(lpn), model.contains(&lpn));
            }
        }
    }
}
