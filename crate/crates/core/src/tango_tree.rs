//! Tango tree baseline: every preferred path lives in its own red-black
//! auxiliary tree, and each crossing during an access is handled at once by a
//! cut followed by a concatenation.

use crate::aux_redblack::{concatenate_tango, cut_tango, find_boundary, rb_check, Slot};
use crate::bst_model::{AccessTrace, Forest, Key, Mode, NodeId, Side};
use crate::competitive::{layout_tango, nodes_for, AccessError, CompetitiveBst};
use crate::reference_tree::ReferenceTree;

/// Aux word holding the black height of an auxiliary-tree root.
const HEIGHT_WORD: usize = 0;

pub struct TangoTree {
    forest: Forest,
    n: usize,
}

impl TangoTree {
    pub fn new(keys: &[Key]) -> Result<Self, AccessError> {
        let reference = ReferenceTree::build(keys)?;
        let mut forest = Forest::new();
        let nodes = nodes_for(&mut forest, &reference);
        layout_tango(&mut forest, &reference, &nodes);
        let mut t = TangoTree { forest, n: keys.len() };
        for h in nodes {
            if t.forest.is_marked(h) {
                let bh = rb_check(&t.forest, h).expect("balanced layout");
                t.forest.raw_set_aux(h, HEIGHT_WORD, bh as u64);
            }
        }
        Ok(t)
    }

    fn height(&self, root: NodeId) -> u32 {
        self.forest.aux(root, HEIGHT_WORD) as u32
    }

    fn store(&mut self, root: NodeId, h: u32) {
        self.forest.write_aux(root, HEIGHT_WORD, h as u64).expect("height word");
    }

    /// Cut the aux tree rooted at `a` below depth `d` and give the removed
    /// part its own height record. Returns the remaining root and height.
    fn cut(&mut self, a: NodeId, d: u32) -> Result<(NodeId, u32), AccessError> {
        let slot = Slot::of(&self.forest, a);
        let h = self.height(a);
        let c = cut_tango(&mut self.forest, slot, h, d)?;
        if let Some(b) = c.bottom {
            self.store(b, c.bottom_height);
        }
        Ok((c.top, c.top_height))
    }

    fn absorb(&mut self, a: NodeId, ha: u32, b: NodeId) -> Result<(NodeId, u32), AccessError> {
        let hb = self.height(b);
        let (root, h) = concatenate_tango(&mut self.forest, a, ha, b, hb)?;
        self.store(root, h);
        Ok((root, h))
    }

    /// `x` was found in the aux tree rooted at `a`: its preferred child
    /// becomes the left one.
    fn finish_at(&mut self, a: NodeId, x: NodeId) -> Result<(), AccessError> {
        let f = &mut self.forest;
        let dx = f.depth_p(x);
        let (mut root, mut h) = (a, f.aux(a, HEIGHT_WORD) as u32);
        if f.node(a).max_depth > dx {
            let b = find_boundary(f, a, dx)?;
            if b.r == Some(x) {
                // the path already continues to the left
                return Ok(());
            }
            (root, h) = self.cut(a, dx)?;
            self.store(root, h);
        }
        // the structure hanging just left of x holds x's left subtree
        let f = &mut self.forest;
        f.visit(x);
        let mut gap = (x, Side::Left);
        if let Some(c) = f.inner_child(x, Side::Left) {
            let mut cur = c;
            f.visit(cur);
            while let Some(n) = f.inner_child(cur, Side::Right) {
                cur = n;
                f.visit(cur);
            }
            gap = (cur, Side::Right);
        }
        if let Some(b) = f.child(gap.0, gap.1).filter(|&b| f.is_marked(b)) {
            self.absorb(root, h, b)?;
        }
        Ok(())
    }
}

impl CompetitiveBst for TangoTree {
    fn name(&self) -> &'static str {
        "tango"
    }

    fn len(&self) -> usize {
        self.n
    }

    fn mode(&self) -> Mode {
        Mode::Strict
    }

    fn forest(&self) -> &Forest {
        &self.forest
    }

    fn access(&mut self, x: Key) -> Result<AccessTrace, AccessError> {
        self.forest.begin_access(Mode::Strict);
        let r = self.search(x);
        let trace = self.forest.end_access();
        r.map(|_| trace)
    }
}

impl TangoTree {
    fn search(&mut self, x: Key) -> Result<(), AccessError> {
        let mut a = self.forest.root().ok_or(AccessError::UnknownKey(x))?;
        let mut cur = a;
        loop {
            let f = &mut self.forest;
            f.visit(cur);
            let k = f.key(cur);
            if k == x {
                return self.finish_at(a, cur);
            }
            let side = if x < k { Side::Left } else { Side::Right };
            let Some(c) = f.child(cur, side) else {
                return Err(AccessError::UnknownKey(x));
            };
            if f.is_marked(c) {
                let d = f.node(c).min_depth - 1;
                let (top, ht) = self.cut(a, d)?;
                let (root, _) = self.absorb(top, ht, c)?;
                a = root;
                cur = root;
            } else {
                cur = c;
            }
        }
    }
}
