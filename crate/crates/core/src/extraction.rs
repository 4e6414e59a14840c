//! Incremental extraction of the shallowest nodes of a bottom tree.
//!
//! The nodes of a path with depth at most some threshold are, in key space,
//! a prefix of the zig nodes followed by a suffix of the zag nodes. Splitting
//! the bottom tree at `l` (the last shallow zig) and then at `r` (the first
//! shallow zag) isolates them as two subtrees `B` and `E` around the deep
//! middle part `D`. Each is then rotated into a chain ordered by depth, and
//! the two chains can be merged by depth onto the end of a top path.

use thiserror::Error;

use crate::aux_redblack::{AuxError, Slot, SplitProcess, SplitStats};
use crate::bst_model::{Forest, NodeId, Side};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("extraction already finished")]
    Finished,
    #[error("bottom tree is empty")]
    EmptyBottom,
    #[error(transparent)]
    Aux(#[from] AuxError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Boundary,
    SplitL,
    SplitR,
    LinearizeB,
    LinearizeE,
    Zip,
    Done,
}

#[derive(Clone, Copy, Debug)]
enum Walk {
    /// Looking at the bottom root to fix the threshold.
    Start,
    /// Descending toward the deepest node.
    Deepest(NodeId),
    /// Descending toward the minimum-key deep node; `nb` is the last shallow
    /// node passed on the way (its predecessor candidate).
    Left { cur: NodeId, nb: Option<NodeId> },
    /// Walking to the maximum of a subtree.
    Max(NodeId),
    Right { cur: NodeId, nb: Option<NodeId> },
    Min(NodeId),
}

/// A node handed out by the zip.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Emitted {
    pub node: NodeId,
    /// Side of `node` on which the rest of the path continues.
    pub path_side: Side,
}

/// Resumable extraction process over the tree held in a slot.
#[derive(Clone, Debug)]
pub struct Extraction {
    phase: Phase,
    walk: Walk,
    want: u32,
    thr: u32,
    l: Option<NodeId>,
    r: Option<NodeId>,
    /// The bottom is drained completely; `l` is its deepest node.
    drain: bool,
    split: Option<SplitProcess>,
    stage_one: bool,
    emitted_l: bool,
    emitted_r: bool,
    pub steps: u64,
    pub linearize_rotations: u32,
    pub split_stats: SplitStats,
}

impl Extraction {
    /// Extract the `want` shallowest nodes. Stepping stops once both chains
    /// are built; the caller then merges them with [`Extraction::emit`].
    pub fn new(want: u32) -> Self {
        Extraction {
            phase: Phase::Boundary,
            walk: Walk::Start,
            want: want.max(1),
            thr: 0,
            l: None,
            r: None,
            drain: false,
            split: None,
            stage_one: true,
            emitted_l: false,
            emitted_r: false,
            steps: 0,
            linearize_rotations: 0,
            split_stats: SplitStats::default(),
        }
    }

    /// A finished extraction around an already folded zipper: zig list at
    /// `l.left`, zag list at `r.right`. With `drain`, `l` is the deepest node
    /// and both lists hang below it.
    pub fn ready(l: Option<NodeId>, r: Option<NodeId>, drain: bool) -> Self {
        let mut e = Extraction::new(1);
        e.phase = Phase::Zip;
        e.l = l;
        e.r = if drain { None } else { r };
        e.drain = drain;
        e
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// True once the chains are built.
    pub fn is_ready(&self) -> bool {
        matches!(self.phase, Phase::Zip | Phase::Done)
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    /// Largest depth of an extracted node (valid after the first step).
    pub fn threshold(&self) -> u32 {
        self.thr
    }

    pub fn zig_anchor(&self) -> Option<NodeId> {
        self.l
    }

    pub fn zag_anchor(&self) -> Option<NodeId> {
        self.r
    }

    pub fn drains(&self) -> bool {
        self.drain
    }

    /// Slot holding the part of the bottom deeper than the threshold, once
    /// the splits are done and while the zipper heads are in place.
    pub fn deep_slot(&self) -> Option<Slot> {
        if self.drain {
            return None;
        }
        match (self.l, self.r) {
            (_, Some(r)) if !self.emitted_r => Some(Slot::child_of(r, Side::Left)),
            (Some(l), _) if !self.emitted_l => Some(Slot::child_of(l, Side::Right)),
            _ => None,
        }
    }

    /// Root of the region still holding unemitted zipper nodes.
    pub fn region_root(&self) -> Option<NodeId> {
        match (self.l, self.r) {
            (Some(l), _) if !self.emitted_l => Some(l),
            (_, Some(r)) if !self.emitted_r => Some(r),
            _ => None,
        }
    }

    /// Advance by up to `budget` steps on the bottom held in `slot`.
    /// Returns the number of steps used.
    pub fn advance(&mut self, f: &mut Forest, slot: Slot, budget: u64) -> Result<u64, ExtractError> {
        let mut used = 0;
        while used < budget && !self.is_ready() {
            self.step(f, slot)?;
            used += 1;
        }
        Ok(used)
    }

    /// Run until ready.
    pub fn finish(&mut self, f: &mut Forest, slot: Slot) -> Result<u64, ExtractError> {
        let mut used = 0;
        while !self.is_ready() {
            self.step(f, slot)?;
            used += 1;
        }
        Ok(used)
    }

    /// One bounded unit of work.
    pub fn step(&mut self, f: &mut Forest, slot: Slot) -> Result<(), ExtractError> {
        self.steps += 1;
        match self.phase {
            Phase::Boundary => self.boundary_step(f, slot),
            Phase::SplitL | Phase::SplitR => self.split_step(f, slot),
            Phase::LinearizeB => {
                let anchor = self.l.unwrap();
                if linearize_step(f, Slot::child_of(anchor, Side::Left), Side::Right, &mut self.stage_one) {
                    self.linearize_rotations += 1;
                } else {
                    self.stage_one = true;
                    self.phase = Phase::LinearizeE;
                }
                Ok(())
            }
            Phase::LinearizeE => {
                let anchor = if self.drain { self.l } else { self.r };
                let rotated = match anchor {
                    Some(a) => linearize_step(f, Slot::child_of(a, Side::Right), Side::Left, &mut self.stage_one),
                    None => false,
                };
                if rotated {
                    self.linearize_rotations += 1;
                } else {
                    self.phase = Phase::Zip;
                }
                Ok(())
            }
            Phase::Zip | Phase::Done => Err(ExtractError::Finished),
        }
    }

    fn boundary_step(&mut self, f: &mut Forest, slot: Slot) -> Result<(), ExtractError> {
        let max_d = |f: &Forest, c: Option<NodeId>| c.map(|c| f.node(c).max_depth);
        match self.walk {
            Walk::Start => {
                let root = slot.get(f).ok_or(ExtractError::EmptyBottom)?;
                f.visit(root);
                let n = f.node(root);
                self.thr = n.min_depth + self.want - 1;
                if n.max_depth <= self.thr {
                    self.drain = true;
                    self.walk = Walk::Deepest(root);
                } else {
                    self.walk = Walk::Left { cur: root, nb: None };
                }
            }
            Walk::Deepest(cur) => {
                f.visit(cur);
                let want = f.node(cur).max_depth;
                if f.depth_p(cur) == want {
                    self.l = Some(cur);
                    self.start_splits();
                } else {
                    let next = [Side::Left, Side::Right]
                        .into_iter()
                        .filter_map(|s| f.inner_child(cur, s))
                        .find(|&c| f.node(c).max_depth == want)
                        .unwrap();
                    self.walk = Walk::Deepest(next);
                }
            }
            Walk::Left { cur, nb } => {
                f.visit(cur);
                let left = f.inner_child(cur, Side::Left);
                if max_d(f, left).is_some_and(|d| d > self.thr) {
                    self.walk = Walk::Left { cur: left.unwrap(), nb };
                } else if f.depth_p(cur) > self.thr {
                    match left {
                        Some(c) => self.walk = Walk::Max(c),
                        None => {
                            self.l = nb;
                            self.walk = Walk::Right { cur: slot.get(f).unwrap(), nb: None };
                        }
                    }
                } else {
                    let right = f.inner_child(cur, Side::Right).unwrap();
                    self.walk = Walk::Left { cur: right, nb: Some(cur) };
                }
            }
            Walk::Max(cur) => {
                f.visit(cur);
                match f.inner_child(cur, Side::Right) {
                    Some(c) => self.walk = Walk::Max(c),
                    None => {
                        self.l = Some(cur);
                        self.walk = Walk::Right { cur: slot.get(f).unwrap(), nb: None };
                    }
                }
            }
            Walk::Right { cur, nb } => {
                f.visit(cur);
                let right = f.inner_child(cur, Side::Right);
                if max_d(f, right).is_some_and(|d| d > self.thr) {
                    self.walk = Walk::Right { cur: right.unwrap(), nb };
                } else if f.depth_p(cur) > self.thr {
                    match right {
                        Some(c) => self.walk = Walk::Min(c),
                        None => {
                            self.r = nb;
                            self.start_splits();
                        }
                    }
                } else {
                    let left = f.inner_child(cur, Side::Left).unwrap();
                    self.walk = Walk::Right { cur: left, nb: Some(cur) };
                }
            }
            Walk::Min(cur) => {
                f.visit(cur);
                match f.inner_child(cur, Side::Left) {
                    Some(c) => self.walk = Walk::Min(c),
                    None => {
                        self.r = Some(cur);
                        self.start_splits();
                    }
                }
            }
        }
        Ok(())
    }

    fn start_splits(&mut self) {
        self.phase = if self.l.is_some() { Phase::SplitL } else { Phase::SplitR };
        self.split = None;
    }

    fn split_step(&mut self, f: &mut Forest, slot: Slot) -> Result<(), ExtractError> {
        let (node, at) = if self.phase == Phase::SplitL {
            (self.l, slot)
        } else {
            let at = match self.l {
                Some(l) => Slot::child_of(l, Side::Right),
                None => slot,
            };
            (self.r, at)
        };
        let Some(node) = node else {
            self.after_split();
            return Ok(());
        };
        if self.split.is_none() {
            self.split = Some(SplitProcess::new(f, at, f.key(node))?);
        }
        let sp = self.split.as_mut().unwrap();
        sp.step(f, at)?;
        if sp.is_done() {
            self.split_stats.absorb(&sp.stats);
            self.split = None;
            self.after_split();
        }
        Ok(())
    }

    fn after_split(&mut self) {
        self.phase = match self.phase {
            Phase::SplitL if !self.drain && self.r.is_some() => Phase::SplitR,
            _ if self.l.is_some() => Phase::LinearizeB,
            _ => Phase::LinearizeE,
        };
        self.stage_one = true;
    }

    /// Next zig node to emit, if any.
    fn zig_head(&self, f: &Forest) -> Option<NodeId> {
        let l = self.l.filter(|_| !self.emitted_l)?;
        Some(f.inner_child(l, Side::Left).unwrap_or(l))
    }

    fn zag_head(&self, f: &Forest) -> Option<NodeId> {
        if self.drain {
            let w = self.l.filter(|_| !self.emitted_l)?;
            return f.inner_child(w, Side::Right);
        }
        let r = self.r.filter(|_| !self.emitted_r)?;
        Some(f.inner_child(r, Side::Right).unwrap_or(r))
    }

    /// Heads of the two chains without touching them.
    pub fn heads(&self, f: &Forest) -> (Option<NodeId>, Option<NodeId>) {
        (self.zig_head(f), self.zag_head(f))
    }

    pub fn is_exhausted(&self, f: &Forest) -> bool {
        self.zig_head(f).is_none() && self.zag_head(f).is_none()
    }

    /// Emit the shallower chain head so that it hangs directly below `tail`
    /// (`None`: at the forest root). Returns `None` once both chains are
    /// empty.
    pub fn emit(&mut self, f: &mut Forest, tail: Option<NodeId>) -> Option<Emitted> {
        let zig = self.zig_head(f);
        let zag = self.zag_head(f);
        let pick_zig = match (zig, zag) {
            (None, None) => {
                self.phase = Phase::Done;
                return None;
            }
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(a), Some(b)) => {
                f.visit(a);
                f.visit(b);
                f.depth_p(a) < f.depth_p(b)
            }
        };
        let h = if pick_zig { zig.unwrap() } else { zag.unwrap() };
        f.visit(h);
        while f.parent(h) != tail {
            f.rotate_up(h).expect("head is inside the zipper");
        }
        if Some(h) == self.l {
            self.emitted_l = true;
        }
        if Some(h) == self.r {
            self.emitted_r = true;
        }
        let path_side = if Some(h) == self.l && self.drain {
            Side::Left
        } else if pick_zig {
            Side::Right
        } else {
            Side::Left
        };
        Some(Emitted { node: h, path_side })
    }

    /// Number of unemitted zipper nodes (structural count, unmetered).
    pub fn remaining(&self, f: &Forest) -> u32 {
        let mut n = 0;
        if let Some(l) = self.l.filter(|_| !self.emitted_l) {
            n += 1 + chain_len(f, f.inner_child(l, Side::Left), Side::Right);
            if self.drain {
                n += chain_len(f, f.inner_child(l, Side::Right), Side::Left);
            }
        }
        if let Some(r) = self.r.filter(|_| !self.emitted_r) {
            n += 1 + chain_len(f, f.inner_child(r, Side::Right), Side::Left);
        }
        n
    }

    /// Zig and zag chains, top first (structural, unmetered).
    pub fn chains(&self, f: &Forest) -> (Vec<NodeId>, Vec<NodeId>) {
        let mut zig = Vec::new();
        let mut zag = Vec::new();
        if let Some(l) = self.l.filter(|_| !self.emitted_l) {
            collect_chain(f, f.inner_child(l, Side::Left), Side::Right, &mut zig);
            if self.drain {
                collect_chain(f, f.inner_child(l, Side::Right), Side::Left, &mut zag);
                zag.push(l);
            } else {
                zig.push(l);
            }
        }
        if let Some(r) = self.r.filter(|_| !self.emitted_r) {
            collect_chain(f, f.inner_child(r, Side::Right), Side::Left, &mut zag);
            zag.push(r);
        }
        (zig, zag)
    }
}

fn chain_len(f: &Forest, top: Option<NodeId>, next: Side) -> u32 {
    let mut v = Vec::new();
    collect_chain(f, top, next, &mut v);
    v.len() as u32
}

fn collect_chain(f: &Forest, mut cur: Option<NodeId>, next: Side, out: &mut Vec<NodeId>) {
    while let Some(c) = cur {
        out.push(c);
        cur = f.inner_child(c, next);
    }
}

/// One rotation toward turning the subtree in `slot` into a chain going down
/// on side `down` (`Right`: increasing keys from the top). Returns false when
/// the subtree is already such a chain. All rotations are at the subtree
/// root or one level below.
pub fn linearize_step(f: &mut Forest, slot: Slot, down: Side, stage_one: &mut bool) -> bool {
    let Some(root) = slot.get(f) else {
        return false;
    };
    if f.is_marked(root) {
        return false;
    }
    f.visit(root);
    if *stage_one {
        // bring the extreme node of the `down` side to the top
        if let Some(c) = f.inner_child(root, down) {
            f.rotate_up(c).unwrap();
            return true;
        }
        *stage_one = false;
    }
    let up = down.flip();
    // the chain grows at the top: the subtree root is the current chain top
    let Some(l) = f.inner_child(root, up) else {
        return false;
    };
    match f.inner_child(l, down) {
        None => f.rotate_up(l).unwrap(),
        Some(m) => f.rotate_up(m).unwrap(),
    }
    true
}

/// Turn the subtree in `slot` into a chain (see [`linearize_step`]) and
/// return the number of rotations used.
pub fn linearize(f: &mut Forest, slot: Slot, down: Side) -> u32 {
    let mut stage = true;
    let mut n = 0;
    while linearize_step(f, slot, down, &mut stage) {
        n += 1;
    }
    n
}

#[cfg(test)]
#[path = "extraction_tests.rs"]
mod tests;
