//! Red-black auxiliary trees augmented with reference-depth min/max.
//!
//! A red-black tree here is any subtree of the forest whose boundary is made
//! of marked nodes (roots of other auxiliary trees) or missing children; both
//! count as black leaves. All restructuring is done with single rotations at
//! the cursor, so every operation in this module is BST-model compliant.
//!
//! Heights are (2,4)-tree heights: the number of black nodes on a path from
//! the root down to a leaf, counting the root as black. Subtree roots handed
//! between operations are always black.

use std::fmt::Write as _;

use thiserror::Error;

use crate::bst_model::{Color, Forest, Key, NodeId, Side};

/// Greatest depth (below the root of the tree being split) at which the
/// near-root split performs a rotation.
pub const D_SPLIT: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuxError {
    #[error("key {0} not present in the tree")]
    KeyAbsent(Key),
    #[error("empty tree")]
    Empty,
    #[error("cut depth {0} is below the minimum depth of the tree")]
    CutTooShallow(u32),
    #[error("no node on the requested side of depth {0}")]
    NoBoundary(u32),
    #[error("path depths are not consecutive")]
    NotAPath,
    #[error("trees do not store consecutive path segments")]
    DepthMismatch,
}

/// Position of a subtree: the child slot of `parent` on `side`, or the forest
/// root when `parent` is `None`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub parent: Option<NodeId>,
    pub side: Side,
}

impl Slot {
    pub fn root() -> Slot {
        Slot { parent: None, side: Side::Left }
    }

    pub fn child_of(parent: NodeId, side: Side) -> Slot {
        Slot { parent: Some(parent), side }
    }

    /// Slot currently holding `node`.
    pub fn of(f: &Forest, node: NodeId) -> Slot {
        match f.parent(node) {
            None => Slot::root(),
            Some(p) => Slot::child_of(p, f.side_of(node).unwrap()),
        }
    }

    pub fn get(&self, f: &Forest) -> Option<NodeId> {
        match self.parent {
            None => f.root(),
            Some(p) => f.child(p, self.side),
        }
    }

    /// Distance of `node` below the subtree root held in this slot.
    pub fn depth_of(&self, f: &Forest, node: NodeId) -> u32 {
        let mut d = 0;
        let mut cur = node;
        while f.parent(cur) != self.parent {
            cur = f.parent(cur).expect("node not below slot");
            d += 1;
        }
        d
    }
}

#[inline]
fn is_red(f: &Forest, c: Option<NodeId>) -> bool {
    matches!(c, Some(c) if !f.is_marked(c) && f.color(c) == Color::Red)
}

/// Counters gathered while splitting.
#[derive(Clone, Debug, Default)]
pub struct SplitStats {
    pub rotations: u32,
    pub max_rotation_depth: u32,
    /// Largest number of equal-height subtrees seen at once during gluing.
    pub max_group: u32,
    pub steps: u32,
}

impl SplitStats {
    pub fn absorb(&mut self, o: &SplitStats) {
        self.rotations += o.rotations;
        self.max_rotation_depth = self.max_rotation_depth.max(o.max_rotation_depth);
        self.max_group = self.max_group.max(o.max_group);
        self.steps += o.steps;
    }
}

fn rotate_in_slot(f: &mut Forest, slot: Slot, x: NodeId, stats: &mut SplitStats) {
    let d = slot.depth_of(f, x);
    f.rotate_up(x).expect("rotation inside tree");
    stats.rotations += 1;
    stats.max_rotation_depth = stats.max_rotation_depth.max(d);
}

#[derive(Clone, Debug)]
enum SplitPhase {
    /// Walking the left spine to learn the height of the tree.
    Measure { at: NodeId, below: u32 },
    Cleave,
    Glue { side: Side },
    Done,
}

/// Resumable split that brings the node holding `key` to the root of the
/// subtree in a slot, leaving valid red-black trees on both sides. All
/// rotations happen within a constant distance of the slot.
///
/// Cleaving pulls the search path up through the top of the tree: the nodes
/// passed that are greater than the key form a spine going down-right from
/// the root, the smaller ones a spine going down-left from the root's left
/// child, and the unsearched remainder always sits at most two levels down.
/// Gluing then rebuilds each spine into a red-black tree from the top,
/// working on (2,4)-height groups of the subtrees hanging off it.
#[derive(Clone, Debug)]
pub struct SplitProcess {
    key: Key,
    phase: SplitPhase,
    /// Number of black nodes strictly below the remaining-tree root.
    below: u32,
    greater: Option<NodeId>,
    smaller: Option<NodeId>,
    /// Heights of subtrees hung on each spine, in creation order.
    hung_smaller: Vec<u32>,
    hung_greater: Vec<u32>,
    /// Heights along the spine being glued, top first.
    glue: Vec<u32>,
    x: Option<NodeId>,
    heights: [u32; 2],
    pub stats: SplitStats,
}

impl SplitProcess {
    pub fn new(f: &Forest, slot: Slot, key: Key) -> Result<Self, AuxError> {
        let root = slot.get(f).ok_or(AuxError::Empty)?;
        Ok(SplitProcess {
            key,
            phase: SplitPhase::Measure { at: root, below: 0 },
            below: 0,
            greater: None,
            smaller: None,
            hung_smaller: Vec::new(),
            hung_greater: Vec::new(),
            glue: Vec::new(),
            x: None,
            heights: [0, 0],
            stats: SplitStats::default(),
        })
    }

    pub fn is_done(&self) -> bool {
        matches!(self.phase, SplitPhase::Done)
    }

    /// The split node (once cleaving has finished).
    pub fn split_node(&self) -> Option<NodeId> {
        self.x
    }

    /// Heights of the (left, right) result trees; valid once done.
    pub fn heights(&self) -> (u32, u32) {
        (self.heights[0], self.heights[1])
    }

    /// Run to completion.
    pub fn run(&mut self, f: &mut Forest, slot: Slot) -> Result<(), AuxError> {
        while !self.is_done() {
            self.step(f, slot)?;
        }
        Ok(())
    }

    /// Perform one bounded unit of work.
    pub fn step(&mut self, f: &mut Forest, slot: Slot) -> Result<(), AuxError> {
        self.stats.steps += 1;
        match self.phase.clone() {
            SplitPhase::Measure { at, below } => {
                f.visit(at);
                match f.inner_child(at, Side::Left) {
                    Some(c) => {
                        let b = below + u32::from(f.color(c) == Color::Black);
                        self.phase = SplitPhase::Measure { at: c, below: b };
                    }
                    None => {
                        self.below = below;
                        self.phase = SplitPhase::Cleave;
                    }
                }
                Ok(())
            }
            SplitPhase::Cleave => self.cleave_step(f, slot),
            SplitPhase::Glue { side } => {
                self.glue_step(f, slot, side);
                Ok(())
            }
            SplitPhase::Done => Ok(()),
        }
    }

    fn remaining_root(&self, f: &Forest, slot: Slot) -> Option<NodeId> {
        match (self.greater, self.smaller) {
            (None, None) => slot.get(f),
            (Some(a), None) => f.inner_child(a, Side::Left),
            (_, Some(b)) => f.inner_child(b, Side::Right),
        }
    }

    /// Height of the child of `parent` on `side` viewed as a standalone tree
    /// (root recoloured black), given the black count below `parent`.
    fn hang(&mut self, f: &mut Forest, parent: NodeId, side: Side, below_parent: u32) -> u32 {
        match f.inner_child(parent, side) {
            None => 0,
            Some(c) => {
                if f.color(c) == Color::Red {
                    f.set_color(c, Color::Black);
                    below_parent + 1
                } else {
                    below_parent
                }
            }
        }
    }

    fn cleave_step(&mut self, f: &mut Forest, slot: Slot) -> Result<(), AuxError> {
        let w = self.remaining_root(f, slot).ok_or(AuxError::KeyAbsent(self.key))?;
        f.visit(w);
        let wk = f.key(w);
        let below_w = self.below;
        let next_below = |f: &Forest, side: Side| -> u32 {
            match f.inner_child(w, side) {
                Some(c) if f.color(c) == Color::Black => below_w.saturating_sub(1),
                _ => below_w,
            }
        };
        use std::cmp::Ordering::*;
        match self.key.cmp(&wk) {
            Equal => {
                // Bring w to the root; its old children become the innermost
                // hung subtrees of the two spines.
                let hl = self.hang(f, w, Side::Left, below_w);
                let hr = self.hang(f, w, Side::Right, below_w);
                if self.smaller.is_some() {
                    rotate_in_slot(f, slot, w, &mut self.stats);
                }
                if self.greater.is_some() {
                    rotate_in_slot(f, slot, w, &mut self.stats);
                }
                self.hung_smaller.push(hl);
                self.hung_greater.push(hr);
                self.x = Some(w);
                self.glue = self.hung_smaller.iter().rev().copied().collect();
                self.phase = SplitPhase::Glue { side: Side::Left };
                self.stats.max_group = self.stats.max_group.max(leading_run(&self.glue));
                Ok(())
            }
            Less => {
                // w joins the greater spine as its new top
                let h = self.hang(f, w, Side::Right, below_w);
                self.hung_greater.push(h);
                let nb = next_below(f, Side::Left);
                match (self.greater, self.smaller) {
                    (None, None) => {}
                    (Some(_), None) => rotate_in_slot(f, slot, w, &mut self.stats),
                    (None, Some(_)) => rotate_in_slot(f, slot, w, &mut self.stats),
                    (Some(_), Some(_)) => {
                        rotate_in_slot(f, slot, w, &mut self.stats);
                        rotate_in_slot(f, slot, w, &mut self.stats);
                    }
                }
                self.greater = Some(w);
                self.below = nb;
                Ok(())
            }
            Greater => {
                let h = self.hang(f, w, Side::Left, below_w);
                self.hung_smaller.push(h);
                let nb = next_below(f, Side::Right);
                match (self.greater, self.smaller) {
                    (None, None) | (Some(_), None) => {}
                    (_, Some(_)) => rotate_in_slot(f, slot, w, &mut self.stats),
                }
                self.smaller = Some(w);
                self.below = nb;
                Ok(())
            }
        }
    }

    fn spine(f: &Forest, x: NodeId, side: Side, j: usize) -> NodeId {
        let mut cur = f.child(x, side).expect("spine");
        for _ in 0..j {
            cur = f.child(cur, side).expect("spine");
        }
        cur
    }

    fn glue_step(&mut self, f: &mut Forest, slot: Slot, side: Side) {
        let x = self.x.unwrap();
        let inner = side.flip();
        if self.glue.len() <= 1 {
            let idx = if side == Side::Left { 0 } else { 1 };
            self.heights[idx] = self.glue.first().copied().unwrap_or(0);
            if side == Side::Left {
                self.glue = self.hung_greater.iter().rev().copied().collect();
                self.stats.max_group = self.stats.max_group.max(leading_run(&self.glue));
                self.phase = SplitPhase::Glue { side: Side::Right };
            } else {
                self.phase = SplitPhase::Done;
            }
            return;
        }
        let h = self.glue[0];
        let c = leading_run(&self.glue) as usize;
        self.stats.max_group = self.stats.max_group.max(c as u32);
        if c >= 2 {
            let mut chunks = vec![2usize; c / 2];
            if c % 2 == 1 {
                *chunks.last_mut().unwrap() = 3;
            }
            let mut used = 0;
            for (j, &z) in chunks.iter().enumerate() {
                used += z;
                let last = used == self.glue.len();
                let top = Self::spine(f, x, side, j);
                match (z, last) {
                    (2, true) => f.set_color(top, Color::Black),
                    (2, false) => {
                        let n1 = f.child(top, side).unwrap();
                        rotate_in_slot(f, slot, n1, &mut self.stats);
                        f.set_color(top, Color::Black);
                    }
                    (_, true) => {
                        let n1 = f.child(top, side).unwrap();
                        rotate_in_slot(f, slot, n1, &mut self.stats);
                        f.set_color(n1, Color::Black);
                        f.set_color(top, Color::Red);
                    }
                    (_, false) => {
                        let n1 = f.child(top, side).unwrap();
                        rotate_in_slot(f, slot, n1, &mut self.stats);
                        let n2 = f.child(n1, side).unwrap();
                        rotate_in_slot(f, slot, n2, &mut self.stats);
                        f.set_color(n1, Color::Black);
                        f.set_color(top, Color::Red);
                    }
                }
            }
            let mut next = vec![h + 1; chunks.len()];
            next.extend_from_slice(&self.glue[c..]);
            self.glue = next;
            self.stats.max_group = self.stats.max_group.max(leading_run(&self.glue));
        } else {
            // Fold the root (2,4)-node of the next subtree onto the spine.
            let big = self.glue[1];
            let mut pieces = 2;
            if self.glue.len() > 2 {
                let s1 = Self::spine(f, x, side, 1);
                let u = f.inner_child(s1, inner).expect("fold target");
                let v = f.inner_child(u, inner);
                let w = f.inner_child(u, side);
                rotate_in_slot(f, slot, u, &mut self.stats);
                if is_red(f, v) {
                    rotate_in_slot(f, slot, v.unwrap(), &mut self.stats);
                    pieces += 1;
                }
                if is_red(f, w) {
                    rotate_in_slot(f, slot, w.unwrap(), &mut self.stats);
                    pieces += 1;
                }
            } else {
                // the last subtree hangs on the outer side, so its root
                // already continues the spine
                let s0 = Self::spine(f, x, side, 0);
                let u = f.inner_child(s0, side).expect("fold target");
                let v = f.inner_child(u, inner);
                let w = f.inner_child(u, side);
                f.visit(u);
                if is_red(f, v) {
                    rotate_in_slot(f, slot, v.unwrap(), &mut self.stats);
                    pieces += 1;
                }
                if is_red(f, w) {
                    pieces += 1;
                }
            }
            let mut next = vec![self.glue[0]];
            next.extend(std::iter::repeat_n(big - 1, pieces));
            next.extend_from_slice(&self.glue[2..]);
            self.glue = next;
            self.stats.max_group = self.stats.max_group.max(leading_run(&self.glue));
        }
    }
}

fn leading_run(v: &[u32]) -> u32 {
    match v.first() {
        None => 0,
        Some(&h) => v.iter().take_while(|&&x| x == h).count() as u32,
    }
}

/// Result of a completed near-root split.
#[derive(Clone, Debug)]
pub struct SplitOutcome {
    pub node: NodeId,
    pub left_height: u32,
    pub right_height: u32,
    pub stats: SplitStats,
}

/// Split the tree in `slot` at `key`: the node holding `key` becomes the
/// subtree root with valid red-black trees of smaller and larger keys as its
/// children.
pub fn split_near_root(f: &mut Forest, slot: Slot, key: Key) -> Result<SplitOutcome, AuxError> {
    let mut p = SplitProcess::new(f, slot, key)?;
    p.run(f, slot)?;
    let (l, r) = p.heights();
    Ok(SplitOutcome {
        node: p.split_node().unwrap(),
        left_height: l,
        right_height: r,
        stats: p.stats,
    })
}

/// Make the subtree at `k` a valid red-black tree, where `k`'s left and right
/// subtrees are valid trees of heights `hl` and `hr` with black roots.
/// Returns the root and height of the joined tree.
pub fn join(f: &mut Forest, k: NodeId, hl: u32, hr: u32) -> (NodeId, u32) {
    let mut p = JoinProcess::new(f, k, hl, hr);
    loop {
        if let Some(done) = p.step(f) {
            return done;
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum JoinPhase {
    /// `k` sinks into the taller tree; `cur` is the height below it.
    Sink { cur: u32 },
    /// Repairing a possible red-red pair at `z`, walking up.
    Fix { z: NodeId },
    Done { root: NodeId, height: u32 },
}

/// Resumable [`join`]: every step is one rotation or one recolouring level.
#[derive(Clone, Debug)]
pub struct JoinProcess {
    anchor: Slot,
    k: NodeId,
    tall: Side,
    h_tall: u32,
    h_short: u32,
    phase: JoinPhase,
}

impl JoinProcess {
    pub fn new(f: &Forest, k: NodeId, hl: u32, hr: u32) -> Self {
        let anchor = Slot::of(f, k);
        // side where k sinks into the taller tree
        let (tall, h_tall, h_short) = if hl >= hr {
            (Side::Left, hl, hr)
        } else {
            (Side::Right, hr, hl)
        };
        JoinProcess { anchor, k, tall, h_tall, h_short, phase: JoinPhase::Sink { cur: h_tall } }
    }

    pub fn is_done(&self) -> bool {
        matches!(self.phase, JoinPhase::Done { .. })
    }

    /// One bounded unit of work; returns root and height once finished.
    pub fn step(&mut self, f: &mut Forest) -> Option<(NodeId, u32)> {
        let spine = self.tall.flip();
        let k = self.k;
        match self.phase {
            JoinPhase::Done { root, height } => return Some((root, height)),
            JoinPhase::Sink { .. } if self.h_tall == self.h_short => {
                f.set_color(k, Color::Black);
                self.phase = JoinPhase::Done { root: k, height: self.h_tall + 1 };
            }
            JoinPhase::Sink { cur } => {
                let c = f.inner_child(k, self.tall);
                if !is_red(f, c) && cur == self.h_short {
                    f.set_color(k, Color::Red);
                    self.phase = JoinPhase::Fix { z: k };
                } else {
                    let u = c.expect("taller tree exhausted");
                    let u_black = f.color(u) == Color::Black;
                    f.rotate_up(u).unwrap();
                    // k now hangs on u's `spine` side
                    self.phase = JoinPhase::Sink { cur: cur - u32::from(u_black) };
                }
            }
            JoinPhase::Fix { z } => self.fix_step(f, z, spine),
        }
        match self.phase {
            JoinPhase::Done { root, height } => Some((root, height)),
            _ => None,
        }
    }

    fn fix_step(&mut self, f: &mut Forest, z: NodeId, spine: Side) {
        let anchor = self.anchor;
        let q = match f.parent(z) {
            Some(q) if Some(q) != anchor.parent && !f.is_marked(z) => Some(q),
            _ => None,
        };
        let Some(q) = q.filter(|&q| f.color(q) == Color::Red) else {
            return self.finish(f);
        };
        let g = match f.parent(q) {
            Some(g) if Some(g) != anchor.parent && !f.is_marked(q) => g,
            _ => {
                // q is the tree root
                f.set_color(q, Color::Black);
                let root = anchor.get(f).unwrap();
                self.phase = JoinPhase::Done { root, height: self.h_tall + 1 };
                return;
            }
        };
        let uncle = f.inner_child(g, spine.flip());
        debug_assert_eq!(f.inner_child(g, spine), Some(q));
        if is_red(f, uncle) {
            f.set_color(q, Color::Black);
            f.set_color(uncle.unwrap(), Color::Black);
            f.set_color(g, Color::Red);
            self.phase = JoinPhase::Fix { z: g };
            return;
        }
        // z is on q's spine side (outer), so one rotation at g suffices
        debug_assert_eq!(f.child(q, spine), Some(z));
        f.rotate_up(q).unwrap();
        f.set_color(q, Color::Black);
        f.set_color(g, Color::Red);
        self.finish(f);
    }

    fn finish(&mut self, f: &mut Forest) {
        let root = self.anchor.get(f).unwrap();
        let height = if f.color(root) == Color::Red {
            f.set_color(root, Color::Black);
            self.h_tall + 1
        } else {
            self.h_tall
        };
        self.phase = JoinPhase::Done { root, height };
    }
}

/// Height of the tree rooted at `root`, by walking its left spine.
pub fn measure_height(f: &mut Forest, root: Option<NodeId>) -> u32 {
    let Some(mut cur) = root else {
        return 0;
    };
    let mut h = 1;
    loop {
        f.visit(cur);
        match f.inner_child(cur, Side::Left) {
            Some(c) => {
                if f.color(c) == Color::Black {
                    h += 1;
                }
                cur = c;
            }
            None => return h,
        }
    }
}

/// Boundary nodes of the deep part (depth > d) of a tree storing a path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Boundary {
    /// predecessor of `l_deep`
    pub l: Option<NodeId>,
    /// minimum-key node with depth > d
    pub l_deep: NodeId,
    /// maximum-key node with depth > d
    pub r_deep: NodeId,
    /// successor of `r_deep`
    pub r: Option<NodeId>,
}

/// Walk from `root` to the extreme-key node of depth > d on one side and
/// return it with its neighbour on the far side. The cursor returns to the
/// root afterwards.
fn boundary_side(f: &mut Forest, root: NodeId, d: u32, side: Side) -> Option<(NodeId, Option<NodeId>)> {
    let first = side;
    let second = side.flip();
    if f.node(root).max_depth <= d {
        return None;
    }
    let mut cur = root;
    let mut neighbour = None;
    let deep = loop {
        f.visit(cur);
        let c = f.inner_child(cur, first);
        if let Some(c) = c.filter(|&c| f.node(c).max_depth > d) {
            cur = c;
            continue;
        }
        if f.depth_p(cur) > d {
            break cur;
        }
        neighbour = Some(cur);
        cur = f.inner_child(cur, second).expect("augmentation says deeper nodes exist");
    };
    // neighbour: closest node on the `first` side of `deep`
    let mut n = f.inner_child(deep, first);
    if let Some(mut m) = n {
        f.visit(m);
        while let Some(c) = f.inner_child(m, second) {
            f.visit(c);
            m = c;
        }
        n = Some(m);
    } else {
        n = neighbour;
    }
    f.visit(root);
    Some((deep, n))
}

/// Find the boundary of the nodes deeper than `d` in the tree at `root`.
pub fn find_boundary(f: &mut Forest, root: NodeId, d: u32) -> Result<Boundary, AuxError> {
    if f.node(root).min_depth > d {
        return Err(AuxError::NoBoundary(d));
    }
    let (l_deep, l) = boundary_side(f, root, d, Side::Left).ok_or(AuxError::NoBoundary(d))?;
    let (r_deep, r) = boundary_side(f, root, d, Side::Right).unwrap();
    Ok(Boundary { l, l_deep, r_deep, r })
}

/// Result of cutting a tree by depth.
#[derive(Clone, Copy, Debug)]
pub struct Cut {
    pub top: NodeId,
    pub top_height: u32,
    /// Marked root of the deep part, if any.
    pub bottom: Option<NodeId>,
    pub bottom_height: u32,
}

/// Cut the tree held in `slot` (height `h`) into the part of depth ≤ `d`
/// and the part deeper than `d`; the deep part is marked and left hanging in
/// its key-space gap below the top part.
pub fn cut_tango(f: &mut Forest, slot: Slot, h: u32, d: u32) -> Result<Cut, AuxError> {
    let root = slot.get(f).ok_or(AuxError::Empty)?;
    if f.node(root).min_depth > d {
        return Err(AuxError::CutTooShallow(d));
    }
    if f.node(root).max_depth <= d {
        return Ok(Cut { top: root, top_height: h, bottom: None, bottom_height: 0 });
    }
    let b = find_boundary(f, root, d)?;
    let (bottom, bottom_height, top, top_height) = match (b.l, b.r) {
        (Some(l), Some(r)) => {
            let s1 = split_near_root(f, slot, f.key(l))?;
            let s2 = split_near_root(f, Slot::child_of(l, Side::Right), f.key(r))?;
            let bottom = f.left(r).unwrap();
            f.set_mark(bottom, true);
            f.refresh_aug(r);
            f.refresh_aug(l);
            let (_, h1) = join(f, r, 0, s2.right_height);
            let (top, ht) = join(f, l, s1.left_height, h1);
            (bottom, s2.left_height, top, ht)
        }
        (Some(l), None) => {
            let s1 = split_near_root(f, slot, f.key(l))?;
            let bottom = f.right(l).unwrap();
            f.set_mark(bottom, true);
            f.refresh_aug(l);
            let (top, ht) = join(f, l, s1.left_height, 0);
            (bottom, s1.right_height, top, ht)
        }
        (None, Some(r)) => {
            let s2 = split_near_root(f, slot, f.key(r))?;
            let bottom = f.left(r).unwrap();
            f.set_mark(bottom, true);
            f.refresh_aug(r);
            let (top, ht) = join(f, r, 0, s2.right_height);
            (bottom, s2.left_height, top, ht)
        }
        (None, None) => unreachable!("some node is shallow"),
    };
    Ok(Cut { top, top_height, bottom: Some(bottom), bottom_height })
}

/// Join the marked tree rooted at `b` (height `hb`) into the tree rooted at
/// `a` (height `ha`), inside whose key-space gap it hangs. `b` is unmarked.
pub fn concatenate_tango(f: &mut Forest, a: NodeId, ha: u32, b: NodeId, hb: u32) -> Result<(NodeId, u32), AuxError> {
    let slot = Slot::of(f, a);
    let bk = f.key(b);
    // search for b's gap, remembering the bracketing nodes
    let mut lo = None;
    let mut hi = None;
    let mut cur = a;
    loop {
        f.visit(cur);
        let side = if bk < f.key(cur) {
            hi = Some(cur);
            Side::Left
        } else {
            lo = Some(cur);
            Side::Right
        };
        match f.inner_child(cur, side) {
            Some(c) => cur = c,
            None => break,
        }
    }
    match (lo, hi) {
        (Some(lo), Some(hi)) => {
            let s1 = split_near_root(f, slot, f.key(lo))?;
            let c = Slot::child_of(lo, Side::Right);
            let s2 = split_near_root(f, c, f.key(hi))?;
            debug_assert_eq!(f.left(hi), Some(b));
            f.set_mark(b, false);
            f.refresh_aug(hi);
            f.refresh_aug(lo);
            let (_, h1) = join(f, hi, hb, s2.right_height);
            Ok(join(f, lo, s1.left_height, h1))
        }
        (Some(lo), None) => {
            let s1 = split_near_root(f, slot, f.key(lo))?;
            debug_assert_eq!(f.right(lo), Some(b));
            f.set_mark(b, false);
            f.refresh_aug(lo);
            Ok(join(f, lo, s1.left_height, hb))
        }
        (None, Some(hi)) => {
            let s2 = split_near_root(f, slot, f.key(hi))?;
            debug_assert_eq!(f.left(hi), Some(b));
            f.set_mark(b, false);
            f.refresh_aug(hi);
            Ok(join(f, hi, hb, s2.right_height))
        }
        (None, None) => {
            let _ = ha;
            Err(AuxError::Empty)
        }
    }
}

/// Collect the chain of nodes starting at `top`, each the only unmarked
/// child of the previous one.
pub fn chain_nodes(f: &Forest, top: NodeId) -> Vec<NodeId> {
    let mut out = vec![top];
    let mut cur = top;
    loop {
        let l = f.inner_child(cur, Side::Left);
        let r = f.inner_child(cur, Side::Right);
        match (l, r) {
            (Some(c), None) | (None, Some(c)) => {
                out.push(c);
                cur = c;
            }
            (None, None) => return out,
            (Some(_), Some(_)) => panic!("chain node with two unmarked children"),
        }
    }
}

/// Result of rebuilding a path into a red-black tree.
#[derive(Clone, Copy, Debug)]
pub struct Built {
    pub root: NodeId,
    pub height: u32,
    pub rotations: u64,
}

/// Rebuild the chain starting at `top` (a path of the reference tree, each
/// node the single unmarked child of the previous) into a red-black tree.
///
/// The chain is first turned into a right-going vine, then compressed with
/// rounds of left rotations along the vine; at most `2k` rotations. The mark
/// of `top` moves with the root.
pub fn build_from_path(f: &mut Forest, top: NodeId) -> Result<Built, AuxError> {
    let nodes = chain_nodes(f, top);
    if nodes.windows(2).any(|w| f.depth_p(w[1]) != f.depth_p(w[0]) + 1) {
        return Err(AuxError::NotAPath);
    }
    let slot = Slot::of(f, top);
    let rot0 = rotations_so_far(f);
    let k = nodes.len();
    // vine: every node ends up on the right spine
    let mut cur = slot.get(f);
    while let Some(c) = cur {
        f.visit(c);
        f.set_color(c, Color::Black);
        match f.inner_child(c, Side::Left) {
            Some(l) => {
                f.rotate_up(l).unwrap();
                cur = Some(l);
            }
            None => cur = f.inner_child(c, Side::Right),
        }
    }
    let perfect = (1usize << (usize::BITS - (k + 1).leading_zeros() - 1)) - 1;
    let height = perfect.trailing_ones();
    let compress = |f: &mut Forest, count: usize, red: bool| {
        let mut c = slot.get(f).unwrap();
        for _ in 0..count {
            let r = f.inner_child(c, Side::Right).unwrap();
            f.rotate_up(r).unwrap();
            if red {
                f.set_color(c, Color::Red);
            }
            match f.inner_child(r, Side::Right) {
                Some(n) => c = n,
                None => break,
            }
        }
    };
    compress(f, k - perfect, true);
    let mut m = perfect;
    while m > 1 {
        m /= 2;
        compress(f, m, false);
    }
    let root = slot.get(f).unwrap();
    Ok(Built { root, height, rotations: rotations_so_far(f) - rot0 })
}

fn rotations_so_far(f: &Forest) -> u64 {
    f.rotation_counter()
}

// ----- static layouts (construction time, unmetered) -----

/// Lay out `nodes` (sorted by key) as a balanced red-black tree and return
/// its root and height. Children slots are left empty.
pub fn layout_balanced(f: &mut Forest, nodes: &[NodeId]) -> (Option<NodeId>, u32) {
    fn levels(n: usize) -> u32 {
        usize::BITS - n.leading_zeros()
    }
    fn rec(f: &mut Forest, nodes: &[NodeId], depth: u32, full: u32) -> Option<NodeId> {
        if nodes.is_empty() {
            return None;
        }
        let mid = nodes.len() / 2;
        let h = nodes[mid];
        let l = rec(f, &nodes[..mid], depth + 1, full);
        let r = rec(f, &nodes[mid + 1..], depth + 1, full);
        f.raw_set_child(h, Side::Left, l);
        f.raw_set_child(h, Side::Right, r);
        f.raw_set_color(h, if depth + 1 > full { Color::Red } else { Color::Black });
        f.raw_set_mark(h, false);
        f.recompute_aug(h);
        Some(h)
    }
    if nodes.is_empty() {
        return (None, 0);
    }
    // nodes on the last, partially filled level are red
    let total_levels = levels(nodes.len());
    let perfect = nodes.len() + 1 == 1 << total_levels;
    let full = if perfect { total_levels } else { total_levels - 1 };
    let root = rec(f, nodes, 0, full);
    (root, full)
}

/// Hang `externals` (one per key-space gap, in key order) on the empty child
/// slots of the tree at `root`, in in-order position. `externals` must have
/// exactly `size + 1` entries.
pub fn attach_externals(f: &mut Forest, root: NodeId, externals: &[Option<NodeId>]) {
    let nodes = f.subtree_nodes(root, true);
    assert_eq!(nodes.len() + 1, externals.len());
    let mut gap = 0;
    // in-order walk over empty slots
    fn walk(f: &mut Forest, h: NodeId, ext: &[Option<NodeId>], gap: &mut usize) {
        match f.left(h) {
            Some(c) if !f.is_marked(c) => walk(f, c, ext, gap),
            _ => {
                f.raw_set_child(h, Side::Left, ext[*gap]);
                *gap += 1;
            }
        }
        match f.right(h) {
            Some(c) if !f.is_marked(c) => walk(f, c, ext, gap),
            _ => {
                f.raw_set_child(h, Side::Right, ext[*gap]);
                *gap += 1;
            }
        }
    }
    walk(f, root, externals, &mut gap);
}

// ----- oracles -----

/// Check red-black rules, black-height balance, key order and augmentation
/// of the tree at `root` (a marked root counts as inside). Returns the
/// height on success.
pub fn rb_check(f: &Forest, root: NodeId) -> Result<u32, String> {
    fn rec(f: &Forest, h: NodeId, lo: Option<Key>, hi: Option<Key>) -> Result<(u32, u32, u32), String> {
        let k = f.key(h);
        if lo.is_some_and(|lo| k <= lo) || hi.is_some_and(|hi| k >= hi) {
            return Err(format!("key order violated at {k}"));
        }
        let mut bh = [0u32; 2];
        let mut mn = f.depth_p(h);
        let mut mx = mn;
        for (i, side) in [Side::Left, Side::Right].into_iter().enumerate() {
            if let Some(c) = f.inner_child(h, side) {
                if f.parent(c) != Some(h) {
                    return Err(format!("parent link broken below {k}"));
                }
                if f.color(h) == Color::Red && f.color(c) == Color::Red {
                    return Err(format!("red node {k} has a red child"));
                }
                let (lo2, hi2) = if side == Side::Left { (lo, Some(k)) } else { (Some(k), hi) };
                let (b, a, z) = rec(f, c, lo2, hi2)?;
                bh[i] = b;
                mn = mn.min(a);
                mx = mx.max(z);
            }
        }
        if bh[0] != bh[1] {
            return Err(format!("black heights differ at {k}"));
        }
        if f.node(h).min_depth != mn || f.node(h).max_depth != mx {
            return Err(format!("stale depth augmentation at {k}"));
        }
        Ok((bh[0] + u32::from(f.color(h) == Color::Black), mn, mx))
    }
    if f.color(root) != Color::Black {
        return Err("root is red".into());
    }
    rec(f, root, None, None).map(|(h, _, _)| h)
}

pub fn validate_rb(f: &Forest, root: NodeId) -> bool {
    rb_check(f, root).is_ok()
}

/// Keys of the tree at `root`, not descending into other auxiliary trees.
pub fn to_key_list(f: &Forest, root: NodeId) -> Vec<Key> {
    f.subtree_keys(root, true)
}

/// Height of the tree at `root` in binary levels (not crossing marks).
pub fn binary_height(f: &Forest, root: NodeId) -> u32 {
    let mut best = 0;
    let mut stack = vec![(root, 1u32)];
    while let Some((h, d)) = stack.pop() {
        best = best.max(d);
        for side in [Side::Left, Side::Right] {
            if let Some(c) = f.inner_child(h, side) {
                stack.push((c, d + 1));
            }
        }
    }
    best
}

/// Parenthesised dump: `(left key@depth[color,mark] right)`, `.` for empty.
pub fn debug_dump(f: &Forest, root: Option<NodeId>) -> String {
    fn rec(f: &Forest, h: Option<NodeId>, top: bool, out: &mut String) {
        match h {
            None => out.push('.'),
            Some(h) if f.is_marked(h) && !top => {
                let _ = write!(out, "<{}>", f.key(h));
            }
            Some(h) => {
                out.push('(');
                rec(f, f.left(h), false, out);
                let c = if f.color(h) == Color::Red { 'R' } else { 'B' };
                let m = if f.is_marked(h) { 'm' } else { '-' };
                let _ = write!(out, " {}@{}[{},{}] ", f.key(h), f.depth_p(h), c, m);
                rec(f, f.right(h), false, out);
                out.push(')');
            }
        }
    }
    let mut out = String::new();
    rec(f, root, true, &mut out);
    out
}

#[cfg(test)]
#[path = "aux_redblack_tests.rs"]
mod tests;
