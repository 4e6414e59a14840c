//! Zipper trees: every preferred path keeps its shallowest part as two
//! zippers folded at the root of its representation, above a red-black
//! bottom tree. All restructuring happens near representation roots, so the
//! whole structure runs in the strict BST model.
//!
//! A zipper is a ready [`Extraction`]: the zig list hangs left of the zig
//! anchor `l` (the representation root), the zag list right of the zag
//! anchor `r`, and the lower zipper (or the bottom tree) sits at `r.left`.
//! An access zips the upper zipper node by node; an emptied upper zipper is
//! replaced by the lower one while a fresh lower zipper is extracted in the
//! background.

use std::collections::HashMap;

use crate::aux_redblack::{
    build_from_path, concatenate_tango, cut_tango, find_boundary, measure_height, Slot,
};
use crate::bst_model::{AccessTrace, Color, Forest, Key, Mode, NodeId, Side};
use crate::competitive::{layout_tango, ll, nodes_for, AccessError, CompetitiveBst};
use crate::extraction::Extraction;
use crate::reference_tree::ReferenceTree;

/// Default number of extraction steps owed per node output from an upper
/// zipper.
pub const SPEED_EXTRACT: u64 = 16;

/// Bound on the depth (below the representation root) of any rotation made
/// by extraction or zipping.
pub const D_LOCAL: u32 = crate::aux_redblack::D_SPLIT + 4;

/// Per-representation process state, keyed by the marked root.
#[derive(Clone, Debug)]
struct Rep {
    upper: Extraction,
    /// `None` once the bottom tree is empty.
    lower: Option<Extraction>,
    owed: u64,
}

impl Rep {
    fn lower_pending(&self) -> bool {
        self.lower.as_ref().is_some_and(|l| !l.is_ready())
    }

    /// Slot of the lower zipper's tree, given where the whole rest hangs.
    fn lower_slot(&self, f: &Forest, rest: Slot) -> Slot {
        if self.upper.is_exhausted(f) {
            rest
        } else {
            self.upper.deep_slot().expect("lower zipper below a non-draining upper")
        }
    }

    fn is_empty(&self, f: &Forest) -> bool {
        self.upper.is_exhausted(f) && self.lower.is_none()
    }
}

/// One piece of the new root path built during an access.
#[derive(Clone, Copy, Debug)]
enum Part {
    /// Output nodes hanging below each other, starting at this marked node,
    /// and their number.
    Chain(NodeId, u32),
    /// A red-black tree cut out of a representation.
    Tree(NodeId, u32),
}

/// Counters kept across accesses.
#[derive(Clone, Debug, Default)]
pub struct ZipperStats {
    pub accesses: u64,
    pub case1: u64,
    pub case2: u64,
    pub promotions: u64,
    pub extraction_steps: u64,
    /// Deepest extraction or zip rotation below a representation root.
    pub max_local_depth: u32,
    /// Touches spent in flattening, final folding and final rebuilding.
    pub phase_touches: [u64; 3],
}

pub struct ZipperTree {
    forest: Forest,
    keys: Vec<Key>,
    ll: u32,
    reps: HashMap<NodeId, Rep>,
    speed: u64,
    pub stats: ZipperStats,
}

impl ZipperTree {
    pub fn new(keys: &[Key]) -> Result<Self, AccessError> {
        Self::with_speed(keys, SPEED_EXTRACT)
    }

    /// Like [`ZipperTree::new`] with a custom extraction speed. Slow speeds
    /// leave extractions unfinished more often and exercise the fallback
    /// that rebuilds a representation from scratch.
    pub fn with_speed(keys: &[Key], speed: u64) -> Result<Self, AccessError> {
        let reference = ReferenceTree::build(keys)?;
        let mut forest = Forest::new();
        let nodes = nodes_for(&mut forest, &reference);
        layout_tango(&mut forest, &reference, &nodes);
        let mut t = ZipperTree {
            forest,
            keys: keys.to_vec(),
            ll: ll(keys.len()),
            reps: HashMap::new(),
            speed: speed.max(1),
            stats: ZipperStats::default(),
        };
        let roots: Vec<NodeId> = nodes.into_iter().filter(|&h| t.forest.is_marked(h)).collect();
        for root in roots {
            let slot = Slot::of(&t.forest, root);
            t.rebuild(slot)?;
        }
        Ok(t)
    }

    pub fn ll(&self) -> u32 {
        self.ll
    }

    /// Turn the red-black tree in `slot` into a representation with two
    /// zippers.
    fn rebuild(&mut self, slot: Slot) -> Result<(), AccessError> {
        let f = &mut self.forest;
        let mut upper = Extraction::new(self.ll);
        f.start_probe();
        upper.finish(f, slot)?;
        let lower = if upper.drains() {
            None
        } else {
            let mut lower = Extraction::new(self.ll);
            lower.finish(f, upper.deep_slot().unwrap())?;
            Some(lower)
        };
        self.note_local();
        self.stats.extraction_steps += upper.steps + lower.as_ref().map_or(0, |l| l.steps);
        let root = slot.get(&self.forest).unwrap();
        self.reps.insert(root, Rep { upper, lower, owed: 0 });
        Ok(())
    }

    fn note_local(&mut self) {
        let d = self.forest.take_probe();
        self.stats.max_local_depth = self.stats.max_local_depth.max(d);
    }

    /// Advance the pending lower extraction by what is owed.
    fn pay(&mut self, rep: &mut Rep, rest: Slot) -> Result<(), AccessError> {
        if !rep.lower_pending() {
            rep.owed = 0;
            return Ok(());
        }
        let slot = rep.lower_slot(&self.forest, rest);
        let f = &mut self.forest;
        f.start_probe();
        let lower = rep.lower.as_mut().unwrap();
        let used = lower.advance(f, slot, rep.owed)?;
        self.note_local();
        self.stats.extraction_steps += used;
        rep.owed = 0;
        Ok(())
    }

    /// Store a representation left behind by the search.
    fn park(&mut self, mut rep: Rep, rest: Slot) -> Result<(), AccessError> {
        self.pay(&mut rep, rest)?;
        let root = rest.get(&self.forest).unwrap();
        debug_assert!(self.forest.is_marked(root));
        self.reps.insert(root, rep);
        Ok(())
    }

    /// Convert the representation in `slot` into a red-black tree: finish
    /// the lower extraction, zip both zippers into a chain, rebuild the chain
    /// and concatenate it with the bottom tree. Returns root and height.
    fn flatten(&mut self, rep: Rep, slot: Slot) -> Result<(NodeId, u32), AccessError> {
        let t0 = self.forest.touches();
        let r = self.flatten_inner(rep, slot);
        self.stats.phase_touches[0] += self.forest.touches() - t0;
        r
    }

    fn flatten_inner(&mut self, mut rep: Rep, slot: Slot) -> Result<(NodeId, u32), AccessError> {
        if rep.lower_pending() {
            let lslot = rep.lower_slot(&self.forest, slot);
            let lower = rep.lower.as_mut().unwrap();
            let used = lower.finish(&mut self.forest, lslot)?;
            self.stats.extraction_steps += used;
        }
        let f = &mut self.forest;
        let mut tail = slot.parent;
        let mut first = None;
        let mut last = None;
        loop {
            let e = match rep.upper.emit(f, tail) {
                Some(e) => Some(e),
                None => rep.lower.as_mut().and_then(|l| l.emit(f, tail)),
            };
            let Some(e) = e else { break };
            first.get_or_insert(e.node);
            tail = Some(e.node);
            last = Some(e);
        }
        let first = first.expect("representation is not empty");
        debug_assert!(f.is_marked(first));
        let bottom = match (&rep.lower, last) {
            (Some(l), Some(e)) if !l.drains() => f.child(e.node, e.path_side),
            _ => None,
        };
        let bottom = bottom.map(|b| {
            f.set_color(b, Color::Black);
            f.set_mark(b, true);
            (b, measure_height(f, Some(b)))
        });
        let built = build_from_path(f, first)?;
        match bottom {
            Some((b, hb)) => Ok(concatenate_tango(f, built.root, built.height, b, hb)?),
            None => Ok((built.root, built.height)),
        }
    }

    fn search(&mut self, x: Key) -> Result<(), AccessError> {
        let mut parts: Vec<Part> = Vec::new();
        let mut tail: Option<NodeId> = None;
        let mut tail_in_tree = false;
        let mut entry = self.forest.root().unwrap();
        'reps: loop {
            let mut rep = self.reps.remove(&entry).expect("state for every marked root");
            let mut rest = Slot::of(&self.forest, entry);
            loop {
                if rep.upper.is_exhausted(&self.forest) {
                    // the lower zipper takes over
                    self.pay(&mut rep, rest)?;
                    // a further extraction may only start once the running one is done
                    if rep.lower_pending() {
                        self.stats.case2 += 1;
                        let done = self.case2(x, rep, rest, &mut parts)?;
                        match done {
                            Some(y) => {
                                tail = self.forest.parent(y);
                                tail_in_tree = true;
                                entry = y;
                                continue 'reps;
                            }
                            None => return self.conclude(parts, None),
                        }
                    }
                    self.stats.promotions += 1;
                    rep.upper = rep.lower.take().unwrap();
                    rep.owed = 0;
                    if !rep.upper.drains() {
                        rep.lower = Some(Extraction::new(self.ll));
                    }
                }
                let f = &mut self.forest;
                f.start_probe();
                let e = rep.upper.emit(f, tail).expect("upper zipper not exhausted");
                self.note_local();
                if rep.lower_pending() {
                    rep.owed += self.speed;
                }
                let f = &mut self.forest;
                let h = e.node;
                let opens = tail.is_none() || tail_in_tree;
                f.set_mark(h, opens);
                if opens {
                    parts.push(Part::Chain(h, 1));
                } else if let Some(Part::Chain(_, len)) = parts.last_mut() {
                    *len += 1;
                }
                tail = Some(h);
                tail_in_tree = false;
                rest = Slot::child_of(h, e.path_side);
                let rest_nonempty = !rep.is_empty(f);
                if rest_nonempty {
                    f.set_mark(rest.get(f).unwrap(), true);
                }
                let k = f.key(h);
                if k == x {
                    self.stats.case1 += 1;
                    let acc = if rest_nonempty && e.path_side == Side::Left {
                        Some(self.flatten(rep, rest)?)
                    } else {
                        if rest_nonempty {
                            self.park(rep, rest)?;
                        }
                        self.flatten_child(h, Side::Left)?
                    };
                    return self.conclude(parts, acc);
                }
                let side = if x < k { Side::Left } else { Side::Right };
                if side == e.path_side && rest_nonempty {
                    continue;
                }
                self.stats.case1 += 1;
                if rest_nonempty {
                    self.park(rep, rest)?;
                }
                let f = &mut self.forest;
                f.visit(h);
                entry = f.child(h, side).ok_or(AccessError::UnknownKey(x))?;
                f.visit(entry);
                continue 'reps;
            }
        }
    }

    /// Flatten the representation hanging at `side` of `h`, if any.
    fn flatten_child(&mut self, h: NodeId, side: Side) -> Result<Option<(NodeId, u32)>, AccessError> {
        let f = &mut self.forest;
        f.visit(h);
        match f.child(h, side).filter(|&c| f.is_marked(c)) {
            Some(c) => {
                let rep = self.reps.remove(&c).expect("state for every marked root");
                Ok(Some(self.flatten(rep, Slot::child_of(h, side))?))
            }
            None => Ok(None),
        }
    }

    /// Handle a search that runs past both zippers: turn the representation
    /// into one red-black tree, search it, cut it below the leaving point and
    /// rebuild the cut-off part. Returns the next representation root, or
    /// `None` if `x` was found.
    fn case2(&mut self, x: Key, rep: Rep, rest: Slot, parts: &mut Vec<Part>) -> Result<Option<NodeId>, AccessError> {
        let (mut root, mut h) = self.flatten(rep, rest)?;
        let mut cur = root;
        loop {
            let f = &mut self.forest;
            f.visit(cur);
            let k = f.key(cur);
            if k == x {
                let dx = f.depth_p(cur);
                if f.node(root).max_depth > dx {
                    let b = find_boundary(f, root, dx)?;
                    if b.r != Some(cur) {
                        (root, h) = self.cut(rest, h, dx)?;
                    }
                }
                if self.forest.node(root).max_depth <= dx {
                    // the path ends at x: its left subtree continues it
                    if let Some((c, hc)) = self.left_gap_rep(cur)? {
                        (root, h) = concatenate_tango(&mut self.forest, root, h, c, hc)?;
                    }
                }
                parts.push(Part::Tree(root, h));
                return Ok(None);
            }
            let side = if x < k { Side::Left } else { Side::Right };
            let c = f.child(cur, side).ok_or(AccessError::UnknownKey(x))?;
            if f.is_marked(c) {
                let d = f.node(c).min_depth - 1;
                let (top, ht) = self.cut(rest, h, d)?;
                parts.push(Part::Tree(top, ht));
                return Ok(Some(c));
            }
            cur = c;
        }
    }

    /// Cut the tree in `slot` below depth `d` and rebuild the removed part as
    /// a representation of its own.
    fn cut(&mut self, slot: Slot, h: u32, d: u32) -> Result<(NodeId, u32), AccessError> {
        let c = cut_tango(&mut self.forest, slot, h, d)?;
        if let Some(b) = c.bottom {
            let bslot = Slot::of(&self.forest, b);
            self.rebuild(bslot)?;
        }
        Ok((c.top, c.top_height))
    }

    /// The representation hanging just left of `x` inside its tree, flattened.
    fn left_gap_rep(&mut self, x: NodeId) -> Result<Option<(NodeId, u32)>, AccessError> {
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
        self.flatten_child(gap.0, gap.1)
    }

    /// Concatenate the parts of the new root path bottom-up into one tree and
    /// turn it into the root representation. When the path starts with a
    /// long enough chain its top nodes are folded straight into zippers.
    fn conclude(&mut self, mut parts: Vec<Part>, acc: Option<(NodeId, u32)>) -> Result<(), AccessError> {
        let t0 = self.forest.touches();
        let ll = self.ll;
        let Some(&Part::Chain(top, len)) = parts.first() else {
            return self.conclude_by_extraction(parts, acc, t0);
        };
        if len < ll {
            return self.conclude_by_extraction(parts, acc, t0);
        }
        let u = ll as usize;
        // the lower zipper is either full or takes the whole rest of the path
        let rest = len - ll;
        let v = if rest >= ll || (parts.len() == 1 && acc.is_none()) { rest.min(ll) } else { 0 } as usize;
        let f = &mut self.forest;
        let mut nodes = vec![top];
        while nodes.len() <= u + v && nodes.len() < len as usize {
            let cur = *nodes.last().unwrap();
            f.visit(cur);
            let next = [Side::Left, Side::Right].into_iter().find_map(|s| f.inner_child(cur, s)).unwrap();
            nodes.push(next);
        }
        if nodes.len() > u + v {
            let rest = nodes[u + v];
            f.set_mark(rest, true);
            parts[0] = Part::Chain(rest, len - (u + v) as u32);
        } else {
            parts.remove(0);
        }
        nodes.truncate(u + v);
        let bottom = self.fold(parts, acc)?;
        let f = &mut self.forest;
        let t1 = f.touches();
        let mut sides = Vec::with_capacity(nodes.len());
        for w in nodes.windows(2) {
            sides.push(f.side_of(w[1]).unwrap());
        }
        // below the last node sits the bottom tree, if any
        sides.push(bottom.and_then(|b| f.side_of(b)).unwrap_or(Side::Left));
        if let Some(b) = bottom {
            f.set_mark(b, false);
        }
        f.start_probe();
        let lower = if v > 0 {
            Some(unzip(f, &nodes[u..], &sides[u..], bottom.is_none()))
        } else if bottom.is_some() {
            Some(Extraction::new(ll))
        } else {
            None
        };
        let upper = unzip(f, &nodes[..u], &sides[..u], lower.is_none() && bottom.is_none());
        self.note_local();
        let root = self.forest.root().unwrap();
        debug_assert!(self.forest.is_marked(root));
        self.reps.insert(root, Rep { upper, lower, owed: 0 });
        self.stats.phase_touches[1] += t1 - t0;
        self.stats.phase_touches[2] += self.forest.touches() - t1;
        Ok(())
    }

    fn conclude_by_extraction(&mut self, parts: Vec<Part>, acc: Option<(NodeId, u32)>, t0: u64) -> Result<(), AccessError> {
        let root = self.fold(parts, acc)?;
        debug_assert_eq!(root, self.forest.root());
        let t1 = self.forest.touches();
        self.stats.phase_touches[1] += t1 - t0;
        let r = self.rebuild(Slot::root());
        self.stats.phase_touches[2] += self.forest.touches() - t1;
        r
    }

    /// Concatenate `parts` (top-down) onto the tree `acc` hanging below the
    /// last of them. Returns the root of the resulting tree.
    fn fold(&mut self, parts: Vec<Part>, mut acc: Option<(NodeId, u32)>) -> Result<Option<NodeId>, AccessError> {
        for part in parts.into_iter().rev() {
            let f = &mut self.forest;
            let (root, h) = match part {
                Part::Chain(top, _) => {
                    let b = build_from_path(f, top)?;
                    (b.root, b.height)
                }
                Part::Tree(root, h) => (root, h),
            };
            acc = Some(match acc {
                Some((b, hb)) => concatenate_tango(f, root, h, b, hb)?,
                None => (root, h),
            });
        }
        Ok(acc.map(|a| a.0))
    }

    /// Check every representation against its invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        let f = &self.forest;
        let mut stack = vec![f.root().ok_or("empty")?];
        while let Some(root) = stack.pop() {
            let rep = self.reps.get(&root).ok_or_else(|| format!("no state at {root}"))?;
            let upper = rep.upper.remaining(f);
            let lower = rep.lower.as_ref().map_or(0, |l| if l.is_ready() { l.remaining(f) } else { 0 });
            if upper > self.ll || lower > self.ll {
                return Err(format!("zipper too large at {root}: {upper}/{lower}"));
            }
            let comp = f.subtree_nodes(root, true);
            let mut depths: Vec<u32> = comp.iter().map(|&h| f.depth_p(h)).collect();
            depths.sort_unstable();
            if depths.windows(2).any(|w| w[1] != w[0] + 1) {
                return Err(format!("representation at {root} is not a path"));
            }
            for h in comp {
                for s in [Side::Left, Side::Right] {
                    if let Some(c) = f.child(h, s).filter(|&c| f.is_marked(c)) {
                        stack.push(c);
                    }
                }
            }
        }
        if self.reps.len() != count_marked(f) {
            return Err("stale representation state".into());
        }
        Ok(())
    }
}

/// Fold the chain `nodes` (top first, each the parent of the next; `sides[i]`
/// is where the path continues below `nodes[i]`) into a zipper, deepest node
/// first. This is the zip run backwards: every node costs at most two
/// rotations at the top of the zipper built so far. Without `drain` the
/// subtree below the last node becomes the zipper's deep part.
fn unzip(f: &mut Forest, nodes: &[NodeId], sides: &[Side], drain: bool) -> Extraction {
    let mut l: Option<NodeId> = None;
    let mut r: Option<NodeId> = None;
    let mut order = nodes.iter().zip(sides).rev();
    if drain {
        let (&w, _) = order.next().unwrap();
        l = Some(w);
    }
    for (&c, &side) in order {
        f.visit(c);
        match side {
            Side::Right => match l {
                Some(lw) => f.rotate_up(lw).unwrap(),
                None => l = Some(c),
            },
            Side::Left if drain => f.rotate_up(l.unwrap()).unwrap(),
            Side::Left => match (l, r) {
                (None, None) => r = Some(c),
                (None, Some(rr)) => f.rotate_up(rr).unwrap(),
                (Some(lw), None) => {
                    f.rotate_up(lw).unwrap();
                    r = Some(c);
                }
                (Some(lw), Some(rr)) => {
                    f.rotate_up(lw).unwrap();
                    f.rotate_up(rr).unwrap();
                }
            },
        }
    }
    Extraction::ready(l, r, drain)
}

fn count_marked(f: &Forest) -> usize {
    let root = f.root().unwrap();
    f.subtree_nodes(root, false).into_iter().filter(|&h| f.is_marked(h)).count()
}

impl CompetitiveBst for ZipperTree {
    fn name(&self) -> &'static str {
        "zipper"
    }

    fn len(&self) -> usize {
        self.keys.len()
    }

    fn mode(&self) -> Mode {
        Mode::Strict
    }

    fn forest(&self) -> &Forest {
        &self.forest
    }

    fn access(&mut self, x: Key) -> Result<AccessTrace, AccessError> {
        if self.keys.binary_search(&x).is_err() {
            return Err(AccessError::UnknownKey(x));
        }
        self.stats.accesses += 1;
        self.forest.begin_access(Mode::Strict);
        let r = self.search(x);
        let trace = self.forest.end_access();
        r.map(|_| trace)
    }
}

#[cfg(test)]
#[path = "zipper_tree_tests.rs"]
mod tests;
