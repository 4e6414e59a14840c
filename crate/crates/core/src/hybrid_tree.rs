//! Hybrid trees: each preferred path keeps its shallowest nodes as an
//! explicit chain (the top path) above a red-black bottom tree. Searches that
//! leave a path inside its top path only cut the chain; the top path is
//! refilled by incremental extraction from the bottom tree. The extraction
//! work site sits at the end of the top path and is reached through one
//! extra pointer per representation, so these trees run in relaxed mode.

use std::collections::HashMap;

use crate::aux_redblack::{build_from_path, concatenate_tango, cut_tango, find_boundary, measure_height, Slot};
use crate::bst_model::{AccessTrace, Color, Forest, Key, Mode, NodeId, Side};
use crate::competitive::{layout_tango, ll, nodes_for, AccessError, CompetitiveBst};
use crate::extraction::Extraction;
use crate::reference_tree::ReferenceTree;

/// Extraction steps owed per top-path node cut off a representation.
pub const SPEED_EXTRACT: u64 = 16;

/// Extractions run up front when a representation is rebuilt during an
/// access.
const PASSES: u32 = 1;

/// Process state of one representation, keyed by its marked root.
#[derive(Clone, Debug)]
struct Rep {
    /// Number of top-path nodes, starting at the marked root.
    len: u32,
    /// Deepest top-path node; the bottom tree hangs below it.
    last: NodeId,
    /// Side of `last` holding the bottom tree, if there is one.
    bottom: Option<Side>,
    ext: Option<Extraction>,
    owed: u64,
}

#[derive(Clone, Copy, Debug)]
enum Part {
    /// Top-path prefix starting at this marked node, and its length.
    Chain(NodeId, u32),
    Tree(NodeId, u32),
}

#[derive(Clone, Debug, Default)]
pub struct HybridStats {
    pub accesses: u64,
    pub case1: u64,
    pub case2: u64,
    /// Path splits: pieces detached below a leaving point.
    pub cuts: u64,
    pub launches: u64,
    pub extraction_steps: u64,
}

pub struct HybridTree {
    forest: Forest,
    keys: Vec<Key>,
    ll: u32,
    reps: HashMap<NodeId, Rep>,
    speed: u64,
    pub stats: HybridStats,
}

impl HybridTree {
    pub fn new(keys: &[Key]) -> Result<Self, AccessError> {
        Self::with_speed(keys, SPEED_EXTRACT)
    }

    pub fn with_speed(keys: &[Key], speed: u64) -> Result<Self, AccessError> {
        let reference = ReferenceTree::build(keys)?;
        let mut forest = Forest::new();
        let nodes = nodes_for(&mut forest, &reference);
        layout_tango(&mut forest, &reference, &nodes);
        let mut t = HybridTree {
            forest,
            keys: keys.to_vec(),
            ll: ll(keys.len()),
            reps: HashMap::new(),
            speed: speed.max(1),
            stats: HybridStats::default(),
        };
        let roots: Vec<NodeId> = nodes.into_iter().filter(|&h| t.forest.is_marked(h)).collect();
        for root in roots {
            let slot = Slot::of(&t.forest, root);
            t.rebuild(slot, 2)?;
        }
        Ok(t)
    }

    pub fn ll(&self) -> u32 {
        self.ll
    }

    /// Length of the top path of the representation rooted at `root`.
    pub fn top_len(&self, root: NodeId) -> Option<u32> {
        self.reps.get(&root).map(|r| r.len)
    }

    /// Turn the red-black tree in `slot` into a representation whose top
    /// path is made by `passes` extractions. With one pass the second
    /// extraction is left pending and runs as later cuts pay for it.
    fn rebuild(&mut self, slot: Slot, passes: u32) -> Result<(), AccessError> {
        let f = &mut self.forest;
        let mut tail = slot.parent;
        let mut first = None;
        let mut len = 0;
        let mut region = slot.get(f);
        let mut bottom = None;
        for _ in 0..passes {
            let Some(r) = region else { break };
            let rslot = Slot::of(f, r);
            let mut ext = Extraction::new(self.ll);
            self.stats.extraction_steps += ext.finish(f, rslot)?;
            while let Some(e) = ext.emit(f, tail) {
                first.get_or_insert(e.node);
                len += 1;
                tail = Some(e.node);
                bottom = Some(e.path_side);
            }
            region = f.inner_child(tail.unwrap(), bottom.unwrap());
        }
        let last = tail.unwrap();
        let bottom = bottom.filter(|&s| f.inner_child(last, s).is_some());
        let first = first.expect("nonempty tree");
        debug_assert!(f.is_marked(first));
        let ext = (bottom.is_some() && len < 2 * self.ll).then(|| Extraction::new(self.ll));
        self.stats.launches += ext.is_some() as u64;
        self.reps.insert(first, Rep { len, last, bottom, ext, owed: 0 });
        Ok(())
    }

    /// Run up to `budget` steps of the pending process: extraction steps,
    /// then one step per node appended to the top path.
    fn work(&mut self, rep: &mut Rep, budget: u64) -> Result<u64, AccessError> {
        let mut used = 0;
        while used < budget {
            let Some(ext) = rep.ext.as_mut() else { break };
            let f = &mut self.forest;
            if !ext.is_ready() {
                ext.step(f, Slot::child_of(rep.last, rep.bottom.unwrap()))?;
            } else {
                match ext.emit(f, Some(rep.last)) {
                    Some(e) => {
                        rep.len += 1;
                        rep.last = e.node;
                        rep.bottom = Some(e.path_side);
                    }
                    None => {
                        rep.ext = None;
                        rep.bottom = rep.bottom.filter(|&s| f.inner_child(rep.last, s).is_some());
                    }
                }
            }
            used += 1;
        }
        self.stats.extraction_steps += used;
        Ok(used)
    }

    fn finish_process(&mut self, rep: &mut Rep) -> Result<(), AccessError> {
        self.work(rep, u64::MAX)?;
        rep.owed = 0;
        Ok(())
    }

    /// Pay for `k` nodes cut off the top path, launching extractions while
    /// the top path is short. Returns the cursor to `back`.
    fn settle(&mut self, rep: &mut Rep, k: u32, back: NodeId) -> Result<(), AccessError> {
        rep.owed += self.speed * k as u64;
        let mut jumped = false;
        loop {
            if rep.ext.is_none() {
                if rep.bottom.is_none() || rep.len >= 2 * self.ll {
                    break;
                }
                rep.ext = Some(Extraction::new(self.ll));
                self.stats.launches += 1;
            }
            if rep.owed == 0 && rep.len >= self.ll {
                break;
            }
            if !jumped {
                // revival pointer: straight to the work site
                self.forest.jump(rep.last);
                jumped = true;
            }
            let used = self.work(rep, rep.owed.max(1))?;
            rep.owed = rep.owed.saturating_sub(used);
        }
        if rep.ext.is_none() {
            rep.owed = 0;
        }
        if jumped {
            self.forest.jump(back);
        }
        Ok(())
    }

    /// Convert the representation in `slot` into one red-black tree.
    fn flatten(&mut self, mut rep: Rep, slot: Slot) -> Result<(NodeId, u32), AccessError> {
        self.finish_process(&mut rep)?;
        let f = &mut self.forest;
        let top = slot.get(f).unwrap();
        let bottom = rep.bottom.and_then(|s| f.inner_child(rep.last, s)).map(|b| {
            f.visit(b);
            f.set_color(b, Color::Black);
            f.set_mark(b, true);
            (b, measure_height(f, Some(b)))
        });
        let built = build_from_path(f, top)?;
        match bottom {
            Some((b, hb)) => Ok(concatenate_tango(f, built.root, built.height, b, hb)?),
            None => Ok((built.root, built.height)),
        }
    }

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

    /// Detach everything below top-path node `cur` (the first `k` nodes of
    /// the top path stay) as a representation of its own.
    fn split_off(&mut self, mut rep: Rep, cur: NodeId, k: u32) -> Result<(), AccessError> {
        let f = &mut self.forest;
        let Some((below, side)) = [Side::Left, Side::Right]
            .into_iter()
            .find_map(|s| f.inner_child(cur, s).map(|c| (c, s)))
        else {
            return Ok(());
        };
        self.stats.cuts += 1;
        f.visit(below);
        f.set_mark(below, true);
        if cur == rep.last {
            debug_assert!(rep.ext.is_none());
            f.set_color(below, Color::Black);
            self.rebuild(Slot::child_of(cur, side), PASSES)?;
        } else {
            rep.len -= k;
            self.settle(&mut rep, k, cur)?;
            self.reps.insert(below, rep);
        }
        self.forest.visit(cur);
        Ok(())
    }

    fn search(&mut self, x: Key) -> Result<(), AccessError> {
        let mut parts: Vec<Part> = Vec::new();
        let mut entry = self.forest.root().unwrap();
        'reps: loop {
            let mut rep = self.reps.remove(&entry).expect("state for every marked root");
            let top = entry;
            // a chain continuing a chain is built together with it
            let merged = matches!(parts.last(), Some(Part::Chain(..)));
            if merged {
                self.forest.set_mark(top, false);
            }
            let mut cur = top;
            let mut k = 1;
            loop {
                if cur == rep.last && rep.ext.is_some() {
                    // finishing may lengthen the top path past this point
                    self.finish_process(&mut rep)?;
                }
                let f = &mut self.forest;
                f.visit(cur);
                let key = f.key(cur);
                let cont = [Side::Left, Side::Right].into_iter().find(|&s| f.inner_child(cur, s).is_some());
                if key == x {
                    self.stats.case1 += 1;
                    if cont == Some(Side::Left) {
                        self.forest.set_mark(top, true);
                        let t = self.flatten(rep, Slot::of(&self.forest, top))?;
                        parts.push(Part::Tree(t.0, t.1));
                        return self.conclude(parts, None);
                    }
                    self.split_off(rep, cur, k)?;
                    push_chain(&mut parts, top, k, merged);
                    let acc = self.flatten_child(cur, Side::Left)?;
                    return self.conclude(parts, acc);
                }
                let side = if x < key { Side::Left } else { Side::Right };
                if cont == Some(side) {
                    if cur == rep.last {
                        self.stats.case2 += 1;
                        self.forest.set_mark(top, true);
                        let slot = Slot::of(&self.forest, top);
                        match self.case2(x, rep, slot, &mut parts)? {
                            Some(y) => {
                                entry = y;
                                continue 'reps;
                            }
                            None => return self.conclude(parts, None),
                        }
                    }
                    cur = f.inner_child(cur, side).unwrap();
                    k += 1;
                    continue;
                }
                self.stats.case1 += 1;
                self.split_off(rep, cur, k)?;
                push_chain(&mut parts, top, k, merged);
                let f = &mut self.forest;
                entry = f.child(cur, side).ok_or(AccessError::UnknownKey(x))?;
                f.visit(entry);
                continue 'reps;
            }
        }
    }

    /// The search runs past the top path into the bottom tree: rebuild the
    /// representation into one red-black tree, search it and cut it below
    /// the leaving point. Returns the next representation root, or `None`
    /// if `x` was found.
    fn case2(&mut self, x: Key, rep: Rep, slot: Slot, parts: &mut Vec<Part>) -> Result<Option<NodeId>, AccessError> {
        let (mut root, mut h) = self.flatten(rep, slot)?;
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
                        (root, h) = self.cut(slot, h, dx)?;
                    }
                }
                if self.forest.node(root).max_depth <= dx {
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
                let (top, ht) = self.cut(slot, h, d)?;
                parts.push(Part::Tree(top, ht));
                self.forest.visit(c);
                return Ok(Some(c));
            }
            cur = c;
        }
    }

    fn cut(&mut self, slot: Slot, h: u32, d: u32) -> Result<(NodeId, u32), AccessError> {
        let c = cut_tango(&mut self.forest, slot, h, d)?;
        if let Some(b) = c.bottom {
            self.stats.cuts += 1;
            let bslot = Slot::of(&self.forest, b);
            self.rebuild(bslot, PASSES)?;
        }
        Ok((c.top, c.top_height))
    }

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

    /// Concatenate the parts of the new root path in one go and make the
    /// result the root representation. A long enough leading chain is kept
    /// as the new top path; otherwise a top path is extracted afresh.
    fn conclude(&mut self, mut parts: Vec<Part>, acc: Option<(NodeId, u32)>) -> Result<(), AccessError> {
        let ll = self.ll;
        let keep = match parts.first() {
            Some(&Part::Chain(top, len)) if len >= ll => Some((top, len)),
            _ => None,
        };
        let Some((top, len)) = keep else {
            self.fold(parts, acc)?;
            return self.rebuild(Slot::root(), PASSES);
        };
        let u = len.min(3 * ll);
        let f = &mut self.forest;
        let mut last = top;
        for _ in 1..u {
            f.visit(last);
            last = [Side::Left, Side::Right].into_iter().find_map(|s| f.inner_child(last, s)).unwrap();
        }
        f.visit(last);
        if len > u {
            let rest = [Side::Left, Side::Right].into_iter().find_map(|s| f.inner_child(last, s)).unwrap();
            f.visit(rest);
            f.set_mark(rest, true);
            parts[0] = Part::Chain(rest, len - u);
        } else {
            parts.remove(0);
        }
        let bottom = self.fold(parts, acc)?;
        let f = &mut self.forest;
        let side = bottom.map(|b| {
            f.visit(b);
            f.set_mark(b, false);
            f.side_of(b).unwrap()
        });
        let ext = (side.is_some() && u < 2 * ll).then(|| Extraction::new(ll));
        self.stats.launches += ext.is_some() as u64;
        self.reps.insert(top, Rep { len: u, last, bottom: side, ext, owed: 0 });
        Ok(())
    }

    /// Concatenate `parts` (top-down) onto the tree `acc` hanging below the
    /// last of them. Returns the root of the result.
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
        let ll = self.ll;
        let mut stack = vec![f.root().ok_or("empty")?];
        let mut seen = 0;
        while let Some(root) = stack.pop() {
            seen += 1;
            let rep = self.reps.get(&root).ok_or_else(|| format!("no state at {root}"))?;
            let mut cur = root;
            for _ in 1..rep.len {
                cur = [Side::Left, Side::Right]
                    .into_iter()
                    .find_map(|s| f.inner_child(cur, s))
                    .ok_or_else(|| format!("top path at {root} shorter than {}", rep.len))?;
            }
            if cur != rep.last {
                return Err(format!("top path at {root} does not end at its last node"));
            }
            let has_bottom = rep.bottom.is_some_and(|s| f.inner_child(rep.last, s).is_some());
            if rep.ext.is_none() && has_bottom != rep.bottom.is_some() {
                return Err(format!("stale bottom side at {root}"));
            }
            if rep.len > 3 * ll {
                return Err(format!("top path at {root} too long: {}", rep.len));
            }
            if has_bottom && (rep.len < ll || (rep.ext.is_none() && rep.len < 2 * ll)) {
                return Err(format!("top path at {root} too short: {}", rep.len));
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
        if self.reps.len() != seen {
            return Err("stale representation state".into());
        }
        Ok(())
    }
}

fn push_chain(parts: &mut Vec<Part>, top: NodeId, k: u32, merged: bool) {
    match parts.last_mut() {
        Some(Part::Chain(_, len)) if merged => *len += k,
        _ => parts.push(Part::Chain(top, k)),
    }
}

impl CompetitiveBst for HybridTree {
    fn name(&self) -> &'static str {
        "hybrid"
    }

    fn len(&self) -> usize {
        self.keys.len()
    }

    fn mode(&self) -> Mode {
        Mode::Relaxed
    }

    fn forest(&self) -> &Forest {
        &self.forest
    }

    fn access(&mut self, x: Key) -> Result<AccessTrace, AccessError> {
        if self.keys.binary_search(&x).is_err() {
            return Err(AccessError::UnknownKey(x));
        }
        self.stats.accesses += 1;
        self.forest.begin_access(Mode::Relaxed);
        let r = self.search(x);
        let trace = self.forest.end_access();
        r.map(|_| trace)
    }
}

#[cfg(test)]
#[path = "hybrid_tree_tests.rs"]
mod tests;
