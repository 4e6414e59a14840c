//! Node arena, access cursor, rotation primitive and cost metering.
//!
//! Every structure in this crate lives in a [`Forest`]: a single arena of
//! [`NodeRecord`]s linked by integer handles. During an access the forest
//! behaves like a pointer machine in the BST model: one cursor starts at the
//! root and moves only between adjacent nodes, every write (rotation, mark
//! flip, colour, aux word) happens at the node under the cursor, and the cost
//! of the access is the number of nodes the cursor touched.
//!
//! The [`AccessTrace`] produced by an access can be replayed against the
//! pre-access tree by [`verify_compliance`].

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

pub type Key = i64;

/// Number of machine words of process state a node may carry.
pub const AUX_WORDS: usize = 4;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Color {
    Red,
    Black,
}

/// Child side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    #[inline]
    pub fn flip(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Cursor move direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dir {
    Parent,
    Left,
    Right,
}

impl Dir {
    fn as_str(self) -> &'static str {
        match self {
            Dir::Parent => "parent",
            Dir::Left => "left",
            Dir::Right => "right",
        }
    }
}

impl From<Side> for Dir {
    fn from(s: Side) -> Dir {
        match s {
            Side::Left => Dir::Left,
            Side::Right => Dir::Right,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Strict,
    Relaxed,
}

#[derive(Clone, Debug)]
pub struct NodeRecord {
    pub key: Key,
    pub left: Option<NodeId>,
    pub right: Option<NodeId>,
    pub parent: Option<NodeId>,
    pub color: Color,
    /// Root of an auxiliary tree / path representation.
    pub marked: bool,
    /// Depth in the reference tree (or push height for the stack).
    pub depth_p: u32,
    /// Min / max of `depth_p` over the subtree, not crossing marked nodes.
    pub min_depth: u32,
    pub max_depth: u32,
    pub aux: [u64; AUX_WORDS],
}

impl NodeRecord {
    fn new(key: Key, depth_p: u32) -> Self {
        NodeRecord {
            key,
            left: None,
            right: None,
            parent: None,
            color: Color::Black,
            marked: false,
            depth_p,
            min_depth: depth_p,
            max_depth: depth_p,
            aux: [0; AUX_WORDS],
        }
    }

    #[inline]
    pub fn child(&self, side: Side) -> Option<NodeId> {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("no {dir} neighbour at node {at}")]
    NoNeighbour { at: NodeId, dir: &'static str },
    #[error("cannot rotate node {0}: it has no parent")]
    RotateRoot(NodeId),
    #[error("cannot rotate marked node {0} above its parent")]
    RotateMarked(NodeId),
    #[error("aux slot {slot} exceeds the {AUX_WORDS}-word budget at node {node}")]
    AuxOverflow { node: NodeId, slot: usize },
    #[error("no access in progress")]
    NoAccess,
}

/// Link snapshot used for replay.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Links {
    pub parent: Option<NodeId>,
    pub left: Option<NodeId>,
    pub right: Option<NodeId>,
    pub marked: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceEvent {
    /// `M <dir>`
    Move(Dir),
    /// `J <handle>`: reposition without following a link (extra pointer).
    Jump(NodeId),
    /// `R <handle> <depth>`: rotation of the cursor node above its parent;
    /// depth is measured from the nearest marked ancestor after the rotation.
    Rotate { node: NodeId, depth: u32 },
    /// `K <handle>`
    Mark(NodeId),
    /// `O <handle> <slot>`
    AuxOverflow { node: NodeId, slot: usize },
}

/// Metered record of one access.
#[derive(Clone, Debug)]
pub struct AccessTrace {
    pub mode: Mode,
    pub start: Option<NodeId>,
    pub events: Vec<TraceEvent>,
    pub touches: u64,
    pub extra_pointer_uses: u64,
    /// Pre-access links of every node whose links changed.
    pub undo: Vec<(NodeId, Links)>,
}

impl AccessTrace {
    fn new(mode: Mode, start: Option<NodeId>) -> Self {
        AccessTrace {
            mode,
            start,
            events: Vec::new(),
            touches: u64::from(start.is_some()),
            extra_pointer_uses: 0,
            undo: Vec::new(),
        }
    }

    /// Access cost: number of touched-node events (moves + jumps + 1).
    pub fn cost(&self) -> u64 {
        self.touches
    }

    pub fn rotations(&self) -> impl Iterator<Item = (NodeId, u32)> + '_ {
        self.events.iter().filter_map(|e| match *e {
            TraceEvent::Rotate { node, depth } => Some((node, depth)),
            _ => None,
        })
    }

    pub fn rotation_count(&self) -> usize {
        self.rotations().count()
    }

    pub fn move_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Move(_) | TraceEvent::Jump(_)))
            .count()
    }

    /// One line per event in the `M`/`J`/`R`/`K`/`O` text format.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            match e {
                TraceEvent::Move(d) => writeln!(out, "M {}", d.as_str()),
                TraceEvent::Jump(h) => writeln!(out, "J {h}"),
                TraceEvent::Rotate { node, depth } => writeln!(out, "R {node} {depth}"),
                TraceEvent::Mark(h) => writeln!(out, "K {h}"),
                TraceEvent::AuxOverflow { node, slot } => writeln!(out, "O {node} {slot}"),
            }
            .unwrap();
        }
        out
    }
}

/// Parse a trace dump back into events.
pub fn parse_trace_dump(text: &str) -> Result<Vec<TraceEvent>, String> {
    let mut events = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let tag = parts.next().unwrap();
        let mut num = |what: &str| -> Result<u32, String> {
            parts
                .next()
                .ok_or_else(|| format!("line {}: missing {what}", lineno + 1))?
                .parse::<u32>()
                .map_err(|e| format!("line {}: {e}", lineno + 1))
        };
        let ev = match tag {
            "M" => {
                let d = line[1..].trim();
                match d {
                    "parent" => TraceEvent::Move(Dir::Parent),
                    "left" => TraceEvent::Move(Dir::Left),
                    "right" => TraceEvent::Move(Dir::Right),
                    _ => return Err(format!("line {}: bad direction {d:?}", lineno + 1)),
                }
            }
            "J" => TraceEvent::Jump(NodeId(num("handle")?)),
            "R" => {
                let node = NodeId(num("handle")?);
                let depth = num("depth")?;
                TraceEvent::Rotate { node, depth }
            }
            "K" => TraceEvent::Mark(NodeId(num("handle")?)),
            "O" => {
                let node = NodeId(num("handle")?);
                let slot = num("slot")? as usize;
                TraceEvent::AuxOverflow { node, slot }
            }
            _ => return Err(format!("line {}: unknown tag {tag:?}", lineno + 1)),
        };
        events.push(ev);
    }
    Ok(events)
}

/// Node arena plus the single access cursor.
#[derive(Clone)]
pub struct Forest {
    nodes: Vec<NodeRecord>,
    root: Option<NodeId>,
    cursor: Option<NodeId>,
    trace: Option<AccessTrace>,
    epoch: u32,
    touched: Vec<u32>,
    undo_stamp: Vec<u32>,
    route_stamp: Vec<(u32, u8)>,
    route_epoch: u32,
    free: Vec<NodeId>,
    rotations: u64,
    /// Deepest rotation seen since the probe was started.
    probe: Option<u32>,
}

impl Default for Forest {
    fn default() -> Self {
        Self::new()
    }
}

impl Forest {
    pub fn new() -> Self {
        Forest {
            nodes: Vec::new(),
            root: None,
            cursor: None,
            trace: None,
            epoch: 1,
            touched: Vec::new(),
            undo_stamp: Vec::new(),
            route_stamp: Vec::new(),
            route_epoch: 0,
            free: Vec::new(),
            rotations: 0,
            probe: None,
        }
    }

    // ----- raw (unmetered) construction and reads -----

    pub fn add_node(&mut self, key: Key, depth_p: u32) -> NodeId {
        if let Some(id) = self.free.pop() {
            self.nodes[id.index()] = NodeRecord::new(key, depth_p);
            return id;
        }
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(NodeRecord::new(key, depth_p));
        self.touched.push(0);
        self.undo_stamp.push(0);
        self.route_stamp.push((0, 0));
        id
    }

    /// Return a detached node to the free list.
    pub fn release(&mut self, id: NodeId) {
        self.free.push(id);
    }

    /// Rotations performed on this forest so far, metered or not.
    pub fn rotation_counter(&self) -> u64 {
        self.rotations
    }

    /// Start recording the largest rotation depth (measured from the nearest
    /// marked ancestor, as in traces).
    pub fn start_probe(&mut self) {
        self.probe = Some(0);
    }

    pub fn take_probe(&mut self) -> u32 {
        self.probe.take().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len() - self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn node(&self, id: NodeId) -> &NodeRecord {
        &self.nodes[id.index()]
    }

    #[inline]
    pub fn key(&self, id: NodeId) -> Key {
        self.nodes[id.index()].key
    }
    #[inline]
    pub fn left(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.index()].left
    }
    #[inline]
    pub fn right(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.index()].right
    }
    #[inline]
    pub fn child(&self, id: NodeId, side: Side) -> Option<NodeId> {
        self.nodes[id.index()].child(side)
    }
    #[inline]
    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.index()].parent
    }
    #[inline]
    pub fn color(&self, id: NodeId) -> Color {
        self.nodes[id.index()].color
    }
    #[inline]
    pub fn is_marked(&self, id: NodeId) -> bool {
        self.nodes[id.index()].marked
    }
    #[inline]
    pub fn depth_p(&self, id: NodeId) -> u32 {
        self.nodes[id.index()].depth_p
    }
    #[inline]
    pub fn aux(&self, id: NodeId, slot: usize) -> u64 {
        self.nodes[id.index()].aux[slot]
    }

    /// Non-marked child on `side`; marked children are roots of other trees.
    #[inline]
    pub fn inner_child(&self, id: NodeId, side: Side) -> Option<NodeId> {
        self.child(id, side).filter(|&c| !self.is_marked(c))
    }

    /// Which side of its parent `id` hangs on.
    pub fn side_of(&self, id: NodeId) -> Option<Side> {
        let p = self.parent(id)?;
        if self.left(p) == Some(id) {
            Some(Side::Left)
        } else {
            Some(Side::Right)
        }
    }

    pub fn root(&self) -> Option<NodeId> {
        self.root
    }

    pub fn set_root(&mut self, root: Option<NodeId>) {
        self.root = root;
        if let Some(r) = root {
            self.nodes[r.index()].parent = None;
        }
    }

    pub fn raw_set_child(&mut self, p: NodeId, side: Side, c: Option<NodeId>) {
        match side {
            Side::Left => self.nodes[p.index()].left = c,
            Side::Right => self.nodes[p.index()].right = c,
        }
        if let Some(c) = c {
            self.nodes[c.index()].parent = Some(p);
        }
    }

    pub fn raw_set_color(&mut self, id: NodeId, c: Color) {
        self.nodes[id.index()].color = c;
    }

    pub fn raw_set_mark(&mut self, id: NodeId, m: bool) {
        self.nodes[id.index()].marked = m;
    }

    pub fn raw_set_aux(&mut self, id: NodeId, slot: usize, v: u64) {
        self.nodes[id.index()].aux[slot] = v;
    }

    /// Recompute min/max depth of `id` from its unmarked children.
    pub fn recompute_aug(&mut self, id: NodeId) {
        let n = &self.nodes[id.index()];
        let mut lo = n.depth_p;
        let mut hi = n.depth_p;
        for c in [n.left, n.right].into_iter().flatten() {
            let cn = &self.nodes[c.index()];
            if !cn.marked {
                lo = lo.min(cn.min_depth);
                hi = hi.max(cn.max_depth);
            }
        }
        let n = &mut self.nodes[id.index()];
        n.min_depth = lo;
        n.max_depth = hi;
    }

    /// Recompute augmentation for a whole subtree in post-order (unmetered).
    pub fn recompute_aug_subtree(&mut self, id: NodeId) {
        let mut order = Vec::new();
        let mut stack = vec![id];
        while let Some(h) = stack.pop() {
            order.push(h);
            for c in [self.left(h), self.right(h)].into_iter().flatten() {
                if !self.is_marked(c) {
                    stack.push(c);
                }
            }
        }
        for &h in order.iter().rev() {
            self.recompute_aug(h);
        }
    }

    /// Depth of `id` from the global root.
    pub fn depth(&self, id: NodeId) -> u32 {
        let mut d = 0;
        let mut cur = id;
        while let Some(p) = self.parent(cur) {
            d += 1;
            cur = p;
        }
        d
    }

    /// Distance from `id` up to its nearest marked ancestor-or-self.
    pub fn depth_in_aux(&self, id: NodeId) -> u32 {
        let mut d = 0;
        let mut cur = id;
        while !self.is_marked(cur) {
            match self.parent(cur) {
                Some(p) => {
                    d += 1;
                    cur = p;
                }
                None => break,
            }
        }
        d
    }

    /// Nearest marked ancestor-or-self.
    pub fn aux_root_of(&self, id: NodeId) -> NodeId {
        let mut cur = id;
        while !self.is_marked(cur) {
            match self.parent(cur) {
                Some(p) => cur = p,
                None => break,
            }
        }
        cur
    }

    /// In-order keys of the whole forest tree (unmetered).
    pub fn inorder_keys(&self) -> Vec<Key> {
        self.root.map(|r| self.subtree_keys(r, false)).unwrap_or_default()
    }

    /// In-order node handles of a subtree; if `stop_at_marks`, marked
    /// descendants (other aux trees) are skipped.
    pub fn subtree_nodes(&self, root: NodeId, stop_at_marks: bool) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = Vec::new();
        let mut cur = Some(root);
        let skip = |f: &Forest, c: Option<NodeId>| -> Option<NodeId> {
            c.filter(|&c| !(stop_at_marks && f.is_marked(c)))
        };
        loop {
            while let Some(c) = cur {
                stack.push(c);
                cur = skip(self, self.left(c));
            }
            match stack.pop() {
                None => break,
                Some(c) => {
                    out.push(c);
                    cur = skip(self, self.right(c));
                }
            }
        }
        out
    }

    pub fn subtree_keys(&self, root: NodeId, stop_at_marks: bool) -> Vec<Key> {
        self.subtree_nodes(root, stop_at_marks)
            .into_iter()
            .map(|h| self.key(h))
            .collect()
    }

    /// Links of every reachable node are mutually consistent.
    pub fn links_consistent(&self) -> bool {
        let Some(r) = self.root else { return true };
        if self.parent(r).is_some() {
            return false;
        }
        let mut stack = vec![r];
        while let Some(h) = stack.pop() {
            for c in [self.left(h), self.right(h)].into_iter().flatten() {
                if self.parent(c) != Some(h) {
                    return false;
                }
                stack.push(c);
            }
        }
        true
    }

    fn links(&self, id: NodeId) -> Links {
        let n = &self.nodes[id.index()];
        Links {
            parent: n.parent,
            left: n.left,
            right: n.right,
            marked: n.marked,
        }
    }

    // ----- access lifecycle -----

    /// Start a metered access; the cursor is placed on the root.
    pub fn begin_access(&mut self, mode: Mode) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.touched.iter_mut().for_each(|t| *t = 0);
            self.undo_stamp.iter_mut().for_each(|t| *t = 0);
            self.epoch = 1;
        }
        self.cursor = self.root;
        if let Some(r) = self.root {
            self.touched[r.index()] = self.epoch;
        }
        self.trace = Some(AccessTrace::new(mode, self.root));
    }

    pub fn end_access(&mut self) -> AccessTrace {
        self.trace.take().expect("end_access without begin_access")
    }

    pub fn in_access(&self) -> bool {
        self.trace.is_some()
    }

    pub fn mode(&self) -> Option<Mode> {
        self.trace.as_ref().map(|t| t.mode)
    }

    pub fn cursor(&self) -> Option<NodeId> {
        self.cursor
    }

    /// Touch count so far in the current access.
    pub fn touches(&self) -> u64 {
        self.trace.as_ref().map_or(0, |t| t.touches)
    }

    pub fn is_touched(&self, id: NodeId) -> bool {
        self.touched[id.index()] == self.epoch
    }

    #[inline]
    fn log(&mut self, e: TraceEvent) {
        if let Some(t) = self.trace.as_mut() {
            t.events.push(e);
        }
    }

    #[inline]
    fn touch(&mut self, id: NodeId) {
        self.touched[id.index()] = self.epoch;
        if let Some(t) = self.trace.as_mut() {
            t.touches += 1;
        }
    }

    fn save_undo(&mut self, id: NodeId) {
        if self.undo_stamp[id.index()] == self.epoch {
            return;
        }
        let l = self.links(id);
        if let Some(t) = self.trace.as_mut() {
            self.undo_stamp[id.index()] = self.epoch;
            t.undo.push((id, l));
        }
    }

    /// Move the cursor to an adjacent node.
    pub fn move_to(&mut self, dir: Dir) -> Result<NodeId, ModelError> {
        let at = self.cursor.ok_or(ModelError::NoAccess)?;
        let next = match dir {
            Dir::Parent => self.parent(at),
            Dir::Left => self.left(at),
            Dir::Right => self.right(at),
        }
        .ok_or(ModelError::NoNeighbour { at, dir: dir.as_str() })?;
        self.cursor = Some(next);
        self.log(TraceEvent::Move(dir));
        self.touch(next);
        Ok(next)
    }

    /// Walk the cursor to `target` along tree links, one adjacent move at a
    /// time. Outside an access the cursor is simply placed there.
    pub fn visit(&mut self, target: NodeId) {
        if self.trace.is_none() {
            self.cursor = Some(target);
            return;
        }
        let Some(start) = self.cursor else {
            self.cursor = Some(target);
            return;
        };
        if start == target {
            return;
        }
        // Bidirectional climb to the lowest common ancestor.
        self.route_epoch = self.route_epoch.wrapping_add(1);
        if self.route_epoch == 0 {
            self.route_stamp.iter_mut().for_each(|s| *s = (0, 0));
            self.route_epoch = 1;
        }
        let ep = self.route_epoch;
        let mut a = Some(start);
        let mut b = Some(target);
        let mut b_chain: Vec<NodeId> = Vec::new();
        self.route_stamp[start.index()] = (ep, 1);
        self.route_stamp[target.index()] = (ep, 2);
        b_chain.push(target);
        let meet = loop {
            if let Some(x) = a {
                let s = self.route_stamp[x.index()];
                if s.0 == ep && s.1 == 2 {
                    break x;
                }
            }
            if let Some(y) = b {
                let s = self.route_stamp[y.index()];
                if s.0 == ep && s.1 == 1 {
                    break y;
                }
            }
            if let Some(x) = a {
                a = self.parent(x);
                if let Some(px) = a {
                    let s = self.route_stamp[px.index()];
                    if s.0 == ep && s.1 == 2 {
                        break px;
                    }
                    self.route_stamp[px.index()] = (ep, 1);
                }
            }
            if let Some(y) = b {
                b = self.parent(y);
                if let Some(py) = b {
                    b_chain.push(py);
                    let s = self.route_stamp[py.index()];
                    if s.0 == ep && s.1 == 1 {
                        break py;
                    }
                    self.route_stamp[py.index()] = (ep, 2);
                }
            }
            debug_assert!(a.is_some() || b.is_some(), "visit: nodes in different trees");
        };
        // climb from start to meet
        while self.cursor != Some(meet) {
            self.move_to(Dir::Parent).expect("climb");
        }
        // descend along the target chain
        let pos = b_chain.iter().position(|&h| h == meet).expect("meet on target chain");
        for i in (0..pos).rev() {
            let next = b_chain[i];
            let cur = self.cursor.unwrap();
            let dir = if self.left(cur) == Some(next) {
                Dir::Left
            } else {
                Dir::Right
            };
            self.move_to(dir).expect("descend");
        }
        debug_assert_eq!(self.cursor, Some(target));
    }

    /// Reposition through an extra pointer (not a BST-model move).
    pub fn jump(&mut self, target: NodeId) {
        if self.cursor == Some(target) {
            return;
        }
        self.cursor = Some(target);
        if self.trace.is_some() {
            self.log(TraceEvent::Jump(target));
            self.touch(target);
            self.trace.as_mut().unwrap().extra_pointer_uses += 1;
        }
    }

    /// Rotate `x` above its parent. The cursor is walked to `x` first and the
    /// parent is touched if it was not already. If the parent carried the
    /// mark of its auxiliary tree the mark moves to `x`.
    pub fn rotate_up(&mut self, x: NodeId) -> Result<(), ModelError> {
        let p = self.parent(x).ok_or(ModelError::RotateRoot(x))?;
        if self.is_marked(x) {
            return Err(ModelError::RotateMarked(x));
        }
        self.visit(x);
        if self.trace.is_some() && !self.is_touched(p) {
            self.move_to(Dir::Parent)?;
            let d = if self.left(p) == Some(x) { Dir::Left } else { Dir::Right };
            self.move_to(d)?;
        }
        let g = self.parent(p);
        let x_is_left = self.left(p) == Some(x);
        let mid = if x_is_left { self.right(x) } else { self.left(x) };
        self.save_undo(x);
        self.save_undo(p);
        if let Some(m) = mid {
            self.save_undo(m);
        }
        if let Some(g) = g {
            self.save_undo(g);
        }
        if x_is_left {
            self.raw_set_child(p, Side::Left, mid);
            self.raw_set_child(x, Side::Right, Some(p));
        } else {
            self.raw_set_child(p, Side::Right, mid);
            self.raw_set_child(x, Side::Left, Some(p));
        }
        match g {
            Some(g) => {
                let side = if self.left(g) == Some(p) { Side::Left } else { Side::Right };
                self.raw_set_child(g, side, Some(x));
            }
            None => {
                self.root = Some(x);
                self.nodes[x.index()].parent = None;
            }
        }
        self.rotations += 1;
        let moved_mark = self.is_marked(p);
        if moved_mark {
            self.nodes[p.index()].marked = false;
            self.nodes[x.index()].marked = true;
        }
        self.recompute_aug(p);
        self.recompute_aug(x);
        if let Some(p) = self.probe {
            self.probe = Some(p.max(self.depth_in_aux(x)));
        }
        if self.trace.is_some() {
            let depth = self.depth_in_aux(x);
            self.log(TraceEvent::Rotate { node: x, depth });
            if moved_mark {
                self.log(TraceEvent::Mark(p));
                self.log(TraceEvent::Mark(x));
            }
        }
        Ok(())
    }

    /// Set or clear the mark bit at `id` (free, but the node must be touched).
    pub fn set_mark(&mut self, id: NodeId, marked: bool) {
        if self.is_marked(id) == marked {
            return;
        }
        self.visit(id);
        self.save_undo(id);
        self.nodes[id.index()].marked = marked;
        self.log(TraceEvent::Mark(id));
    }

    pub fn set_color(&mut self, id: NodeId, c: Color) {
        if self.color(id) == c {
            return;
        }
        self.visit(id);
        self.nodes[id.index()].color = c;
    }

    /// Refresh the augmentation of `id` (a field write at `id`).
    pub fn refresh_aug(&mut self, id: NodeId) {
        self.visit(id);
        self.recompute_aug(id);
    }

    pub fn write_aux(&mut self, id: NodeId, slot: usize, value: u64) -> Result<(), ModelError> {
        if slot >= AUX_WORDS {
            self.log(TraceEvent::AuxOverflow { node: id, slot });
            return Err(ModelError::AuxOverflow { node: id, slot });
        }
        self.visit(id);
        self.nodes[id.index()].aux[slot] = value;
        Ok(())
    }
}

// ----- compliance -----

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// A move toward a neighbour that does not exist in the replayed tree.
    NonAdjacentMove { event: usize },
    /// Extra-pointer reposition used in strict mode.
    ExtraPointer { event: usize },
    /// Rotation not at the cursor, or whose parent was never touched.
    RotationAtUntouched { event: usize },
    /// Mark flip at a node the cursor never touched.
    MarkAtUntouched { event: usize },
    AuxOverflow { event: usize },
    /// Reported touches differ from moves + 1.
    CostMismatch { reported: u64, replayed: u64 },
    /// Replaying the rotations does not reproduce the live tree.
    ReplayMismatch { node: NodeId },
}

#[derive(Clone, Debug, Default)]
pub struct ComplianceReport {
    pub violations: Vec<Violation>,
    pub extra_pointer_uses: u64,
    pub moves: u64,
    pub rotations: u64,
}

impl ComplianceReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Replay `trace` from the pre-access tree (reconstructed from the trace's
/// undo log and the live `forest`) and report every model violation.
///
/// `forest` must be in the state right after the traced access.
pub fn verify_compliance(forest: &Forest, trace: &AccessTrace, mode: Mode) -> ComplianceReport {
    let pre: HashMap<NodeId, Links> = trace.undo.iter().copied().collect();
    let mut view: HashMap<NodeId, Links> = HashMap::new();
    let get = |view: &mut HashMap<NodeId, Links>, id: NodeId| -> Links {
        *view
            .entry(id)
            .or_insert_with(|| pre.get(&id).copied().unwrap_or_else(|| forest.links(id)))
    };
    let mut report = ComplianceReport::default();
    let mut touched: std::collections::HashSet<NodeId> = Default::default();
    let mut cursor = trace.start;
    if let Some(c) = cursor {
        touched.insert(c);
    }
    let mut replayed_touches = u64::from(cursor.is_some());
    for (i, e) in trace.events.iter().enumerate() {
        match *e {
            TraceEvent::Move(d) => {
                report.moves += 1;
                let Some(c) = cursor else {
                    report.violations.push(Violation::NonAdjacentMove { event: i });
                    continue;
                };
                let l = get(&mut view, c);
                let next = match d {
                    Dir::Parent => l.parent,
                    Dir::Left => l.left,
                    Dir::Right => l.right,
                };
                match next {
                    Some(n) => {
                        cursor = Some(n);
                        touched.insert(n);
                        replayed_touches += 1;
                    }
                    None => report.violations.push(Violation::NonAdjacentMove { event: i }),
                }
            }
            TraceEvent::Jump(h) => {
                report.extra_pointer_uses += 1;
                replayed_touches += 1;
                let adjacent = cursor.is_some_and(|c| {
                    let l = get(&mut view, c);
                    l.parent == Some(h) || l.left == Some(h) || l.right == Some(h)
                });
                if mode == Mode::Strict {
                    if adjacent {
                        report.violations.push(Violation::ExtraPointer { event: i });
                    } else {
                        report.violations.push(Violation::NonAdjacentMove { event: i });
                    }
                }
                cursor = Some(h);
                touched.insert(h);
            }
            TraceEvent::Rotate { node, .. } => {
                report.rotations += 1;
                let lx = get(&mut view, node);
                let ok = cursor == Some(node) && lx.parent.is_some_and(|p| touched.contains(&p));
                if !ok {
                    report.violations.push(Violation::RotationAtUntouched { event: i });
                }
                let Some(p) = lx.parent else { continue };
                let lp = get(&mut view, p);
                let x_left = lp.left == Some(node);
                let mid = if x_left { lx.right } else { lx.left };
                let g = lp.parent;
                let mut nx = lx;
                let mut np = lp;
                if x_left {
                    np.left = mid;
                    nx.right = Some(p);
                } else {
                    np.right = mid;
                    nx.left = Some(p);
                }
                np.parent = Some(node);
                nx.parent = g;
                view.insert(node, nx);
                view.insert(p, np);
                if let Some(m) = mid {
                    let mut lm = get(&mut view, m);
                    lm.parent = Some(p);
                    view.insert(m, lm);
                }
                if let Some(g) = g {
                    let mut lg = get(&mut view, g);
                    if lg.left == Some(p) {
                        lg.left = Some(node);
                    } else {
                        lg.right = Some(node);
                    }
                    view.insert(g, lg);
                }
            }
            TraceEvent::Mark(h) => {
                if !touched.contains(&h) {
                    report.violations.push(Violation::MarkAtUntouched { event: i });
                }
                let mut l = get(&mut view, h);
                l.marked = !l.marked;
                view.insert(h, l);
            }
            TraceEvent::AuxOverflow { .. } => {
                report.violations.push(Violation::AuxOverflow { event: i });
            }
        }
    }
    if replayed_touches != trace.touches {
        report.violations.push(Violation::CostMismatch {
            reported: trace.touches,
            replayed: replayed_touches,
        });
    }
    for &(id, _) in &trace.undo {
        let replayed = view.get(&id).copied().unwrap_or_else(|| pre[&id]);
        if replayed != forest.links(id) {
            report.violations.push(Violation::ReplayMismatch { node: id });
        }
    }
    report
}
