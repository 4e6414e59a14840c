//! A stack with O(1) worst-case push and pop and O(min(k, log n))
//! worst-case multipop.
//!
//! The most recent elements live in a list `L`; everything older sits in a
//! red-black tree `T` keyed by push height. Batches of about log n elements
//! move between the two in the background: a contraction moves the oldest
//! part of `L` into `T` when `L` grows long, an extraction moves the top of
//! `T` back into `L` when it runs short. Work is counted in steps, each a
//! constant amount of pointer work.

use std::collections::VecDeque;

use thiserror::Error;

use crate::aux_redblack::{JoinProcess, Slot, SplitProcess};
use crate::bst_model::{Color, Forest, Key, NodeId, Side};
use crate::competitive::ceil_log2;

/// Transfer steps run per push or pop.
pub const TRANSFER_SPEED: u64 = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StackError {
    #[error("pop from an empty stack")]
    Empty,
}

#[derive(Clone, Debug, Default)]
pub struct StackStats {
    pub contractions: u64,
    pub extractions: u64,
    /// Pops that found `L` empty and had to finish a transfer at once.
    pub forced: u64,
    /// Largest number of contractions a multipop needed to empty `L`.
    pub max_drain_rounds: u32,
    /// Most steps any single transfer took, per kind (contract, extract).
    pub max_transfer_steps: [u64; 2],
}

/// Rounds of left rotations down a right vine, turning it into a balanced
/// red-black tree.
#[derive(Clone, Debug)]
struct Compress {
    rounds: Vec<(usize, bool)>,
    left: usize,
    red: bool,
    cur: Option<NodeId>,
    height: u32,
}

impl Compress {
    fn new(k: usize) -> Self {
        let perfect = (1usize << (usize::BITS - (k + 1).leading_zeros() - 1)) - 1;
        let mut rounds = vec![(k - perfect, true)];
        let mut m = perfect;
        while m > 1 {
            m /= 2;
            rounds.push((m, false));
        }
        rounds.reverse();
        Compress { rounds, left: 0, red: false, cur: None, height: perfect.trailing_ones() }
    }

    /// One rotation; false once the tree is balanced.
    fn step(&mut self, f: &mut Forest, slot: Slot) -> bool {
        while self.left == 0 || self.cur.is_none() {
            let Some((count, red)) = self.rounds.pop() else {
                return false;
            };
            self.left = count;
            self.red = red;
            self.cur = slot.get(f);
        }
        let c = self.cur.unwrap();
        let r = f.inner_child(c, Side::Right).expect("vine continues");
        f.rotate_up(r).unwrap();
        if self.red {
            f.set_color(c, Color::Red);
        }
        self.cur = f.inner_child(r, Side::Right);
        self.left -= 1;
        true
    }
}

#[derive(Clone, Debug)]
enum Transfer {
    Contract { total: usize, taken: usize, mid: Option<NodeId>, tail: Option<NodeId>, phase: ContractPhase },
    Extract { phase: ExtractPhase },
}

#[derive(Clone, Debug)]
enum ContractPhase {
    Take,
    Compress(Compress),
    Join(JoinProcess),
}

#[derive(Clone, Debug)]
enum ExtractPhase {
    Split(SplitProcess),
    /// Reverse in-order walk over the detached top part of `T`; `low` is
    /// its smallest element, emitted last.
    Collect { stack: Vec<NodeId>, cur: Option<NodeId>, low: Option<NodeId> },
}

pub struct HybridStack<T> {
    list: VecDeque<T>,
    forest: Forest,
    /// Fixed root: `T` hangs on its left, work in progress on its right.
    anchor: NodeId,
    values: Vec<Option<T>>,
    t_len: usize,
    t_height: u32,
    pending: Option<Transfer>,
    /// Steps spent on the pending transfer so far.
    spent: u64,
    steps: u64,
    pub stats: StackStats,
}

impl<T> Default for HybridStack<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> HybridStack<T> {
    pub fn new() -> Self {
        let mut forest = Forest::new();
        let anchor = forest.add_node(Key::MIN, 0);
        forest.set_root(Some(anchor));
        HybridStack {
            list: VecDeque::new(),
            forest,
            anchor,
            values: Vec::new(),
            t_len: 0,
            t_height: 0,
            pending: None,
            spent: 0,
            steps: 0,
            stats: StackStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.list.len() + self.t_len + self.in_flight()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total steps so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Sizes of the list and the tree (elements in transit excluded).
    pub fn parts(&self) -> (usize, usize) {
        (self.list.len(), self.t_len)
    }

    pub fn is_transferring(&self) -> bool {
        self.pending.is_some()
    }

    /// log n for the current size, at least 1.
    pub fn log_n(&self) -> usize {
        ceil_log2(self.len() as u64 + 1).max(1) as usize
    }

    fn in_flight(&self) -> usize {
        match &self.pending {
            Some(Transfer::Contract { taken, .. }) => *taken,
            _ => 0,
        }
    }

    fn t_slot(&self) -> Slot {
        Slot::child_of(self.anchor, Side::Left)
    }

    fn w_slot(&self) -> Slot {
        Slot::child_of(self.anchor, Side::Right)
    }

    pub fn push(&mut self, x: T) {
        self.steps += 1;
        self.list.push_front(x);
        self.tick();
    }

    pub fn pop(&mut self) -> Result<T, StackError> {
        self.steps += 1;
        if self.list.is_empty() {
            if self.pending.is_none() {
                return Err(StackError::Empty);
            }
            self.stats.forced += 1;
            self.finish_pending();
        }
        let x = self.list.pop_front().ok_or(StackError::Empty)?;
        self.tick();
        Ok(x)
    }

    /// Remove the top `min(k, len)` elements; they are returned most recent
    /// first. Collecting the returned values is not metered.
    pub fn multipop(&mut self, k: usize) -> Vec<T> {
        let lg = self.log_n();
        if k <= lg {
            return (0..k).map_while(|_| self.pop().ok()).collect();
        }
        self.steps += 1;
        self.finish_pending();
        let n = self.len();
        if k >= n {
            let mut out: Vec<T> = self.list.drain(..).collect();
            if let Some(r) = self.t_slot().get(&self.forest) {
                self.take_subtree(r, &mut out);
            }
            self.forest.raw_set_child(self.anchor, Side::Left, None);
            self.t_len = 0;
            self.t_height = 0;
            return out;
        }
        // move all of L into T
        let mut rounds = 0;
        while !self.list.is_empty() {
            let total = lg.min(self.list.len());
            self.start_contract(total);
            self.finish_pending();
            rounds += 1;
        }
        self.stats.max_drain_rounds = self.stats.max_drain_rounds.max(rounds);
        // cut T below the k-th highest element
        let h0 = self.t_len - k;
        let slot = self.t_slot();
        let mut split = SplitProcess::new(&self.forest, slot, h0 as Key).expect("tree holds h0");
        while !split.is_done() {
            split.step(&mut self.forest, slot).expect("split");
            self.steps += 1;
        }
        let x = split.split_node().unwrap();
        let (hl, _) = split.heights();
        let f = &mut self.forest;
        let rest = f.left(x);
        let top = f.right(x);
        f.raw_set_child(self.anchor, Side::Left, rest);
        self.steps += 1;
        self.t_len = h0;
        self.t_height = self.settle_root(rest, hl);
        let mut out = Vec::with_capacity(k);
        if let Some(top) = top {
            self.take_subtree(top, &mut out);
        }
        out.push(self.values[x.index()].take().unwrap());
        self.forest.release(x);
        for _ in 0..3 {
            if self.t_len == 0 {
                break;
            }
            self.start_extract();
            self.finish_pending();
        }
        out
    }

    /// Blacken a red tree root; returns the resulting height.
    fn settle_root(&mut self, root: Option<NodeId>, h: u32) -> u32 {
        match root {
            Some(r) if self.forest.color(r) == Color::Red => {
                self.forest.raw_set_color(r, Color::Black);
                h + 1
            }
            _ => h,
        }
    }

    /// Move every value below `root` into `out`, highest first (unmetered).
    fn take_subtree(&mut self, root: NodeId, out: &mut Vec<T>) {
        let mut stack = Vec::new();
        let mut cur = Some(root);
        while cur.is_some() || !stack.is_empty() {
            while let Some(c) = cur {
                stack.push(c);
                cur = self.forest.right(c);
            }
            let n = stack.pop().unwrap();
            out.push(self.values[n.index()].take().unwrap());
            cur = self.forest.left(n);
            self.forest.release(n);
        }
    }

    /// Background work after a push or pop, then launch a transfer if the
    /// list is out of range.
    fn tick(&mut self) {
        for _ in 0..TRANSFER_SPEED {
            if self.pending.is_none() {
                break;
            }
            self.step();
        }
        if self.pending.is_none() {
            let lg = self.log_n();
            if self.list.len() >= 4 * lg {
                self.start_contract(lg);
            } else if self.list.len() <= 2 * lg && self.t_len > 0 {
                self.start_extract();
            }
        }
    }

    fn start_contract(&mut self, total: usize) {
        self.stats.contractions += 1;
        self.pending = Some(Transfer::Contract { total, taken: 0, mid: None, tail: None, phase: ContractPhase::Take });
    }

    fn start_extract(&mut self) {
        self.stats.extractions += 1;
        let b = self.log_n().min(self.t_len);
        let phase = if b == self.t_len {
            // everything goes: walk the whole tree
            let root = self.t_slot().get(&self.forest);
            let f = &mut self.forest;
            f.raw_set_child(self.anchor, Side::Right, root);
            f.raw_set_child(self.anchor, Side::Left, None);
            ExtractPhase::Collect { stack: Vec::new(), cur: root, low: None }
        } else {
            let key = (self.t_len - b) as Key;
            ExtractPhase::Split(SplitProcess::new(&self.forest, self.t_slot(), key).expect("nonempty tree"))
        };
        self.pending = Some(Transfer::Extract { phase });
    }

    fn finish_pending(&mut self) {
        while self.pending.is_some() {
            self.step();
        }
    }

    /// One step of the pending transfer.
    fn step(&mut self) {
        self.steps += 1;
        self.spent += 1;
        let Some(mut tr) = self.pending.take() else { return };
        let kind = matches!(tr, Transfer::Extract { .. }) as usize;
        let done = match &mut tr {
            Transfer::Contract { total, taken, mid, tail, phase } => self.contract_step(*total, taken, mid, tail, phase),
            Transfer::Extract { phase, .. } => self.extract_step(phase),
        };
        if done {
            let m = &mut self.stats.max_transfer_steps[kind];
            *m = (*m).max(self.spent);
            self.spent = 0;
        } else {
            self.pending = Some(tr);
        }
    }

    fn contract_step(
        &mut self,
        total: usize,
        taken: &mut usize,
        mid: &mut Option<NodeId>,
        tail: &mut Option<NodeId>,
        phase: &mut ContractPhase,
    ) -> bool {
        match phase {
            ContractPhase::Take => {
                let v = self.list.pop_back().expect("list holds the batch");
                let h = self.t_len + *taken;
                let f = &mut self.forest;
                let node = f.add_node(h as Key, 0);
                f.raw_set_color(node, Color::Black);
                if self.values.len() <= node.index() {
                    self.values.resize_with(node.index() + 1, || None);
                }
                self.values[node.index()] = Some(v);
                if mid.is_none() {
                    *mid = Some(node);
                } else {
                    // grow the vine of the batch's remaining elements
                    f.raw_set_child(tail.unwrap_or(self.anchor), Side::Right, Some(node));
                    *tail = Some(node);
                }
                *taken += 1;
                if *taken == total {
                    *phase = ContractPhase::Compress(Compress::new(total - 1));
                }
                false
            }
            ContractPhase::Compress(c) => {
                let w = self.w_slot();
                if c.step(&mut self.forest, w) {
                    return false;
                }
                // hang T and the batch tree below the middle element
                let hs = c.height;
                let k = mid.unwrap();
                let f = &mut self.forest;
                let t = f.left(self.anchor);
                let s = f.right(self.anchor);
                f.raw_set_child(k, Side::Left, t);
                f.raw_set_child(k, Side::Right, s);
                f.raw_set_child(self.anchor, Side::Right, None);
                f.raw_set_child(self.anchor, Side::Left, Some(k));
                *phase = ContractPhase::Join(JoinProcess::new(f, k, self.t_height, hs));
                false
            }
            ContractPhase::Join(j) => match j.step(&mut self.forest) {
                Some((_, h)) => {
                    self.t_height = h;
                    self.t_len += total;
                    true
                }
                None => false,
            },
        }
    }

    fn extract_step(&mut self, phase: &mut ExtractPhase) -> bool {
        match phase {
            ExtractPhase::Split(sp) => {
                let slot = self.t_slot();
                if !sp.is_done() {
                    sp.step(&mut self.forest, slot).expect("split");
                    return false;
                }
                let x = sp.split_node().unwrap();
                let (hl, _) = sp.heights();
                let f = &mut self.forest;
                let rest = f.left(x);
                let top = f.right(x);
                f.raw_set_child(self.anchor, Side::Left, rest);
                f.raw_set_child(self.anchor, Side::Right, top);
                self.t_height = self.settle_root(rest, hl);
                *phase = ExtractPhase::Collect { stack: Vec::new(), cur: top, low: Some(x) };
                false
            }
            ExtractPhase::Collect { stack, cur, low } => {
                if let Some(c) = *cur {
                    stack.push(c);
                    *cur = self.forest.right(c);
                    return false;
                }
                let n = match stack.pop() {
                    Some(n) => {
                        *cur = self.forest.left(n);
                        n
                    }
                    None => match low.take() {
                        Some(x) => x,
                        None => {
                            self.forest.raw_set_child(self.anchor, Side::Right, None);
                            if self.t_len == 0 {
                                self.t_height = 0;
                            }
                            return true;
                        }
                    },
                };
                self.list.push_back(self.values[n.index()].take().unwrap());
                self.forest.release(n);
                self.t_len -= 1;
                false
            }
        }
    }

    /// Check the list/tree invariants between transfers (unmetered).
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.pending.is_some() {
            return Ok(());
        }
        let f = &self.forest;
        let root = self.t_slot().get(f);
        if let Some(r) = root {
            let keys = f.subtree_keys(r, false);
            if keys != (0..self.t_len as Key).collect::<Vec<_>>() {
                return Err(format!("tree holds {} keys out of order or count {}", keys.len(), self.t_len));
            }
            let h = crate::aux_redblack::rb_check(f, r)?;
            if h != self.t_height {
                return Err(format!("tree height {h}, recorded {}", self.t_height));
            }
        } else if self.t_len != 0 {
            return Err("tree is missing".into());
        }
        if self.t_len > 0 {
            let lg = self.log_n();
            if self.list.len() < lg || self.list.len() > 5 * lg {
                return Err(format!("list size {} outside [{lg}, {}]", self.list.len(), 5 * lg));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
#[path = "multipop_stack_tests.rs"]
mod tests;
