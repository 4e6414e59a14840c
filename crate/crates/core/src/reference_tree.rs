//! The static reference tree over the key set, its preferred children, and
//! the interleave lower bound.

use std::fmt::Write as _;

use thiserror::Error;

use crate::bst_model::Key;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReferenceError {
    #[error("key set is empty")]
    Empty,
    #[error("keys must be sorted and distinct")]
    Unsorted,
    #[error("key {0} is not in the key set")]
    UnknownKey(Key),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pref {
    Left,
    Right,
}

/// One preferred-child flip caused by an access: the old preferred path was
/// left at `key`, whose reference depth is the cut depth for consumers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Crossing {
    pub key: Key,
    pub depth: u32,
}

const NIL: u32 = u32::MAX;

/// Static minimum-height BST over the key set, with per-node preferred
/// child flags. Nodes are indexed by rank in the key set.
#[derive(Clone, Debug)]
pub struct ReferenceTree {
    keys: Vec<Key>,
    left: Vec<u32>,
    right: Vec<u32>,
    parent: Vec<u32>,
    depth: Vec<u32>,
    preferred: Vec<Pref>,
    root: u32,
}

fn opt(i: u32) -> Option<usize> {
    (i != NIL).then_some(i as usize)
}

impl ReferenceTree {
    /// Median-split tree; on even sizes the left subtree gets the extra node.
    /// All preferred flags start as `Left`.
    pub fn build(keys: &[Key]) -> Result<Self, ReferenceError> {
        if keys.is_empty() {
            return Err(ReferenceError::Empty);
        }
        if keys.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ReferenceError::Unsorted);
        }
        let n = keys.len();
        let mut t = ReferenceTree {
            keys: keys.to_vec(),
            left: vec![NIL; n],
            right: vec![NIL; n],
            parent: vec![NIL; n],
            depth: vec![0; n],
            preferred: vec![Pref::Left; n],
            root: 0,
        };
        // iterative to avoid deep recursion on large key sets
        let mut stack = vec![(0usize, n, NIL, false, 0u32)];
        while let Some((lo, hi, par, is_right, d)) = stack.pop() {
            if lo >= hi {
                continue;
            }
            let mid = lo + (hi - lo) / 2;
            t.depth[mid] = d;
            t.parent[mid] = par;
            if par == NIL {
                t.root = mid as u32;
            } else if is_right {
                t.right[par as usize] = mid as u32;
            } else {
                t.left[par as usize] = mid as u32;
            }
            stack.push((lo, mid, mid as u32, false, d + 1));
            stack.push((mid + 1, hi, mid as u32, true, d + 1));
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    pub fn root_key(&self) -> Key {
        self.keys[self.root as usize]
    }

    pub fn height(&self) -> u32 {
        *self.depth.iter().max().unwrap()
    }

    pub fn index_of(&self, key: Key) -> Result<usize, ReferenceError> {
        self.keys
            .binary_search(&key)
            .map_err(|_| ReferenceError::UnknownKey(key))
    }

    pub fn depth_of(&self, key: Key) -> Result<u32, ReferenceError> {
        Ok(self.depth[self.index_of(key)?])
    }

    pub fn left_key(&self, key: Key) -> Option<Key> {
        let i = self.index_of(key).ok()?;
        opt(self.left[i]).map(|j| self.keys[j])
    }

    pub fn right_key(&self, key: Key) -> Option<Key> {
        let i = self.index_of(key).ok()?;
        opt(self.right[i]).map(|j| self.keys[j])
    }

    pub fn parent_key(&self, key: Key) -> Option<Key> {
        let i = self.index_of(key).ok()?;
        opt(self.parent[i]).map(|j| self.keys[j])
    }

    pub fn preferred(&self, key: Key) -> Option<Pref> {
        self.index_of(key).ok().map(|i| self.preferred[i])
    }

    fn preferred_child(&self, i: usize) -> Option<usize> {
        match self.preferred[i] {
            Pref::Left => opt(self.left[i]),
            Pref::Right => opt(self.right[i]),
        }
    }

    /// Reset every flag to `Left`.
    pub fn reset(&mut self) {
        self.preferred.iter_mut().for_each(|p| *p = Pref::Left);
    }

    /// Update preferred flags for an access to `x` and report every flip,
    /// ordered from the root down.
    pub fn simulate_access(&mut self, x: Key) -> Result<Vec<Crossing>, ReferenceError> {
        let target = self.index_of(x)?;
        let mut out = Vec::new();
        let mut cur = self.root as usize;
        loop {
            let want = if cur == target || target < cur {
                Pref::Left
            } else {
                Pref::Right
            };
            if self.preferred[cur] != want {
                self.preferred[cur] = want;
                out.push(Crossing {
                    key: self.keys[cur],
                    depth: self.depth[cur],
                });
            }
            if cur == target {
                return Ok(out);
            }
            cur = match want {
                Pref::Left => self.left[cur] as usize,
                Pref::Right => self.right[cur] as usize,
            };
        }
    }

    /// Partition of the key set into preferred paths, each listed from its
    /// shallowest node down. Paths are listed in order of their top key.
    pub fn preferred_paths(&self) -> Vec<Vec<Key>> {
        let n = self.len();
        let mut is_top = vec![true; n];
        for i in 0..n {
            if let Some(c) = self.preferred_child(i) {
                is_top[c] = false;
            }
        }
        let mut out = Vec::new();
        for (i, &top) in is_top.iter().enumerate() {
            if !top {
                continue;
            }
            let mut path = vec![self.keys[i]];
            let mut cur = i;
            while let Some(c) = self.preferred_child(cur) {
                path.push(self.keys[c]);
                cur = c;
            }
            out.push(path);
        }
        out
    }

    /// Keys of the preferred path containing the root.
    pub fn root_path(&self) -> Vec<Key> {
        let mut cur = self.root as usize;
        let mut path = vec![self.keys[cur]];
        while let Some(c) = self.preferred_child(cur) {
            path.push(self.keys[c]);
            cur = c;
        }
        path
    }

    /// Interleave bound of `seq`, starting from no prior labels.
    ///
    /// For every node on the search path of an access the access is labelled
    /// left (in the left subtree or the node itself) or right; the bound is
    /// the total number of label alternations over all nodes.
    pub fn interleave_bound(&self, seq: &[Key]) -> Result<u64, ReferenceError> {
        let mut last: Vec<u8> = vec![0; self.len()];
        let mut ib = 0u64;
        for &x in seq {
            ib += self.interleave_step(&mut last, x)?;
        }
        Ok(ib)
    }

    /// Alternations added by one access given the per-node last labels
    /// (0 = none yet, 1 = left, 2 = right).
    fn interleave_step(&self, last: &mut [u8], x: Key) -> Result<u64, ReferenceError> {
        let target = self.index_of(x)?;
        let mut cur = self.root as usize;
        let mut add = 0;
        loop {
            let label = if target <= cur { 1 } else { 2 };
            if last[cur] != 0 && last[cur] != label {
                add += 1;
            }
            last[cur] = label;
            if cur == target {
                return Ok(add);
            }
            cur = if label == 1 {
                self.left[cur] as usize
            } else {
                self.right[cur] as usize
            };
        }
    }

    /// `IB(X)/2 - n`; may be negative.
    pub fn lower_bound(&self, seq: &[Key]) -> Result<i64, ReferenceError> {
        let ib = self.interleave_bound(seq)? as i64;
        Ok(ib / 2 - self.len() as i64)
    }

    /// CSV with columns `i,key,crossings,ib_running`. Flags are simulated
    /// on a copy starting from the current state.
    pub fn crossing_csv(&self, seq: &[Key]) -> Result<String, ReferenceError> {
        let mut sim = self.clone();
        let mut last: Vec<u8> = vec![0; self.len()];
        let mut ib = 0u64;
        let mut out = String::from("i,key,crossings,ib_running\n");
        for (i, &x) in seq.iter().enumerate() {
            let c = sim.simulate_access(x)?.len();
            ib += self.interleave_step(&mut last, x)?;
            writeln!(out, "{i},{x},{c},{ib}").unwrap();
        }
        Ok(out)
    }
}
