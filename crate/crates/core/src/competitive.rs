//! The interface shared by all structures, plus helpers and oracles they have
//! in common.

use thiserror::Error;

use crate::aux_redblack::{attach_externals, layout_balanced, AuxError};
use crate::bst_model::{AccessTrace, Dir, Forest, Key, Mode, NodeId, Side};
use crate::extraction::ExtractError;
use crate::reference_tree::{ReferenceError, ReferenceTree};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AccessError {
    #[error("key {0} is not stored")]
    UnknownKey(Key),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Aux(#[from] AuxError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

/// Integer stand-in for log log n, at least 1.
pub fn ll(n: usize) -> u32 {
    let lg = ceil_log2(n as u64 + 1).max(2);
    ceil_log2(lg as u64).max(1)
}

/// ceil(log2(x)) for x >= 1.
pub fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        u64::BITS - (x - 1).leading_zeros()
    }
}

/// A binary search tree over a fixed key set served on the metered model.
pub trait CompetitiveBst {
    fn name(&self) -> &'static str;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Compliance mode the structure's traces are meant to satisfy.
    fn mode(&self) -> Mode;
    fn forest(&self) -> &Forest;
    /// Serve one access and return its trace; the cost is `trace.cost()`.
    fn access(&mut self, x: Key) -> Result<AccessTrace, AccessError>;
    /// The stored paths (one per marked component), each listed by depth.
    fn decompose(&self) -> Vec<Vec<Key>> {
        decompose_forest(self.forest())
    }
}

/// Partition the nodes into marked components, each sorted by reference
/// depth; components are ordered by the key of their shallowest node.
pub fn decompose_forest(f: &Forest) -> Vec<Vec<Key>> {
    let Some(root) = f.root() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut stack = vec![root];
    while let Some(top) = stack.pop() {
        let nodes = f.subtree_nodes(top, true);
        for &h in &nodes {
            for side in [Side::Left, Side::Right] {
                if let Some(c) = f.child(h, side).filter(|&c| f.is_marked(c)) {
                    stack.push(c);
                }
            }
        }
        let mut path: Vec<(u32, Key)> = nodes.iter().map(|&h| (f.depth_p(h), f.key(h))).collect();
        path.sort_unstable();
        out.push(path.into_iter().map(|(_, k)| k).collect::<Vec<_>>());
    }
    out.sort_by_key(|p: &Vec<Key>| p[0]);
    out
}

/// Largest ratio depth_T(x) / (d_P(x) + 1) over all nodes.
pub fn depth_ratio(f: &Forest) -> f64 {
    let Some(root) = f.root() else {
        return 0.0;
    };
    let mut worst: f64 = 0.0;
    let mut stack = vec![(root, 0u32)];
    while let Some((h, d)) = stack.pop() {
        worst = worst.max(d as f64 / (f.depth_p(h) + 1) as f64);
        for side in [Side::Left, Side::Right] {
            if let Some(c) = f.child(h, side) {
                stack.push((c, d + 1));
            }
        }
    }
    worst
}

/// Greatest depth of any node.
pub fn tree_height(f: &Forest) -> u32 {
    let Some(root) = f.root() else {
        return 0;
    };
    let mut best = 0;
    let mut stack = vec![(root, 0u32)];
    while let Some((h, d)) = stack.pop() {
        best = best.max(d);
        for side in [Side::Left, Side::Right] {
            if let Some(c) = f.child(h, side) {
                stack.push((c, d + 1));
            }
        }
    }
    best
}

/// Allocate one node per key (node index == key rank) with reference depths.
pub fn nodes_for(f: &mut Forest, reference: &ReferenceTree) -> Vec<NodeId> {
    reference
        .keys()
        .iter()
        .map(|&k| f.add_node(k, reference.depth_of(k).unwrap()))
        .collect()
}

/// Lay out every current preferred path of `reference` as a balanced
/// red-black tree with a marked root, hang them together in key order and
/// return the root of the whole forest. `nodes[i]` holds the i-th key.
pub fn layout_tango(f: &mut Forest, reference: &ReferenceTree, nodes: &[NodeId]) -> NodeId {
    let keys = reference.keys();
    let paths = reference.preferred_paths();
    let mut top_root: Vec<Option<NodeId>> = vec![None; keys.len()];
    let mut built = Vec::with_capacity(paths.len());
    for path in &paths {
        let mut ids: Vec<NodeId> = path.iter().map(|&k| nodes[reference.index_of(k).unwrap()]).collect();
        ids.sort_by_key(|&h| f.key(h));
        let (root, _) = layout_balanced(f, &ids);
        let root = root.unwrap();
        f.raw_set_mark(root, true);
        top_root[reference.index_of(path[0]).unwrap()] = Some(root);
        built.push((path.clone(), ids, root));
    }
    for (path, ids, root) in &built {
        let externals = path_externals(reference, path, ids.len(), |k| {
            top_root[reference.index_of(k).unwrap()]
        }, |h| f.key(h), ids);
        attach_externals(f, *root, &externals);
    }
    let root = top_root[reference.index_of(reference.root_key()).unwrap()].unwrap();
    f.set_root(Some(root));
    for &h in nodes {
        f.recompute_aug(h);
    }
    // recompute bottom-up so subtree values are exact
    for (_, _, root) in &built {
        f.recompute_aug_subtree(*root);
    }
    root
}

/// For the path (listed by depth) whose nodes are `ids` (sorted by key),
/// return per key-space gap the root of the structure hanging there.
pub fn path_externals(
    reference: &ReferenceTree,
    path: &[Key],
    size: usize,
    rep_of_top: impl Fn(Key) -> Option<NodeId>,
    key_of: impl Fn(NodeId) -> Key,
    ids: &[NodeId],
) -> Vec<Option<NodeId>> {
    let mut ext = vec![None; size + 1];
    let sorted: Vec<Key> = ids.iter().map(|&h| key_of(h)).collect();
    for (i, &k) in path.iter().enumerate() {
        let next = path.get(i + 1).copied();
        let j = sorted.binary_search(&k).unwrap();
        for (child, gap) in [(reference.left_key(k), j), (reference.right_key(k), j + 1)] {
            if let Some(c) = child {
                if Some(c) != next {
                    ext[gap] = rep_of_top(c);
                }
            }
        }
    }
    ext
}

/// A static balanced tree: the reference-tree shape, never restructured.
pub struct StaticTree {
    forest: Forest,
    n: usize,
}

impl StaticTree {
    pub fn new(keys: &[Key]) -> Result<Self, AccessError> {
        let reference = ReferenceTree::build(keys)?;
        let mut forest = Forest::new();
        let nodes = nodes_for(&mut forest, &reference);
        for (i, &k) in keys.iter().enumerate() {
            for (c, side) in [(reference.left_key(k), Side::Left), (reference.right_key(k), Side::Right)] {
                if let Some(c) = c {
                    forest.raw_set_child(nodes[i], side, Some(nodes[reference.index_of(c).unwrap()]));
                }
            }
        }
        let root = nodes[reference.index_of(reference.root_key()).unwrap()];
        forest.set_root(Some(root));
        forest.raw_set_mark(root, true);
        forest.recompute_aug_subtree(root);
        Ok(StaticTree { forest, n: keys.len() })
    }
}

impl CompetitiveBst for StaticTree {
    fn name(&self) -> &'static str {
        "static"
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
        let f = &mut self.forest;
        f.begin_access(Mode::Strict);
        let mut cur = f.root().unwrap();
        loop {
            let k = f.key(cur);
            if k == x {
                return Ok(f.end_access());
            }
            let dir = if x < k { Dir::Left } else { Dir::Right };
            match f.move_to(dir) {
                Ok(c) => cur = c,
                Err(_) => {
                    f.end_access();
                    return Err(AccessError::UnknownKey(x));
                }
            }
        }
    }

    fn decompose(&self) -> Vec<Vec<Key>> {
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ll_values() {
        assert_eq!(ll(1), 1);
        assert_eq!(ll(3), 1);
        assert_eq!(ll(7), 2);
        assert_eq!(ll(15), 2);
        assert_eq!(ll(16), 3);
        assert_eq!(ll(255), 3);
        assert_eq!(ll(256), 4);
        assert_eq!(ll(1 << 16), 5);
    }

    #[test]
    fn static_costs() {
        let keys: Vec<Key> = (0..100).collect();
        let mut t = StaticTree::new(&keys).unwrap();
        for &k in &keys {
            let tr = t.access(k).unwrap();
            assert!(tr.cost() <= 7);
            assert!(crate::bst_model::verify_compliance(t.forest(), &tr, Mode::Strict).is_clean());
        }
        assert!(t.access(1000).is_err());
    }

    #[test]
    fn tango_layout_matches_paths() {
        let keys: Vec<Key> = (1..=7).collect();
        let reference = ReferenceTree::build(&keys).unwrap();
        let mut f = Forest::new();
        let nodes = nodes_for(&mut f, &reference);
        layout_tango(&mut f, &reference, &nodes);
        assert_eq!(f.inorder_keys(), keys);
        assert_eq!(decompose_forest(&f), reference.preferred_paths());
        assert!(f.links_consistent());
    }
}
