use super::*;
use crate::aux_redblack::{layout_balanced, rb_check, split_near_root, join, to_key_list};
use crate::bst_model::{verify_compliance, Key, Mode};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn path_depths(rng: &mut impl Rng, k: usize, base: u32) -> Vec<u32> {
    let mut d = vec![0; k];
    let (mut lo, mut hi) = (0, k);
    for depth in 0..k as u32 {
        if rng.gen_bool(0.5) {
            d[lo] = base + depth;
            lo += 1;
        } else {
            hi -= 1;
            d[hi] = base + depth;
        }
    }
    d
}

fn bottom(rng: &mut impl Rng, k: usize) -> (Forest, Vec<u32>) {
    let base = rng.gen_range(0..5);
    let depths = path_depths(rng, k, base);
    let mut f = Forest::new();
    let ids: Vec<NodeId> = (0..k).map(|i| f.add_node(i as Key, depths[i])).collect();
    let (root, _) = layout_balanced(&mut f, &ids);
    f.set_root(root);
    f.raw_set_mark(root.unwrap(), true);
    // vary the shape a little
    for _ in 0..rng.gen_range(0..4) {
        let key = rng.gen_range(0..k as Key);
        let s = split_near_root(&mut f, Slot::root(), key).unwrap();
        join(&mut f, s.node, s.left_height, s.right_height);
    }
    (f, depths)
}

fn drain_to_chain(f: &mut Forest, ex: &mut Extraction) -> Vec<NodeId> {
    let mut tail = None;
    let mut out = Vec::new();
    while let Some(e) = ex.emit(f, tail) {
        out.push(e.node);
        tail = Some(e.node);
    }
    out
}

#[test]
fn extracts_shallowest_in_depth_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..2000 {
        let k = rng.gen_range(1..60);
        let want = rng.gen_range(1..10);
        let (mut f, depths) = bottom(&mut rng, k);
        let keys: Vec<Key> = (0..k as Key).collect();
        let mut ex = Extraction::new(want);
        let mut steps = 0;
        while !ex.is_ready() {
            ex.step(&mut f, Slot::root()).unwrap();
            steps += 1;
            if trial % 7 == 0 {
                assert_eq!(f.inorder_keys(), keys, "step {steps}");
                assert!(f.links_consistent());
            }
        }
        assert!(ex.step(&mut f, Slot::root()).is_err());
        let (zig, zag) = ex.chains(&f);
        let chain_rotations_bound = 3 * (zig.len() + zag.len()) as u32;
        assert!(ex.linearize_rotations <= chain_rotations_bound);
        let deep = ex.deep_slot();
        let emitted = drain_to_chain(&mut f, &mut ex);
        assert!(ex.is_done());
        let mut by_depth: Vec<usize> = (0..k).collect();
        by_depth.sort_by_key(|&i| depths[i]);
        let expect: Vec<Key> = by_depth.iter().take(want as usize).map(|&i| i as Key).collect();
        let got: Vec<Key> = emitted.iter().map(|&h| f.key(h)).collect();
        assert_eq!(got, expect, "k={k} want={want}");
        assert_eq!(f.inorder_keys(), keys);
        // what is left hangs below the last emitted node as a valid tree
        let last = *emitted.last().unwrap();
        let below: Vec<NodeId> = [Side::Left, Side::Right].into_iter().filter_map(|s| f.child(last, s)).collect();
        if k as u32 > want {
            assert!(deep.is_some());
            assert_eq!(below.len(), 1);
            let rest = below[0];
            f.raw_set_color(rest, crate::bst_model::Color::Black);
            assert!(rb_check(&f, rest).is_ok());
            assert_eq!(to_key_list(&f, rest).len(), k - want as usize);
        } else {
            assert!(below.is_empty());
        }
    }
}

#[test]
fn extraction_is_compliant() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let k = rng.gen_range(1..40);
        let (mut f, _) = bottom(&mut rng, k);
        let mut ex = Extraction::new(rng.gen_range(1..8));
        f.begin_access(Mode::Strict);
        while !ex.is_ready() {
            ex.advance(&mut f, Slot::root(), 3).unwrap();
        }
        drain_to_chain(&mut f, &mut ex);
        let trace = f.end_access();
        assert!(verify_compliance(&f, &trace, Mode::Strict).is_clean());
    }
}

#[test]
fn linearize_random_subtrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..300 {
        let k = rng.gen_range(1..=20);
        for down in [Side::Left, Side::Right] {
            let mut f = Forest::new();
            let ids: Vec<NodeId> = (0..k).map(|i| f.add_node(i, 0)).collect();
            let mut order = ids.clone();
            order.shuffle(&mut rng);
            // random BST by insertion
            let root = order[0];
            for &h in &order[1..] {
                let mut cur = root;
                loop {
                    let side = if f.key(h) < f.key(cur) { Side::Left } else { Side::Right };
                    match f.child(cur, side) {
                        Some(c) => cur = c,
                        None => {
                            f.raw_set_child(cur, side, Some(h));
                            break;
                        }
                    }
                }
            }
            let anchor = f.add_node(-1, 0);
            f.raw_set_child(anchor, Side::Right, Some(root));
            f.set_root(Some(anchor));
            let rot = linearize(&mut f, Slot::child_of(anchor, Side::Right), down);
            assert!(rot <= 3 * k as u32, "k={k} rot={rot}");
            let mut cur = f.right(anchor);
            let mut seen = Vec::new();
            while let Some(c) = cur {
                assert!(f.child(c, down.flip()).is_none());
                seen.push(f.key(c));
                cur = f.child(c, down);
            }
            let mut want: Vec<Key> = (0..k).collect();
            if down == Side::Left {
                want.reverse();
            }
            assert_eq!(seen, want);
        }
    }
}

#[test]
fn chain_needs_few_rotations() {
    for k in 1..=20 {
        let mut f = Forest::new();
        let ids: Vec<NodeId> = (0..k).map(|i| f.add_node(i, 0)).collect();
        for w in ids.windows(2) {
            f.raw_set_child(w[0], Side::Right, Some(w[1]));
        }
        let anchor = f.add_node(-1, 0);
        f.raw_set_child(anchor, Side::Right, Some(ids[0]));
        f.set_root(Some(anchor));
        let rot = linearize(&mut f, Slot::child_of(anchor, Side::Right), Side::Left);
        // the first stage has nothing to do on a chain of this orientation
        assert!(rot <= k as u32);
        let mut f2 = Forest::new();
        let ids: Vec<NodeId> = (0..k).map(|i| f2.add_node(i, 0)).collect();
        for w in ids.windows(2) {
            f2.raw_set_child(w[0], Side::Right, Some(w[1]));
        }
        f2.set_root(Some(ids[0]));
        assert!(linearize(&mut f2, Slot::root(), Side::Right) <= 2 * k as u32);
        assert_eq!(f2.inorder_keys(), (0..k).collect::<Vec<_>>());
    }
}

#[test]
fn three_way_zip() {
    // path 0@1 -> 2@2 -> 1@3 : zigs {0}, zags {2}, deepest 1
    let mut f = Forest::new();
    let a = f.add_node(0, 1);
    let b = f.add_node(1, 3);
    let c = f.add_node(2, 2);
    f.raw_set_child(b, Side::Left, Some(a));
    f.raw_set_child(b, Side::Right, Some(c));
    f.set_root(Some(b));
    f.recompute_aug_subtree(b);
    let mut ex = Extraction::new(3);
    ex.finish(&mut f, Slot::root()).unwrap();
    let order: Vec<u32> = drain_to_chain(&mut f, &mut ex).iter().map(|&h| f.depth_p(h)).collect();
    assert_eq!(order, vec![1, 2, 3]);
}

#[test]
fn one_sided() {
    // all-zig path: keys increase with depth
    let mut f = Forest::new();
    let ids: Vec<NodeId> = (0..9).map(|i| f.add_node(i, i as u32)).collect();
    let (root, _) = layout_balanced(&mut f, &ids);
    f.set_root(root);
    let mut ex = Extraction::new(4);
    ex.finish(&mut f, Slot::root()).unwrap();
    let (zig, zag) = ex.chains(&f);
    assert_eq!(zig.len(), 4);
    assert!(zag.is_empty());
    let got: Vec<Key> = drain_to_chain(&mut f, &mut ex).iter().map(|&h| f.key(h)).collect();
    assert_eq!(got, vec![0, 1, 2, 3]);
}
