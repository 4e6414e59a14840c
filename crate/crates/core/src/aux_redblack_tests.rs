use super::*;
use crate::bst_model::{verify_compliance, Mode};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn tree_of(f: &mut Forest, keys: &[Key], depths: &[u32]) -> (NodeId, u32) {
    let ids: Vec<NodeId> = keys.iter().zip(depths).map(|(&k, &d)| f.add_node(k, d)).collect();
    let (root, h) = layout_balanced(f, &ids);
    let root = root.unwrap();
    f.set_root(Some(root));
    f.raw_set_mark(root, true);
    (root, h)
}

/// Depths for keys 0..k such that every depth suffix is a key interval,
/// as along a root-to-leaf path of a BST.
fn path_depths(rng: &mut impl Rng, k: usize) -> Vec<u32> {
    let mut d = vec![0; k];
    let (mut lo, mut hi) = (0, k);
    for depth in 0..k as u32 {
        if rng.gen_bool(0.5) {
            d[lo] = depth;
            lo += 1;
        } else {
            hi -= 1;
            d[hi] = depth;
        }
    }
    d
}

fn shuffle_tree(f: &mut Forest, rng: &mut impl Rng, rounds: usize) -> u32 {
    let mut h = 0;
    for _ in 0..rounds {
        let root = f.root().unwrap();
        let keys = to_key_list(f, root);
        let k = *keys.choose(rng).unwrap();
        let s = split_near_root(f, Slot::root(), k).unwrap();
        f.raw_set_mark(s.node, true);
        let (r, hh) = join(f, s.node, s.left_height, s.right_height);
        assert_eq!(f.root(), Some(r));
        h = hh;
    }
    h
}

#[test]
fn balanced_layouts_are_valid() {
    for n in 1..200 {
        let mut f = Forest::new();
        let keys: Vec<Key> = (0..n).collect();
        let (root, h) = tree_of(&mut f, &keys, &vec![0; n as usize]);
        assert_eq!(rb_check(&f, root), Ok(h), "n={n}");
        assert_eq!(to_key_list(&f, root), keys);
    }
}

#[test]
fn split_every_key() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in [1usize, 2, 3, 5, 8, 17, 40, 100, 255, 256, 700] {
        let keys: Vec<Key> = (0..n as Key).collect();
        let depths: Vec<u32> = (0..n).map(|_| rng.gen_range(0..50)).collect();
        let mut f = Forest::new();
        tree_of(&mut f, &keys, &depths);
        shuffle_tree(&mut f, &mut rng, 20);
        for &k in keys.iter().step_by((n / 30).max(1)) {
            let mut g = f.clone();
            let s = split_near_root(&mut g, Slot::root(), k).unwrap();
            assert_eq!(g.key(s.node), k);
            assert_eq!(g.root(), Some(s.node));
            assert!(g.is_marked(s.node));
            for (side, h) in [(Side::Left, s.left_height), (Side::Right, s.right_height)] {
                match g.child(s.node, side) {
                    Some(c) => assert_eq!(rb_check(&g, c), Ok(h)),
                    None => assert_eq!(h, 0),
                }
            }
            assert_eq!(g.inorder_keys(), keys);
            assert!(g.links_consistent());
            assert!(s.stats.max_rotation_depth <= D_SPLIT, "{:?}", s.stats);
            assert!(s.stats.max_group <= 5, "{:?}", s.stats);
        }
    }
}

#[test]
fn split_missing_key() {
    let mut f = Forest::new();
    tree_of(&mut f, &[1, 3, 5], &[0, 0, 0]);
    assert_eq!(split_near_root(&mut f, Slot::root(), 4).unwrap_err(), AuxError::KeyAbsent(4));
}

#[test]
fn join_uneven() {
    for a in 0..40 {
        for b in [0, 1, 2, 7, 30, 90] {
            let mut f = Forest::new();
            let lk: Vec<NodeId> = (0..a).map(|k| f.add_node(k, 0)).collect();
            let mid = f.add_node(a, 0);
            let rk: Vec<NodeId> = (a + 1..a + 1 + b).map(|k| f.add_node(k, 0)).collect();
            let (l, hl) = layout_balanced(&mut f, &lk);
            let (r, hr) = layout_balanced(&mut f, &rk);
            f.raw_set_child(mid, Side::Left, l);
            f.raw_set_child(mid, Side::Right, r);
            f.set_root(Some(mid));
            f.raw_set_mark(mid, true);
            let (root, h) = join(&mut f, mid, hl, hr);
            assert_eq!(f.root(), Some(root));
            assert!(f.is_marked(root));
            assert_eq!(rb_check(&f, root), Ok(h), "a={a} b={b}");
            assert_eq!(f.inorder_keys(), (0..a + 1 + b).collect::<Vec<_>>());
        }
    }
}

#[test]
fn cut_then_concatenate() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..300 {
        let k = rng.gen_range(1..120);
        let keys: Vec<Key> = (0..k as Key).collect();
        let depths = path_depths(&mut rng, k);
        let mut f = Forest::new();
        tree_of(&mut f, &keys, &depths);
        if trial % 2 == 0 {
            shuffle_tree(&mut f, &mut rng, 5);
        }
        let top_root = f.root();
        let h = measure_height(&mut f, top_root);
        let d = rng.gen_range(0..k as u32);
        let cut = cut_tango(&mut f, Slot::root(), h, d).unwrap();
        assert_eq!(rb_check(&f, cut.top), Ok(cut.top_height));
        let top: Vec<Key> = keys.iter().copied().filter(|&x| depths[x as usize] <= d).collect();
        assert_eq!(to_key_list(&f, cut.top), top);
        assert_eq!(f.inorder_keys(), keys);
        assert!(f.links_consistent());
        let Some(b) = cut.bottom else {
            assert_eq!(d as usize, k - 1);
            continue;
        };
        assert!(f.is_marked(b));
        assert_eq!(rb_check(&f, b), Ok(cut.bottom_height));
        let bottom: Vec<Key> = keys.iter().copied().filter(|&x| depths[x as usize] > d).collect();
        assert_eq!(to_key_list(&f, b), bottom);
        let (root, hh) = concatenate_tango(&mut f, cut.top, cut.top_height, b, cut.bottom_height).unwrap();
        assert_eq!(rb_check(&f, root), Ok(hh));
        assert_eq!(to_key_list(&f, root), keys);
        assert!(f.is_marked(root));
    }
}

#[test]
fn operations_are_compliant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..60 {
        let k = rng.gen_range(2..80);
        let keys: Vec<Key> = (0..k as Key).collect();
        let depths = path_depths(&mut rng, k);
        let mut f = Forest::new();
        let (root, h) = tree_of(&mut f, &keys, &depths);
        let d = rng.gen_range(0..k as u32 - 1);
        f.begin_access(Mode::Strict);
        f.visit(root);
        let cut = cut_tango(&mut f, Slot::root(), h, d).unwrap();
        let b = cut.bottom.unwrap();
        concatenate_tango(&mut f, cut.top, cut.top_height, b, cut.bottom_height).unwrap();
        let trace = f.end_access();
        let rep = verify_compliance(&f, &trace, Mode::Strict);
        assert!(rep.is_clean(), "{:?}", rep.violations);
    }
}

#[test]
fn boundary_matches_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..400 {
        let k = rng.gen_range(1..200);
        let keys: Vec<Key> = (0..k as Key).collect();
        let depths = path_depths(&mut rng, k);
        let mut f = Forest::new();
        let (root, _) = tree_of(&mut f, &keys, &depths);
        let height = binary_height(&f, root);
        let d = rng.gen_range(0..k as u32);
        f.begin_access(Mode::Strict);
        f.visit(root);
        let got = find_boundary(&mut f, root, d);
        let trace = f.end_access();
        let deep: Vec<usize> = (0..k).filter(|&i| depths[i] > d).collect();
        if deep.is_empty() {
            assert!(got.is_err());
            continue;
        }
        let b = got.unwrap();
        let (lo, hi) = (deep[0], *deep.last().unwrap());
        assert_eq!(f.key(b.l_deep), lo as Key);
        assert_eq!(f.key(b.r_deep), hi as Key);
        assert_eq!(b.l.map(|x| f.key(x)), lo.checked_sub(1).map(|x| x as Key));
        assert_eq!(b.r.map(|x| f.key(x)), (hi + 1 < k).then_some(hi as Key + 1));
        // each side walks down and back
        assert!(trace.move_count() as u32 <= 2 * (2 * height + 2));
    }
}

#[test]
fn rebuild_zigzag_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in [1usize, 2, 3, 4, 7, 16, 31, 64, 150, 500] {
        let depths = path_depths(&mut rng, k);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&i| depths[i]);
        let mut f = Forest::new();
        let ids: Vec<NodeId> = order.iter().map(|&i| f.add_node(i as Key, depths[i])).collect();
        for w in ids.windows(2) {
            let side = if f.key(w[1]) < f.key(w[0]) { Side::Left } else { Side::Right };
            f.raw_set_child(w[0], side, Some(w[1]));
        }
        f.set_root(Some(ids[0]));
        f.raw_set_mark(ids[0], true);
        for &i in ids.iter().rev() {
            f.recompute_aug(i);
        }
        f.begin_access(Mode::Strict);
        f.visit(ids[0]);
        let b = build_from_path(&mut f, ids[0]).unwrap();
        let trace = f.end_access();
        assert!(verify_compliance(&f, &trace, Mode::Strict).is_clean());
        assert_eq!(rb_check(&f, b.root), Ok(b.height));
        assert_eq!(to_key_list(&f, b.root), (0..k as Key).collect::<Vec<_>>());
        assert!(f.is_marked(b.root));
        let bound = 2.0 * ((k + 1) as f64).log2();
        assert!(b.rotations <= 2 * k as u64, "k={k}");
        assert!(binary_height(&f, b.root) as f64 <= bound.max(1.0), "k={k}");
    }
}

#[test]
fn dump_format() {
    let mut f = Forest::new();
    tree_of(&mut f, &[1, 2, 3], &[2, 0, 1]);
    assert_eq!(debug_dump(&f, f.root()), "((. 1@2[B,-] .) 2@0[B,m] (. 3@1[B,-] .))");
}

#[test]
#[ignore]
fn report_costs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in [8usize, 16, 64, 256, 1024, 4096] {
        let depths = path_depths(&mut rng, k);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&i| depths[i]);
        let mut f = Forest::new();
        let ids: Vec<NodeId> = order.iter().map(|&i| f.add_node(i as Key, depths[i])).collect();
        for w in ids.windows(2) {
            let side = if f.key(w[1]) < f.key(w[0]) { Side::Left } else { Side::Right };
            f.raw_set_child(w[0], side, Some(w[1]));
        }
        f.set_root(Some(ids[0]));
        f.raw_set_mark(ids[0], true);
        for &i in ids.iter().rev() {
            f.recompute_aug(i);
        }
        f.begin_access(Mode::Strict);
        f.visit(ids[0]);
        let b = build_from_path(&mut f, ids[0]).unwrap();
        let t = f.end_access();
        println!("k={k} rot={} per_node={:.2} cost={} per_node={:.2}", b.rotations, b.rotations as f64 / k as f64, t.cost(), t.cost() as f64 / k as f64);
    }
    let mut worst = SplitStats::default();
    for n in [10usize, 100, 1000, 5000] {
        let keys: Vec<Key> = (0..n as Key).collect();
        let mut f = Forest::new();
        tree_of(&mut f, &keys, &vec![0; n]);
        shuffle_tree(&mut f, &mut rng, 50);
        for &k in &keys {
            let mut g = f.clone();
            let s = split_near_root(&mut g, Slot::root(), k).unwrap();
            worst.absorb(&SplitStats { rotations: 0, steps: 0, ..s.stats });
        }
    }
    println!("split worst {:?}", worst);
}

#[test]
#[ignore]
fn report_33() {
    let mut worst = 0;
    for seed in 0..500 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 33;
        let depths = path_depths(&mut rng, k);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&i| depths[i]);
        let mut f = Forest::new();
        let ids: Vec<NodeId> = order.iter().map(|&i| f.add_node(i as Key, depths[i])).collect();
        for w in ids.windows(2) {
            let side = if f.key(w[1]) < f.key(w[0]) { Side::Left } else { Side::Right };
            f.raw_set_child(w[0], side, Some(w[1]));
        }
        f.set_root(Some(ids[0]));
        f.raw_set_mark(ids[0], true);
        let b = build_from_path(&mut f, ids[0]).unwrap();
        worst = worst.max(b.rotations);
    }
    println!("worst33 {worst}");
}

#[test]
fn rebuild_rejects_gaps() {
    let mut f = Forest::new();
    let a = f.add_node(1, 0);
    let b = f.add_node(2, 2);
    f.raw_set_child(a, Side::Right, Some(b));
    f.set_root(Some(a));
    assert_eq!(build_from_path(&mut f, a).unwrap_err(), AuxError::NotAPath);
}

#[test]
fn corrupted_colour_detected() {
    let mut f = Forest::new();
    let (root, _) = tree_of(&mut f, &(0..15).collect::<Vec<_>>(), &[0; 15]);
    assert!(validate_rb(&f, root));
    let c = f.left(root).unwrap();
    f.raw_set_color(c, Color::Red);
    assert!(!validate_rb(&f, root));
}
