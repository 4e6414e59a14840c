use super::*;
use crate::bst_model::verify_compliance;
use crate::competitive::{ceil_log2, decompose_forest, depth_ratio};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn run_checked(
    speed: u64,
    n: usize,
    m: usize,
    seed: u64,
    pick: impl Fn(&mut ChaCha8Rng, usize) -> Key,
) -> (u64, HybridStats) {
    let keys: Vec<Key> = (0..n as Key).collect();
    let mut t = HybridTree::with_speed(&keys, speed).unwrap();
    let mut reference = ReferenceTree::build(&keys).unwrap();
    t.check_invariants().unwrap();
    assert_eq!(decompose_forest(t.forest()), reference.preferred_paths());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0;
    for i in 0..m {
        let x = pick(&mut rng, i);
        let trace = t.access(x).unwrap();
        reference.simulate_access(x).unwrap();
        worst = worst.max(trace.cost());
        let report = verify_compliance(t.forest(), &trace, Mode::Relaxed);
        assert!(report.is_clean(), "n={n} access {i} x={x}: {:?}", report.violations);
        assert_eq!(decompose_forest(t.forest()), reference.preferred_paths(), "n={n} access {i} x={x}");
        t.check_invariants().unwrap_or_else(|e| panic!("n={n} access {i}: {e}"));
        assert!(depth_ratio(t.forest()) <= 8.0);
        assert!(t.forest().links_consistent());
    }
    assert_eq!(t.forest().inorder_keys(), keys);
    (worst, t.stats.clone())
}

#[test]
fn small_paths_fit_in_top_paths() {
    let keys: Vec<Key> = (1..=7).collect();
    let t = HybridTree::new(&keys).unwrap();
    let root = t.forest().root().unwrap();
    assert_eq!(t.top_len(root), Some(3));
    t.check_invariants().unwrap();
    assert_eq!(t.forest().inorder_keys(), keys);
}

#[test]
fn long_root_path_gets_a_bottom_tree() {
    let keys: Vec<Key> = (0..1 << 16).collect();
    let t = HybridTree::new(&keys).unwrap();
    let root = t.forest().root().unwrap();
    assert_eq!(t.top_len(root), Some(2 * t.ll()));
    t.check_invariants().unwrap();
}

#[test]
fn tiny_trees() {
    for n in 1..=12 {
        run_checked(SPEED_EXTRACT, n, 60, n as u64, |r, _| r.gen_range(0..n as Key));
    }
}

#[test]
fn random_accesses_match_reference() {
    for (n, seed) in [(100, 1), (255, 2), (1000, 3)] {
        run_checked(SPEED_EXTRACT, n, 400, seed, |r, _| r.gen_range(0..n as Key));
    }
}

#[test]
fn sequential_and_alternating() {
    let n = 500;
    run_checked(SPEED_EXTRACT, n, 300, 0, |_, i| (i % n) as Key);
    run_checked(SPEED_EXTRACT, n, 300, 0, |_, i| if i % 2 == 0 { 3 } else { 400 });
    run_checked(SPEED_EXTRACT, n, 300, 0, |_, i| (n - 1 - i % n) as Key);
}

#[test]
fn slow_extraction_keeps_invariants() {
    for speed in [1, 2, 4] {
        let (_, st) = run_checked(speed, 2000, 300, 4, |r, _| r.gen_range(0..2000));
        assert!(st.launches > 0);
    }
}

#[test]
fn repeat_access_cuts_nothing() {
    let keys: Vec<Key> = (0..1000).collect();
    let mut t = HybridTree::new(&keys).unwrap();
    t.access(777).unwrap();
    let paths = t.decompose();
    let before = t.stats.cuts;
    let a = t.access(777).unwrap().cost();
    let b = t.access(777).unwrap().cost();
    assert_eq!(a, b);
    assert_eq!(t.stats.cuts, before);
    assert_eq!(t.decompose(), paths);
}

#[test]
fn unknown_key_is_rejected() {
    let keys: Vec<Key> = (0..10).map(|k| 3 * k).collect();
    let mut t = HybridTree::new(&keys).unwrap();
    assert!(t.access(4).is_err());
    assert!(t.access(6).is_ok());
}

#[test]
#[ignore]
fn report_costs() {
    for lg in [8u32, 12, 16] {
        let n = 1usize << lg;
        let keys: Vec<Key> = (0..n as Key).collect();
        let mut t = HybridTree::new(&keys).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut worst, mut total, m) = (0, 0, 20_000);
        for _ in 0..m {
            let c = t.access(rng.gen_range(0..n as Key)).unwrap().cost();
            worst = worst.max(c);
            total += c;
        }
        let lgn = ceil_log2(n as u64 + 1);
        println!(
            "n=2^{lg} worst={worst} ({:.1} per log) mean={:.1} {:?}",
            worst as f64 / lgn as f64,
            total as f64 / m as f64,
            t.stats
        );
    }
}
