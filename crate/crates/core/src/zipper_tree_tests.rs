use super::*;
use crate::bst_model::verify_compliance;
use crate::competitive::{ceil_log2, decompose_forest, depth_ratio};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

type Pick = Box<dyn Fn(&mut ChaCha8Rng, usize) -> Key>;

fn run_checked(n: usize, m: usize, seed: u64, pick: impl Fn(&mut ChaCha8Rng, usize) -> Key) -> (u64, ZipperStats) {
    run_with_speed(SPEED_EXTRACT, n, m, seed, pick)
}

fn run_with_speed(
    speed: u64,
    n: usize,
    m: usize,
    seed: u64,
    pick: impl Fn(&mut ChaCha8Rng, usize) -> Key,
) -> (u64, ZipperStats) {
    let keys: Vec<Key> = (0..n as Key).collect();
    let mut t = ZipperTree::with_speed(&keys, speed).unwrap();
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
        let report = verify_compliance(t.forest(), &trace, Mode::Strict);
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
fn tiny_trees() {
    for n in 1..=12 {
        run_checked(n, 60, n as u64, |r, _| r.gen_range(0..n as Key));
    }
}

#[test]
fn random_accesses_match_reference() {
    for (n, seed) in [(100, 1), (255, 2), (1000, 3)] {
        let (_, st) = run_checked(n, 400, seed, |r, _| r.gen_range(0..n as Key));
        assert!(st.max_local_depth <= D_LOCAL, "{st:?}");
    }
}

#[test]
fn sequential_and_alternating() {
    let n = 500;
    run_checked(n, 300, 0, |_, i| (i % n) as Key);
    run_checked(n, 300, 0, |_, i| if i % 2 == 0 { 3 } else { 400 });
    run_checked(n, 300, 0, |_, i| (n - 1 - i % n) as Key);
}

#[test]
fn slow_extraction_falls_back() {
    for (n, speed) in [(300, 1), (2000, 2), (2000, 4)] {
        let (_, st) = run_with_speed(speed, n, 300, 9, |r, _| r.gen_range(0..n as Key));
        assert!(st.case2 > 0, "n={n} speed={speed}: {st:?}");
        let (_, st) = run_with_speed(speed, n, 200, 9, |_, i| (i * 7 % n) as Key);
        assert!(st.case2 > 0, "n={n} speed={speed}: {st:?}");
    }
}

#[test]
fn repeat_access_costs_little() {
    let keys: Vec<Key> = (0..1000).collect();
    let mut t = ZipperTree::new(&keys).unwrap();
    t.access(777).unwrap();
    let before = t.stats.case2;
    let a = t.access(777).unwrap().cost();
    let b = t.access(777).unwrap().cost();
    assert_eq!(a, b);
    assert_eq!(t.stats.case2, before);
}

#[test]
fn unknown_key_is_rejected() {
    let keys: Vec<Key> = (0..10).map(|k| 3 * k).collect();
    let mut t = ZipperTree::new(&keys).unwrap();
    assert!(t.access(4).is_err());
    assert!(t.access(6).is_ok());
}

#[test]
#[ignore]
fn report_costs() {
    let bitrev = |i: usize, lg: u32| (i as u64).reverse_bits() >> (64 - lg);
    for lg in [8u32, 12, 16] {
        let n = 1usize << lg;
        let lgn = ceil_log2(n as u64 + 1);
        let keys: Vec<Key> = (0..n as Key).collect();
        let kinds: [(&str, Pick); 5] = [
            ("uniform", Box::new(move |r, _| r.gen_range(0..n as Key))),
            ("sequential", Box::new(move |_, i| (i % n) as Key)),
            ("bit_reversal", Box::new(move |_, i| bitrev(i % n, lg) as Key)),
            ("alternating", Box::new(move |_, i| if i % 2 == 0 { 1 } else { (n / 2 + 1) as Key })),
            ("working_set", Box::new(move |r, _| r.gen_range(0..16) * (n / 16) as Key)),
        ];
        for (name, pick) in kinds {
            let mut t = ZipperTree::new(&keys).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let (mut worst, mut total, m) = (0, 0, 20_000);
            for i in 0..m {
                let c = t.access(pick(&mut rng, i)).unwrap().cost();
                worst = worst.max(c);
                total += c;
            }
            println!(
                "n=2^{lg} {name:>12} worst={worst} ({:.1} per log) mean={:.1} case2={} local={}",
                worst as f64 / lgn as f64,
                total as f64 / m as f64,
                t.stats.case2,
                t.stats.max_local_depth
            );
        }
    }
}
