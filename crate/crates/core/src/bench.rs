//! Access-sequence generators, a runner that meters any structure over a
//! sequence, and CSV reporting of cost against the interleave lower bound.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bst_model::{verify_compliance, Key};
use crate::competitive::{ceil_log2, AccessError, CompetitiveBst, StaticTree};
use crate::hybrid_tree::HybridTree;
use crate::multipop_stack::HybridStack;
use crate::reference_tree::{ReferenceError, ReferenceTree};
use crate::tango_tree::TangoTree;
use crate::zipper_tree::ZipperTree;

pub const CSV_HEADER: &str = "seq,structure,n,m,total,max_access,ib,lb_clamped,ratio,seconds";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid sequence spec: {0}")]
    InvalidSpec(String),
    #[error("unknown structure {0:?} (expected static, tango, hybrid or zipper)")]
    UnknownStructure(String),
    #[error(transparent)]
    Access(#[from] AccessError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error("oracle failure at access {index} (key {key}): {detail}")]
    Oracle { index: usize, key: Key, detail: String },
    #[error("bad stack op on line {line}: {text:?}")]
    StackOp { line: usize, text: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqKind {
    Uniform,
    Sequential,
    Reverse,
    BitReversal,
    /// Uniform over `w` evenly spaced keys.
    WorkingSet(usize),
    AlternatingPair,
    Repeated,
}

impl SeqKind {
    pub fn label(&self) -> String {
        match self {
            SeqKind::Uniform => "uniform".into(),
            SeqKind::Sequential => "sequential".into(),
            SeqKind::Reverse => "reverse".into(),
            SeqKind::BitReversal => "bit_reversal".into(),
            SeqKind::WorkingSet(w) => format!("working_set({w})"),
            SeqKind::AlternatingPair => "alternating_pair".into(),
            SeqKind::Repeated => "repeated".into(),
        }
    }
}

impl FromStr for SeqKind {
    type Err = BenchError;

    /// Accepts the labels above; the working set also parses as
    /// `working_set:W` or `working_set=W`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let kind = match s {
            "uniform" => SeqKind::Uniform,
            "sequential" => SeqKind::Sequential,
            "reverse" => SeqKind::Reverse,
            "bit_reversal" => SeqKind::BitReversal,
            "alternating_pair" => SeqKind::AlternatingPair,
            "repeated" => SeqKind::Repeated,
            _ => {
                let w = s
                    .strip_prefix("working_set")
                    .map(|r| r.trim_start_matches(['(', ':', '=']).trim_end_matches(')'))
                    .and_then(|r| r.parse::<usize>().ok())
                    .ok_or_else(|| BenchError::InvalidSpec(format!("unknown sequence kind {s:?}")))?;
                SeqKind::WorkingSet(w)
            }
        };
        Ok(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceSpec {
    pub kind: SeqKind,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
}

/// Keys are drawn from `0..n`; output depends only on the spec.
pub fn gen_sequence(spec: &SequenceSpec) -> Result<Vec<Key>, BenchError> {
    let SequenceSpec { kind, n, m, seed } = *spec;
    if n == 0 || m == 0 {
        return Err(BenchError::InvalidSpec(format!("need n >= 1 and m >= 1, got n={n} m={m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seq = match kind {
        SeqKind::Uniform => (0..m).map(|_| rng.gen_range(0..n) as Key).collect(),
        SeqKind::Sequential => (0..m).map(|i| (i % n) as Key).collect(),
        SeqKind::Reverse => (0..m).map(|i| (n - 1 - i % n) as Key).collect(),
        SeqKind::BitReversal => {
            let bits = ceil_log2(n as u64);
            let cycle: Vec<Key> = (0..1u64 << bits)
                .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (64 - bits) })
                .filter(|&k| (k as usize) < n)
                .map(|k| k as Key)
                .collect();
            cycle.iter().copied().cycle().take(m).collect()
        }
        SeqKind::WorkingSet(w) => {
            if w == 0 || w > n {
                return Err(BenchError::InvalidSpec(format!("working set size {w} outside 1..={n}")));
            }
            (0..m).map(|_| (rng.gen_range(0..w) * n / w) as Key).collect()
        }
        SeqKind::AlternatingPair => {
            let (a, b) = ((n / 4) as Key, (3 * n / 4) as Key);
            (0..m).map(|i| if i % 2 == 0 { a } else { b }).collect()
        }
        SeqKind::Repeated => vec![(n - 1) as Key; m],
    };
    Ok(seq)
}

pub fn build_structure(name: &str, keys: &[Key]) -> Result<Box<dyn CompetitiveBst>, BenchError> {
    Ok(match name {
        "static" => Box::new(StaticTree::new(keys)?),
        "tango" => Box::new(TangoTree::new(keys)?),
        "hybrid" => Box::new(HybridTree::new(keys)?),
        "zipper" => Box::new(ZipperTree::new(keys)?),
        other => return Err(BenchError::UnknownStructure(other.to_string())),
    })
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub seq: String,
    pub structure: String,
    pub n: usize,
    pub costs: Vec<u64>,
    pub total: u64,
    pub max_access: u64,
    pub ib: u64,
    /// `max(IB/2 - n, m)`.
    pub lb_clamped: u64,
    pub seconds: f64,
}

impl BenchReport {
    pub fn m(&self) -> usize {
        self.costs.len()
    }

    pub fn ratio(&self) -> f64 {
        self.total as f64 / self.lb_clamped as f64
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.4},{:.3}",
            self.seq,
            self.structure,
            self.n,
            self.m(),
            self.total,
            self.max_access,
            self.ib,
            self.lb_clamped,
            self.ratio(),
            self.seconds
        )
    }
}

pub fn clamped_bound(ib: u64, n: usize, m: usize) -> u64 {
    (ib / 2).saturating_sub(n as u64).max(m as u64)
}

/// Serve `seq` on `t`. With `paranoid`, every trace is replayed through the
/// compliance checker and the stored paths are compared against a reference
/// simulation after each access.
pub fn run(t: &mut dyn CompetitiveBst, seq_label: &str, seq: &[Key], paranoid: bool) -> Result<BenchReport, BenchError> {
    let keys: Vec<Key> = (0..t.len() as Key).collect();
    let mut reference = ReferenceTree::build(&keys)?;
    let ib = reference.interleave_bound(seq)?;
    let mut costs = Vec::with_capacity(seq.len());
    let start = Instant::now();
    for (index, &key) in seq.iter().enumerate() {
        let trace = t.access(key)?;
        if paranoid {
            let report = verify_compliance(t.forest(), &trace, t.mode());
            if !report.is_clean() {
                let detail = format!("compliance: {:?}", report.violations);
                return Err(BenchError::Oracle { index, key, detail });
            }
            reference.simulate_access(key)?;
            let stored = t.decompose();
            if !stored.is_empty() && stored != reference.preferred_paths() {
                let detail = "stored paths differ from the reference preferred paths".to_string();
                return Err(BenchError::Oracle { index, key, detail });
            }
        }
        costs.push(trace.cost());
    }
    let seconds = start.elapsed().as_secs_f64();
    let total = costs.iter().sum();
    let max_access = costs.iter().copied().max().unwrap_or(0);
    Ok(BenchReport {
        seq: seq_label.to_string(),
        structure: t.name().to_string(),
        n: t.len(),
        total,
        max_access,
        ib,
        lb_clamped: clamped_bound(ib, t.len(), seq.len()),
        seconds,
        costs,
    })
}

pub fn csv(reports: &[BenchReport]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in reports {
        writeln!(out, "{}", r.csv_row()).unwrap();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackOp {
    Push(u64),
    Pop,
    Multipop(usize),
}

/// One op per line: `push V`, `pop`, or `multipop K`. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_stack_ops(text: &str) -> Result<Vec<StackOp>, BenchError> {
    let mut ops = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || BenchError::StackOp { line: i + 1, text: line.to_string() };
        let mut it = line.split_whitespace();
        let op = match (it.next(), it.next()) {
            (Some("push"), Some(v)) => StackOp::Push(v.parse().map_err(|_| bad())?),
            (Some("pop"), None) => StackOp::Pop,
            (Some("multipop"), Some(k)) => StackOp::Multipop(k.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        if it.next().is_some() {
            return Err(bad());
        }
        ops.push(op);
    }
    Ok(ops)
}

/// Random ops biased towards growth; multipop sizes are spread over
/// `1..=2*max_k`.
pub fn random_stack_ops(count: usize, max_k: usize, seed: u64) -> Vec<StackOp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| match rng.gen_range(0..10) {
            0..=5 => StackOp::Push(i as u64),
            6..=8 => StackOp::Pop,
            _ => StackOp::Multipop(rng.gen_range(1..=2 * max_k.max(1))),
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct StackReport {
    pub ops: usize,
    pub total_steps: u64,
    pub max_op_steps: u64,
    pub max_multipop_steps: u64,
    pub final_len: usize,
}

/// Run `ops` on a [`HybridStack`] and on a `Vec`, failing on the first
/// disagreement.
pub fn run_stack(ops: &[StackOp]) -> Result<StackReport, BenchError> {
    let mut s = HybridStack::new();
    let mut oracle: Vec<u64> = Vec::new();
    let mut rep = StackReport { ops: ops.len(), ..Default::default() };
    for (index, &op) in ops.iter().enumerate() {
        let before = s.steps();
        let (got, want) = match op {
            StackOp::Push(v) => {
                s.push(v);
                oracle.push(v);
                (Vec::new(), Vec::new())
            }
            StackOp::Pop => (s.pop().ok().into_iter().collect(), oracle.pop().into_iter().collect()),
            StackOp::Multipop(k) => {
                let keep = oracle.len().saturating_sub(k);
                let mut want = oracle.split_off(keep);
                want.reverse();
                (s.multipop(k), want)
            }
        };
        let spent = s.steps() - before;
        rep.max_op_steps = rep.max_op_steps.max(spent);
        if let StackOp::Multipop(_) = op {
            rep.max_multipop_steps = rep.max_multipop_steps.max(spent);
        }
        if got != want || s.len() != oracle.len() {
            let detail = format!("{op:?}: stack gave {got:?}, expected {want:?}");
            return Err(BenchError::Oracle { index, key: 0, detail });
        }
    }
    rep.total_steps = s.steps();
    rep.final_len = s.len();
    Ok(rep)
}
