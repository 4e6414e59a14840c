use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use zipper_bst::bench::{
    self, gen_sequence, parse_stack_ops, random_stack_ops, run_stack, BenchError, SeqKind, SequenceSpec,
};
use zipper_bst::bst_model::Key;
use zipper_bst::reference_tree::ReferenceTree;

#[derive(Parser)]
#[command(name = "bench", about = "Meter competitive BSTs and the multipop stack")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct SeqArgs {
    /// uniform, sequential, reverse, bit_reversal, working_set:W, alternating_pair, repeated
    #[arg(long, value_parser = parse_kind)]
    seq: SeqKind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 100_000)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl SeqArgs {
    fn spec(&self) -> SequenceSpec {
        SequenceSpec { kind: self.seq, n: self.n, m: self.m, seed: self.seed }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve a sequence and report cost against the lower bound.
    ///
    /// The ratio column is total / max(IB/2 - n, m): the interleave lower
    /// bound is clamped to m because it is negative for short sequences.
    Run {
        /// static, tango, hybrid or zipper
        #[arg(long)]
        structure: String,
        #[command(flatten)]
        seq: SeqArgs,
        /// Check model compliance and stored paths after every access
        #[arg(long)]
        paranoid: bool,
        /// Append the CSV row to this file (the header is written if the file is new)
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the interleave bound of a sequence.
    Ib {
        #[command(flatten)]
        seq: SeqArgs,
    },
    /// Run stack ops against a naive stack and report step counts.
    Stack {
        /// A file with one `push V` / `pop` / `multipop K` per line, or
        /// `random:COUNT[:SEED]`
        #[arg(long)]
        ops: String,
    },
}

fn parse_kind(s: &str) -> Result<SeqKind, String> {
    s.parse().map_err(|e: BenchError| e.to_string())
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.cmd {
        Cmd::Run { structure, seq, paranoid, csv } => {
            let spec = seq.spec();
            let xs = gen_sequence(&spec)?;
            let keys: Vec<Key> = (0..spec.n as Key).collect();
            let mut t = bench::build_structure(&structure, &keys)?;
            let report = bench::run(t.as_mut(), &spec.kind.label(), &xs, paranoid)?;
            println!("{}", bench::CSV_HEADER);
            println!("{}", report.csv_row());
            if let Some(path) = csv {
                let mut text = if path.exists() { fs::read_to_string(&path)? } else { format!("{}\n", bench::CSV_HEADER) };
                text.push_str(&report.csv_row());
                text.push('\n');
                fs::write(&path, text)?;
            }
        }
        Cmd::Ib { seq } => {
            let spec = seq.spec();
            let xs = gen_sequence(&spec)?;
            let keys: Vec<Key> = (0..spec.n as Key).collect();
            let r = ReferenceTree::build(&keys)?;
            let ib = r.interleave_bound(&xs)?;
            println!("ib={ib} lower_bound={} lb_clamped={}", r.lower_bound(&xs)?, bench::clamped_bound(ib, spec.n, spec.m));
        }
        Cmd::Stack { ops } => {
            let ops = match ops.strip_prefix("random:") {
                Some(rest) => {
                    let mut parts = rest.split(':');
                    let count = parts.next().unwrap_or("").parse()?;
                    let seed = parts.next().map(str::parse).transpose()?.unwrap_or(1);
                    random_stack_ops(count, 64, seed)
                }
                None => parse_stack_ops(&fs::read_to_string(&ops)?)?,
            };
            let r = run_stack(&ops)?;
            println!(
                "ops={} total_steps={} per_op={:.2} max_op_steps={} max_multipop_steps={} final_len={}",
                r.ops,
                r.total_steps,
                r.total_steps as f64 / r.ops.max(1) as f64,
                r.max_op_steps,
                r.max_multipop_steps,
                r.final_len
            );
        }
    }
    Ok(())
}
