use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Compositional safety analysis of closed-loop systems with abstracted
/// perception.
///
/// Exit status: 0 on success, 1 when the analysis answers "no" (an
/// assertion fails, no invariant is found, a premise fails), 2 on usage,
/// input or I/O errors.
#[derive(Parser, Debug)]
#[command(name = "percheck", version, about, long_about)]
#[command(args_conflicts_with_subcommands = false, subcommand_required = false, arg_required_else_help = true)]
pub struct Cli {
    /// Scenario spec file (JSON). Without a subcommand, runs every query in
    /// it and writes `report.json` plus one CSV per query into `--out`.
    /// Subcommands that need chains can take them from its environments.
    #[arg(long, global = true, value_name = "FILE")]
    spec: Option<PathBuf>,

    /// Output directory for reports and generated files.
    #[arg(long, global = true, env = "PERCHECK_OUT", default_value = "percheck-out")]
    out: PathBuf,

    /// Seed for simulation.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Epsilon grid `a:b:step` for invariant search (default 0:0.99:0.01).
    #[arg(long, global = true, value_name = "A:B:STEP")]
    eps_grid: Option<String>,

    #[command(subcommand)]
    command: Option<Command>,
}

/// Where chains come from.
#[derive(Args, Debug, Clone)]
pub struct ChainArgs {
    /// Explicit chain `ENV=PATH` (repeatable). The `.labels` sidecar must
    /// sit next to PATH. Without it, environments come from `--spec`.
    #[arg(long = "chain", value_name = "ENV=PATH")]
    chains: Vec<String>,

    /// Scenario sequence `ENV:H[,ENV:H...]`; defaults to the spec's sequence.
    #[arg(long, value_name = "ENV:H,...")]
    seq: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Summarize a scenario sequence into `(A, b)`.
    ///
    /// Writes the summary JSON (`{"format_version", "states", "a", "b"}`,
    /// numbers as decimal strings) and prints `states`, `max_error` and the
    /// output path.
    Summarize {
        #[command(flatten)]
        chains: ChainArgs,
        /// Summary file to write (default `<out>/summary.json`).
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
        /// Also print `state error_probability` for every state.
        #[arg(long)]
        table: bool,
    },
    /// Worst-case error `max x·b` over distributions satisfying `--pre`.
    ///
    /// Prints `value <v>` then one `witness <state> <weight>` line per
    /// state in the support of a maximizing distribution.
    Forward {
        #[arg(long, value_name = "FILE")]
        summary: PathBuf,
        /// Predicate file; omitted means true.
        #[arg(long, value_name = "FILE")]
        pre: Option<PathBuf>,
    },
    /// Weakest precondition `x·b ≤ eps`.
    ///
    /// Writes the predicate to `--output` and prints, per state,
    /// `<state> <b> ok|exceeds`.
    Backward {
        #[arg(long, value_name = "FILE")]
        summary: PathBuf,
        #[arg(long)]
        eps: f64,
        /// Predicate file to write (default `<out>/weakest_pre.json`).
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Check the assertion {pre} C {post} {eps}.
    ///
    /// Prints `verdict holds|fails`; on failure also the violated obligation,
    /// its value and bound, and the counterexample distribution. Exits 1
    /// when the assertion fails.
    Check {
        #[arg(long, value_name = "FILE")]
        summary: PathBuf,
        #[arg(long, value_name = "FILE")]
        pre: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        post: Option<PathBuf>,
        #[arg(long)]
        eps: f64,
    },
    /// Certify an error bound `1 − (1 − eps)^k` for every interleaving of
    /// the given scenario summaries.
    ///
    /// Prints a `k bound [brute_force]` table and writes `certificate.json`
    /// and `bounds.csv` into `--out`. Exits 1 when a premise fails.
    Accelerate {
        /// Summary files, one per scenario (repeatable).
        #[arg(long = "summary", value_name = "FILE", required = true)]
        summaries: Vec<PathBuf>,
        /// `auto` (epsilon-grid search, falling back to true with the
        /// largest local error), `top`, or a predicate file.
        #[arg(long, default_value = "auto")]
        invariant: String,
        /// Local error bound for `top` or a predicate file; defaults to the
        /// largest entry of any `b`.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 10)]
        k: u32,
        /// Add the exhaustive worst case for k up to this value.
        #[arg(long, default_value_t = 0)]
        brute_force_k: u32,
    },
    /// Search the epsilon grid for the invariant `∧ x·b_i ≤ eps`.
    ///
    /// Prints `epsilon holds` for every grid value, then `invariant <eps>`
    /// or `invariant none` (exit 1).
    Invariant {
        #[arg(long = "summary", value_name = "FILE", required = true)]
        summaries: Vec<PathBuf>,
    },
    /// Exhaustive worst-case error over all orderings of length k.
    ///
    /// Prints `k value sequence` for k = 1..K; sequences list summary
    /// indices in execution order.
    Interleave {
        #[arg(long = "summary", value_name = "FILE", required = true)]
        summaries: Vec<PathBuf>,
        #[arg(long, value_name = "FILE")]
        pre: Option<PathBuf>,
        #[arg(long)]
        k: u32,
    },
    /// Monte Carlo estimate of the error probability of a sequence.
    ///
    /// Prints `estimate <p> ± <std_error> (<hits>/<runs>, seed <s>)`.
    Simulate {
        #[command(flatten)]
        chains: ChainArgs,
        #[arg(long, default_value_t = 100_000)]
        runs: u64,
        /// Start state label; omitted means uniform over non-error states.
        #[arg(long, value_name = "LABEL")]
        start: Option<String>,
    },
    /// Write every environment's chain as `<out>/<env>.tra` plus a
    /// `.labels` sidecar (`STATES n` header, then `src dst prob` lines).
    Export {
        #[command(flatten)]
        chains: ChainArgs,
    },
    /// Generate chains for a built-in case study into `--out`: one explicit
    /// chain per environment, `spec.json` referencing them, and the case
    /// configuration (`f1tenth.json` or `tables.json`).
    CaseGen {
        #[arg(long, value_parser = ["taxinet", "f1tenth"])]
        case: String,
        /// `perfect`, `uniform:P` or `neighbor:P`.
        #[arg(long, default_value = "perfect")]
        noise: String,
        /// Use the reduced F1Tenth grid.
        #[arg(long)]
        reduced: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(commands::Status::Ok) => ExitCode::SUCCESS,
        Ok(commands::Status::Negative) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
