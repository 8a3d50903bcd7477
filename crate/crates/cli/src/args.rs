//! Command-line surface: subcommands, flags, and global configuration.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::report::Format;

#[derive(Parser, Debug)]
#[command(
    name = "finram",
    version,
    about = "Finite-scale engine for tree-forest combinatorics, diagonalization \
             stage machines, and reduction checking between finite problems",
    propagate_version = true
)]
pub struct Cli {
    /// Report rendering: human text or the versioned line schema
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Text)]
    pub format: FormatArg,

    /// Seed for every sampled enumeration (exhaustive modes ignore it)
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Directory for persisted case artifacts (counterexamples, failing runs)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormatArg {
    Text,
    Structured,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Text => Format::Text,
            FormatArg::Structured => Format::Structured,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Re-derive a structural law exhaustively and report pass/fail
    Verify {
        #[command(subcommand)]
        target: VerifyTarget,
    },
    /// Run a stage machine and emit its trace and diagnosis
    Simulate {
        #[command(subcommand)]
        machine: SimulateTarget,
    },
    /// Check a strength relation between two finite problems
    Check {
        #[command(subcommand)]
        what: CheckTarget,
    },
    /// Emit derived encodings of a coloring
    Emit {
        #[command(subcommand)]
        what: EmitTarget,
    },
    /// Run every case of a sweep specification file
    Sweep {
        /// Sweep specification file
        file: PathBuf,
        /// Which case records to persist under --out
        #[arg(long, value_enum, default_value_t = ArtifactPolicy::Failures)]
        artifacts: ArtifactPolicy,
    },
    /// Re-run a persisted case record and compare verdicts
    Replay {
        /// Case record file written by a sweep, check, or verify run
        file: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArtifactPolicy {
    /// Persist only failing cases
    Failures,
    /// Persist every case
    All,
}

#[derive(Subcommand, Debug)]
pub enum VerifyTarget {
    /// Every coloring of every found forest has a level-monochromatic terminal
    Combcore {
        /// Number of forest levels and colors
        #[arg(long)]
        k: u32,
        /// Points live in [0, universe)
        #[arg(long)]
        universe: u32,
        /// Maximum trees per level-0 sequence
        #[arg(long, default_value_t = 16)]
        budget: usize,
        /// Search stage horizon
        #[arg(long, default_value_t = 64)]
        stage: u32,
    },
    /// Randomized searches all pass the independent forest re-derivation
    Forest {
        /// Number of randomized search cases
        #[arg(long, default_value_t = 1000)]
        count: u32,
        /// Fix the level count (otherwise drawn from 1..=3 per case)
        #[arg(long)]
        k: Option<u32>,
        /// Largest universe drawn per case
        #[arg(long, default_value_t = 12)]
        universe: u32,
        /// Search stage horizon
        #[arg(long, default_value_t = 64)]
        stage: u32,
    },
    /// Probe dichotomy: a found sequence or a scan-verified empty tail
    Finseq {
        /// Points live in [0, universe)
        #[arg(long, default_value_t = 10)]
        universe: u32,
        /// Saturating stage horizon
        #[arg(long, default_value_t = 64)]
        stage: u32,
        /// Trees requested per found sequence
        #[arg(long, default_value_t = 8)]
        trees: usize,
    },
    /// Built second-order sequences re-validate against the generating rule
    Twoseq {
        /// Points live in [0, universe)
        #[arg(long, default_value_t = 12)]
        universe: u32,
        /// Stage horizon for probes and builds
        #[arg(long, default_value_t = 48)]
        stage: u32,
        /// Trees per built sequence
        #[arg(long, default_value_t = 3)]
        count: usize,
        /// Trees in the base sequence feeding the build
        #[arg(long, default_value_t = 12)]
        trees: usize,
    },
}

#[derive(Subcommand, Debug)]
pub enum SimulateTarget {
    /// Pair-coloring diagonalization: condition chain plus per-limit-map diagnosis
    Nured {
        /// Forest levels per stage search
        #[arg(long)]
        k: u32,
        /// Scan space is [0, universe)
        #[arg(long)]
        universe: u32,
        /// Functional table file
        #[arg(long)]
        psi: PathBuf,
        /// Search stage horizon
        #[arg(long, default_value_t = 64)]
        stage: u32,
        /// Maximum trees per level-0 sequence
        #[arg(long, default_value_t = 16)]
        trees: usize,
        /// Maximum extension rounds
        #[arg(long, default_value_t = 8)]
        rounds: u32,
        /// Admissibility: each limit color needs at least this many rows
        #[arg(long, default_value_t = 4)]
        min_count: u32,
    },
    /// Chain-of-blocks assembly: companion colorings, logs, and the verdict
    Coh {
        /// Assembly slot count
        #[arg(long)]
        k: u32,
        /// Stage limit defaults to this bound
        #[arg(long)]
        universe: u32,
        /// Functional table file
        #[arg(long)]
        psi: PathBuf,
        /// Stable pair-coloring file
        #[arg(long)]
        d: PathBuf,
        /// Stages to run (defaults to --universe)
        #[arg(long)]
        stages: Option<u32>,
        /// Width threshold for the verification verdict
        #[arg(long, default_value_t = 3)]
        theta: u32,
    },
    /// Requirement ledger machine: per-stage reports and the full final dump
    Nscred {
        /// Stages to run
        #[arg(long)]
        stages: u32,
        /// Reservoir bound
        #[arg(long)]
        universe: u32,
        /// Branching width threshold
        #[arg(long)]
        theta: u32,
        /// First functional table file
        #[arg(long)]
        phi: PathBuf,
        /// Second functional table file
        #[arg(long)]
        psi: PathBuf,
        /// Column bound for condition extensions
        #[arg(long, default_value_t = 2)]
        cols: u32,
        /// Length bound for condition extensions
        #[arg(long, default_value_t = 4)]
        len: u32,
        /// Depth cut for witness trees
        #[arg(long, default_value_t = 3)]
        depth: u32,
        /// Search step budget per stage
        #[arg(long, default_value_t = 200_000)]
        budget: u64,
    },
}

#[derive(Subcommand, Debug)]
pub enum CheckTarget {
    /// Does the candidate reduce problem Q to problem P in the given mode?
    Reduction {
        /// Source problem file
        #[arg(long)]
        q: PathBuf,
        /// Target problem file
        #[arg(long)]
        p: PathBuf,
        /// Reduction mode: u, su, c, or sc
        #[arg(long)]
        mode: String,
        /// Forward (instance-transform) table file; repeatable
        #[arg(long)]
        forward: Vec<PathBuf>,
        /// Backward (solution-transform) table file; repeatable
        #[arg(long)]
        backward: Vec<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum EmitTarget {
    /// Binary digit columns of a coloring into the k-th tower count
    Digits {
        /// Tower index fixing the color-count radix
        #[arg(long)]
        k: u32,
        /// Unary coloring file
        #[arg(long)]
        coloring: PathBuf,
        /// Digit columns to print per point (defaults to width + 1)
        #[arg(long)]
        cols: Option<u32>,
    },
}
