mod artifact;
mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use exit::CliError;

/// Spatial-mixing certificates for the hard-core model on self-avoiding-walk
/// branching trees.
#[derive(Parser, Debug)]
#[command(name = "ssmcert", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Decimal digits of the rounding grid.
    #[arg(long, global = true, default_value_t = 7)]
    pub scale: u32,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Wall-clock budget in seconds for LP searches (per λ in sweeps).
    #[arg(long, global = true)]
    pub budget: Option<u64>,
    /// Exit 4 when the verdict is undecided.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Args, Debug, Clone)]
pub struct MatrixArgs {
    /// Matrix file: a build artifact, a bare matrix file or a certificate.
    #[arg(long)]
    pub matrix: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepMode {
    Wsm,
    Ssm,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Build a branching matrix from a named machine or the cycle-free construction.
    Build {
        /// D_H, D_G or D_prime.
        #[arg(long, conflicts_with = "cycle_free", required_unless_present = "cycle_free")]
        machine: Option<String>,
        /// Cycle cutoff ell (even, 4..=10).
        #[arg(long)]
        cycle_free: Option<usize>,
        /// Trim parents of occupied leaves.
        #[arg(long, requires = "cycle_free")]
        trim: bool,
        /// Homogeneous edge ordering, smallest first.
        #[arg(long, default_value = "NEWS")]
        ordering: String,
        /// Keep the transient origin of named machines.
        #[arg(long)]
        keep_transient: bool,
        /// "auto" reduces by the coarsest consistent partition.
        #[arg(long)]
        reduce: Option<String>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Reduce a matrix by a partition.
    Reduce {
        #[command(flatten)]
        matrix: MatrixArgs,
        /// Partition file (list of blocks); omit for the coarsest consistent partition.
        #[arg(long, conflicts_with = "propose")]
        partition: Option<PathBuf>,
        /// Cluster fixed-point values at this λ, then refine to consistency.
        #[arg(long)]
        propose: Option<String>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Certify or refute weak spatial mixing at λ.
    Certify {
        #[command(flatten)]
        matrix: MatrixArgs,
        #[arg(long)]
        lambda: String,
        /// Minimum alternating rounds N.
        #[arg(long, default_value_t = 1000)]
        rounds: usize,
        /// Comma-separated positive test vector for the Perron bound.
        #[arg(long)]
        test_vector: Option<String>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Search for a pair of swapped cuboids at λ.
    Refute {
        #[command(flatten)]
        matrix: MatrixArgs,
        #[arg(long)]
        lambda: String,
        /// JSON file with fields c_l and c_r; omit for automatic seeds.
        #[arg(long)]
        cuboids: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        slack: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Search for a piecewise-linear potential certifying strong spatial mixing.
    Ssm {
        #[command(flatten)]
        matrix: MatrixArgs,
        #[arg(long)]
        lambda: String,
        #[command(flatten)]
        lp: LpArgs,
        /// CSV file for the refinement trace.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Re-check a certificate from scratch. Exit 0 iff valid.
    Verify { file: PathBuf },
    /// Run certify or the LP over a list of λ and emit a table.
    Sweep {
        #[command(flatten)]
        matrix: MatrixArgs,
        #[arg(long, value_enum, default_value = "wsm")]
        mode: SweepMode,
        /// Comma-separated λ values.
        #[arg(long, conflicts_with_all = ["from", "to", "step"])]
        lambdas: Option<String>,
        #[arg(long, requires_all = ["to", "step"])]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
        #[arg(long)]
        step: Option<String>,
        #[arg(long, default_value_t = 1000)]
        rounds: usize,
        #[command(flatten)]
        lp: LpArgs,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check that a machine's walks all appear in the finite SAW tree.
    SawCheck {
        #[arg(long, conflicts_with = "matrix", required_unless_present = "matrix")]
        machine: Option<String>,
        /// Labeled matrix file.
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        radius: i32,
        #[arg(long, default_value_t = 6)]
        depth: usize,
        /// Homogeneous ordering; ignored with --random.
        #[arg(long, default_value = "NEWS")]
        ordering: String,
        /// Number of independent random per-vertex orderings to try.
        #[arg(long)]
        random: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug, Clone)]
pub struct LpArgs {
    /// Initial intervals per type.
    #[arg(long, default_value_t = ssm_core::ssm_lp::DEFAULT_D0)]
    pub d0: usize,
    /// Interval cap per type.
    #[arg(long, default_value_t = ssm_core::ssm_lp::DEFAULT_MAX_D)]
    pub max_d: usize,
    /// Violated rows added per generation round.
    #[arg(long, default_value_t = ssm_core::ssm_lp::DEFAULT_BATCH)]
    pub batch: usize,
    /// Intervals split per refinement round; 0 picks a quarter of all intervals.
    #[arg(long, default_value_t = 0)]
    pub top_n: usize,
    /// Rounding ladder for the potential, comma-separated digits.
    #[arg(long, default_value = "9,12,15")]
    pub digits: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.global.jobs > 0 {
        // ignore a pool that is already set up
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.global.jobs).build_global();
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code as u8)
        }
    }
}
