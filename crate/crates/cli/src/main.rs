//! `bicausal-ot`: exact bicausal optimal transport from the command line.
//!
//! Exit codes: 0 on success, 1 on a domain error (structured JSON on
//! stderr), 2 on a usage error.

mod commands;
mod output;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use output::Failure;

#[derive(Debug, Parser)]
#[command(name = "bicausal-ot", version, about = "Exact bicausal optimal transport between finite path measures")]
struct Cli {
    /// Worker threads for internal parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Also write `<out>.meta.json` with a timestamp and the invocation.
    #[arg(long, requires = "out")]
    pub meta: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Problem {
    /// Classical transport over all couplings.
    Kp,
    /// Transport over bicausal couplings.
    Bc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Solver {
    /// Backward induction for separable costs, enumeration otherwise.
    Auto,
    Dp,
    Oracle,
    Flat,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate a measure, coupling, or any other artifact.
    Validate {
        file: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Solve a transport problem exactly.
    Solve {
        #[arg(long, value_enum)]
        problem: Problem,
        /// `metric:p` or `table:FILE`.
        #[arg(long)]
        cost: String,
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        solver: Solver,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Causality, bicausality, and Monge checks of a coupling.
    Check {
        #[arg(long)]
        pi: PathBuf,
        #[arg(long)]
        causal: bool,
        #[arg(long)]
        bicausal: bool,
        #[arg(long)]
        monge: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Lift a coupling to a bijection of micro-atomized spaces.
    Lift {
        #[arg(long)]
        pi: PathBuf,
        /// Biadapted lift of a bicausal coupling.
        #[arg(long, conflicts_with = "static_lift", required_unless_present = "static_lift")]
        biadapted: bool,
        /// One-step lift of any coupling.
        #[arg(long = "static")]
        static_lift: bool,
        #[arg(long, default_value_t = bicausal_core::lifting::DEFAULT_BUDGET)]
        budget: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Project a lift back to a coupling of the base spaces.
    Project {
        #[arg(long)]
        lift: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Biadapted Monge approximations of a bicausal coupling.
    Approx {
        #[arg(long)]
        pi: PathBuf,
        /// Comma-separated target meshes; `singleton` for the finest partition.
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.25,0.125,singleton")]
        mesh: Vec<String>,
        #[arg(long, default_value = "1")]
        p: String,
        #[arg(long, default_value_t = bicausal_core::lifting::DEFAULT_BUDGET)]
        budget: u64,
        /// Adapted but non-injective maps, forgetting the Y-side slots.
        #[arg(long)]
        surjective_only: bool,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Decide whether some biadapted bijection pushes `mu` to `nu`.
    Feasibility {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Generate instances.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Re-check every invariant of a serialized artifact.
    Verify {
        file: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum GenKind {
    /// Random tree measures and a random bicausal coupling.
    RandomTree {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        steps: usize,
        #[arg(long, default_value_t = 2)]
        branching: usize,
        #[arg(long = "denom", default_value_t = 4)]
        denominator: u64,
        /// Alphabet size per step (default: the branching).
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Pair with an informative first step on one side only.
    InfoGap {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Uniform-then-Dirac against uniform-then-uniform.
    PaperExample {
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// A frozen fixture: f1, aw, dyadic, or kr.
    Fixture {
        name: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Io(format!("cannot configure threads: {e}")))?;
    }
    match cli.command {
        Command::Validate { file, out } => commands::validate(&file, &out),
        Command::Solve { problem, cost, mu, nu, solver, out } => {
            commands::solve(problem, &cost, &mu, &nu, solver, &out)
        }
        Command::Check { pi, causal, bicausal, monge, out } => {
            let all = !(causal || bicausal || monge);
            commands::check(&pi, causal || all, bicausal || all, monge || all, &out)
        }
        Command::Lift { pi, biadapted: _, static_lift, budget, out } => commands::lift(&pi, static_lift, budget, &out),
        Command::Project { lift, out } => commands::project(&lift, &out),
        Command::Approx { pi, mesh, p, budget, surjective_only, csv, out } => {
            commands::approx(&pi, &mesh, &p, budget, surjective_only, csv.as_deref(), &out)
        }
        Command::Feasibility { mu, nu, out } => commands::feasibility(&mu, &nu, &out),
        Command::Gen { kind } => commands::gen(kind),
        Command::Verify { file, out } => verify::verify(&file, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprint!("{}", failure.report());
            ExitCode::from(1)
        }
    }
}
