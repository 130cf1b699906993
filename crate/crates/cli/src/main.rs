//! Command-line surface for training-protocol search: enumerate the space,
//! run and resume evolutionary searches, score candidates through external
//! trainers or the built-in surrogate, and produce the analysis reports
//! (rank correlation, sweeps, ablations, schedule tables).

mod analyze_cmd;
mod search_cmd;
mod support;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use analyze_cmd::{AblateParams, SweepParams};
use search_cmd::{EvalOneParams, RandomParams, RunParams};
use support::EvaluatorArgs;

#[derive(Parser)]
#[command(
    name = "protosearch",
    version,
    about = "Evolutionary search over scene-text-recognition training protocols"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search-space operations
    Space {
        #[command(subcommand)]
        command: SpaceCommand,
    },
    /// Evolutionary protocol search
    Search {
        #[command(subcommand)]
        command: SearchCommand,
    },
    /// Baseline strategies at a matched budget
    Baseline {
        #[command(subcommand)]
        command: BaselineCommand,
    },
    /// Score single candidates
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Reports: rank correlation, sweeps, ablations
    Analyze {
        #[command(subcommand)]
        command: AnalyzeCommand,
    },
    /// Emit an iteration,lr CSV for a schedule
    LrTable {
        /// Schedule token: constant, ms-0.6, ms-0.6-0.9, ms-0.3-0.6-0.9
        #[arg(long, value_name = "TOK")]
        schedule: String,
        /// Initial learning rate
        #[arg(long, value_name = "X")]
        lr: f64,
        /// Total training iterations
        #[arg(long, value_name = "N")]
        total: u64,
    },
}

#[derive(Subcommand)]
enum SpaceCommand {
    /// List every candidate (canonical encodings) or just the count
    Enumerate {
        /// Search-space override file (JSON); defaults to the built-in space
        #[arg(long, value_name = "FILE")]
        space: Option<PathBuf>,
        /// Print only the candidate count
        #[arg(long)]
        count_only: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Trajectory seed: sampling, crossover, and mutation draws
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    evaluator: EvaluatorArgs,
    /// Evaluation fidelity: proxy or full
    #[arg(long, default_value = "proxy")]
    fidelity: String,
    /// Initial random candidates
    #[arg(long = "m-init", value_name = "N", default_value_t = 16)]
    m_init: usize,
    /// Children per generation (even; half crossover, half mutation)
    #[arg(long, value_name = "N", default_value_t = 8)]
    m: usize,
    /// Generations
    #[arg(long, value_name = "N", default_value_t = 10)]
    t: usize,
    /// Parent pool size
    #[arg(long, value_name = "N", default_value_t = 4)]
    k: usize,
    /// Per-gene mutation probability
    #[arg(long, value_name = "P", default_value_t = 0.2)]
    p: f64,
    /// Search-space override file (JSON)
    #[arg(long, value_name = "FILE")]
    space: Option<PathBuf>,
    /// Run directory for manifest, trace, and report
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Write the manifest and exit without evaluating
    #[arg(long)]
    manifest_only: bool,
}

#[derive(Subcommand)]
enum SearchCommand {
    /// Start a fresh evolutionary search
    Run(RunArgs),
    /// Continue an interrupted run from its trace
    Resume {
        /// Run directory created by `search run`
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum BaselineCommand {
    /// Uniform random sampling at a fixed evaluation budget
    Random {
        /// Number of samples
        #[arg(long, value_name = "N", default_value_t = 32)]
        n: usize,
        /// Sampling seed
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        evaluator: EvaluatorArgs,
        /// Evaluation fidelity: proxy or full
        #[arg(long, default_value = "proxy")]
        fidelity: String,
        /// Search-space override file (JSON)
        #[arg(long, value_name = "FILE")]
        space: Option<PathBuf>,
        /// Run directory for manifest, trace, curve, and report
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Write the manifest and exit without evaluating
        #[arg(long)]
        manifest_only: bool,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Score one candidate and print the result JSON
    One {
        /// Candidate JSON file, or builtin:baseline / builtin:searched
        #[arg(long, value_name = "FILE")]
        candidate: String,
        #[command(flatten)]
        evaluator: EvaluatorArgs,
        /// Evaluation fidelity: proxy or full
        #[arg(long, default_value = "proxy")]
        fidelity: String,
        /// Training seed passed to the evaluator
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Search-space override file (JSON)
        #[arg(long, value_name = "FILE")]
        space: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Kendall rank correlation between two score files
    Tau {
        /// Scores, one per line (same path as --b: two comma columns)
        #[arg(long, value_name = "FILE")]
        a: PathBuf,
        /// Scores, one per line
        #[arg(long, value_name = "FILE")]
        b: PathBuf,
        /// Statistic variant: b (tie-corrected) or a
        #[arg(long, default_value = "b")]
        variant: String,
    },
    /// Score a base candidate across one hyperparameter's domain
    Sweep {
        /// Hyperparameter name to sweep
        #[arg(long, value_name = "NAME")]
        hp: String,
        /// Base candidate file, or builtin:baseline / builtin:searched
        #[arg(long, value_name = "FILE")]
        base: String,
        #[command(flatten)]
        evaluator: EvaluatorArgs,
        /// Evaluation fidelity: proxy or full
        #[arg(long, default_value = "proxy")]
        fidelity: String,
        /// Training seed passed to the evaluator
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Search-space override file (JSON)
        #[arg(long, value_name = "FILE")]
        space: Option<PathBuf>,
    },
    /// Build base->target ablation variants (optionally scored)
    Ablate {
        /// Base candidate file, or builtin:baseline / builtin:searched
        #[arg(long, value_name = "FILE")]
        base: String,
        /// Target candidate file, or builtin:baseline / builtin:searched
        #[arg(long, value_name = "FILE")]
        target: String,
        /// Groups: `;`-separated, each `base`, `full`, or field,field,...
        #[arg(long, value_name = "SPEC")]
        groups: String,
        #[command(flatten)]
        evaluator: EvaluatorArgs,
        /// Evaluation fidelity: proxy or full
        #[arg(long, default_value = "proxy")]
        fidelity: String,
        /// Training seed passed to the evaluator
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Search-space override file (JSON)
        #[arg(long, value_name = "FILE")]
        space: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli, command_line: Vec<String>) -> support::CliResult<()> {
    match cli.command {
        Command::Space { command } => match command {
            SpaceCommand::Enumerate { space, count_only } => {
                analyze_cmd::space_enumerate(space.as_deref(), count_only)
            }
        },
        Command::Search { command } => match command {
            SearchCommand::Run(args) => search_cmd::search_run(
                RunParams {
                    seed: args.seed,
                    evaluator: args.evaluator,
                    fidelity: args.fidelity,
                    m_init: args.m_init,
                    m: args.m,
                    t: args.t,
                    k: args.k,
                    p: args.p,
                    space: args.space,
                    out: args.out,
                    manifest_only: args.manifest_only,
                },
                command_line,
            ),
            SearchCommand::Resume { out } => search_cmd::search_resume(&out),
        },
        Command::Baseline { command } => match command {
            BaselineCommand::Random {
                n,
                seed,
                evaluator,
                fidelity,
                space,
                out,
                manifest_only,
            } => search_cmd::baseline_random(
                RandomParams {
                    n,
                    seed,
                    evaluator,
                    fidelity,
                    space,
                    out,
                    manifest_only,
                },
                command_line,
            ),
        },
        Command::Eval { command } => match command {
            EvalCommand::One {
                candidate,
                evaluator,
                fidelity,
                seed,
                space,
            } => search_cmd::eval_one(EvalOneParams {
                candidate,
                evaluator,
                fidelity,
                seed,
                space,
            }),
        },
        Command::Analyze { command } => match command {
            AnalyzeCommand::Tau { a, b, variant } => analyze_cmd::analyze_tau(&a, &b, &variant),
            AnalyzeCommand::Sweep {
                hp,
                base,
                evaluator,
                fidelity,
                seed,
                space,
            } => analyze_cmd::analyze_sweep(SweepParams {
                hp,
                base,
                evaluator,
                fidelity,
                seed,
                space,
            }),
            AnalyzeCommand::Ablate {
                base,
                target,
                groups,
                evaluator,
                fidelity,
                seed,
                space,
            } => analyze_cmd::analyze_ablate(AblateParams {
                base,
                target,
                groups,
                evaluator,
                fidelity,
                seed,
                space,
            }),
        },
        Command::LrTable {
            schedule,
            lr,
            total,
        } => analyze_cmd::lr_table(&schedule, lr, total),
    }
}

fn main() -> ExitCode {
    // Die silently on a closed pipe, like any stream-producing tool.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let command_line: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful outputs, not usage errors.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli, command_line) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("protosearch: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
