//! `hoikin`: forward/inverse kinematics, contact labels, metrics and
//! benchmarks from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "hoikin", version, about = "Contact-driven human kinematics toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Joint positions of a pose.
    Fk(FkArgs),
    /// Contact labels for a scene's object points.
    Contact(ContactArgs),
    /// Drive the contacted joint to its contact region.
    Ik(IkArgs),
    /// Chamfer and Procrustes-aligned Chamfer distances between two meshes.
    Eval(EvalArgs),
    /// Solver sweep over a synthetic suite.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    /// Markdown table (ik and bench).
    Md,
    /// Compact binary labels (contact).
    Bin,
}

#[derive(Args)]
pub struct Output {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
pub struct FkArgs {
    /// Skeleton JSON; defaults to $HOIKIN_SKELETON, then the bundled skeleton.
    #[arg(long)]
    skeleton: Option<PathBuf>,
    /// Pose JSON with `theta` (one axis-angle per joint) and `translation`.
    #[arg(long)]
    pose: PathBuf,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
pub struct ContactArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    skeleton: Option<PathBuf>,
    /// Contact distance in meters; points at or beyond it are no-contact.
    #[arg(long, default_value_t = hoi_kinematics::contact::DEFAULT_CONTACT_THRESHOLD)]
    threshold: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverChoice {
    Neural,
    Trm,
    /// Run both and compare.
    Both,
}

#[derive(Args, Default)]
pub struct SolverArgs {
    /// Solver settings JSON; individual flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Twist/swing bound in degrees.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eps1: Option<f64>,
    #[arg(long)]
    eps2: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["scene", "problems"])))]
pub struct IkArgs {
    /// Scene JSON; the target comes from its contact labels.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Problem JSON: one problem, a list of problems or a synthetic suite.
    #[arg(long)]
    problems: Option<PathBuf>,
    #[arg(long)]
    skeleton: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SolverChoice::Neural)]
    solver: SolverChoice,
    #[command(flatten)]
    solver_args: SolverArgs,
    #[arg(long, default_value_t = hoi_kinematics::contact::DEFAULT_CONTACT_THRESHOLD)]
    threshold: f64,
    /// Also write the optimized pose (single problem) or poses as JSON.
    #[arg(long)]
    pose_out: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Predicted mesh vertices (.obj, .json or binary points).
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth mesh vertices with the same topology.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value = "")]
    sequence: String,
    #[arg(long, default_value_t = 0)]
    frame: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    skeleton: Option<PathBuf>,
    /// Number of synthetic problems.
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Comma-separated angle bounds in degrees.
    #[arg(long, value_delimiter = ',', default_values_t = vec![30.0, 60.0, 90.0])]
    gammas: Vec<f64>,
    #[arg(long, value_enum, default_value_t = SolverChoice::Both)]
    solver: SolverChoice,
    #[command(flatten)]
    solver_args: SolverArgs,
    /// Seed of the synthetic suite.
    #[arg(long = "suite-seed", default_value_t = 0)]
    suite_seed: u64,
    /// Write the markdown summary here instead of standard error.
    #[arg(long)]
    markdown: Option<PathBuf>,
    /// Write per-problem outcomes as CSV.
    #[arg(long)]
    outcomes: Option<PathBuf>,
    /// Write the generated suite as JSON.
    #[arg(long = "suite-out")]
    suite_out: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fk(a) => commands::fk(a),
        Command::Contact(a) => commands::contact(a),
        Command::Ik(a) => commands::ik(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
