use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thinning_core::{Error, ErrorClass};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "thinning", version, about = "Simulate and estimate multimode Poisson beams seen through thinning layers")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate layer counts from a parameter file.
    Simulate(SimulateArgs),
    /// Estimate (q, p) with covariance, Wald intervals and the decreasing projection of q.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study and write its tables.
    McStudy(StudyArgs),
    /// Project a vector onto decreasing vectors.
    Isotonic(IsotonicArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Direct,
    Mechanistic,
}

impl From<Mode> for thinning_core::SimMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Direct => thinning_core::SimMode::Direct,
            Mode::Mechanistic => thinning_core::SimMode::Mechanistic,
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Parameter file `{s, q, p, lambda_t, n, k}`.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::Direct)]
    mode: Mode,
    /// Output directory for `counts.csv` and `stats.json`; counts go to stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Parameter file; supplies `s` and `lambda_t`, and the model to simulate when `--data` is absent.
    #[arg(long)]
    config: PathBuf,
    /// Count CSV with header `rep,layer_1,...,layer_k`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::Direct)]
    mode: Mode,
    /// Clamp an infeasible solution into the parameter space (heuristic).
    #[arg(long)]
    clamp_infeasible: bool,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Tolerance for reading flat regions off the projected q (heuristic).
    #[arg(long, default_value_t = 1e-12)]
    flat_tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StudyArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::Direct)]
    mode: Mode,
    #[arg(long)]
    clamp_infeasible: bool,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 1000)]
    replications: usize,
    /// Comma-separated sample sizes; defaults to `n` from the parameter file.
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long, default_value = "mc-study")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct IsotonicArgs {
    /// Inline vector, e.g. `0.35,0.45,0.2` or `[0.35,0.45,0.2]`.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    vector: Option<String>,
    /// File holding the vector in either inline form.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Tolerance for flat regions of the projection.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Covariance JSON (as written by `estimate`) to sample the limit law from.
    #[arg(long, requires = "out")]
    covariance: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Usage => 2,
        ErrorClass::Numerical => 3,
        ErrorClass::Io => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("thinning: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::McStudy(a) => commands::mc_study(a),
        Command::Isotonic(a) => commands::isotonic(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            println!("{body}");
            eprintln!("thinning: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
