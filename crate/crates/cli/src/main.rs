mod commands;
mod error;
mod samples;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "rnic", version, about = "Reaction networks in interacting compartments")]
struct Cli {
    /// Worker threads for parallel sections (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a model file and print diagnostics.
    Validate(ModelArg),
    /// Simulate one trajectory and print a summary.
    Simulate(SimulateArgs),
    /// Classify a coarse state as recurrent or transient.
    Classify(ClassifyArgs),
    /// Check a Lyapunov drift inequality over a finite region.
    Lyapunov(LyapunovArgs),
    /// Tabulate the product-form stationary law.
    Stationary(StationaryArgs),
    /// Sample many independent trajectories at fixed times.
    Ensemble(EnsembleArgs),
    /// Compare a long simulation with the stationary law.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct ModelArg {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    t_end: f64,
    #[arg(long, default_value_t = rnic_core::sim::DEFAULT_MAX_EVENTS)]
    max_events: u64,
    /// Initial compartments, e.g. "[(3,4),(0,1)]".
    #[arg(long, default_value = "[]")]
    init: String,
    /// Where to write the event log (JSON lines).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fail with exit code 4 when the event cap is hit.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Coarse state such as "{(2):1}", or a compartment list such as "[(2)]".
    #[arg(long, default_value = "{}")]
    state: String,
    #[arg(long, default_value_t = 8)]
    depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Recurrence,
    Transience,
}

#[derive(Debug, Args)]
struct LyapunovArgs {
    #[arg(long)]
    model: PathBuf,
    /// Built-in name or expression over species totals and C.
    #[arg(long = "function", visible_alias = "v")]
    function: String,
    #[arg(long, default_value_t = 3)]
    max_c: usize,
    #[arg(long, default_value_t = 0)]
    min_c: usize,
    /// Per-compartment content bounds, one per species, e.g. "6,6".
    #[arg(long = "box")]
    bounds: String,
    /// Cap on the summed species count over the whole state.
    #[arg(long)]
    max_total: Option<u64>,
    #[arg(long, value_enum, default_value_t = ModeArg::Recurrence)]
    mode: ModeArg,
    /// Compartment counts allowed to violate the inequality, e.g. "0-3" or "1,2".
    #[arg(long)]
    exceptional_c: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RouteArg {
    Auto,
    ClosedForm,
    Cme,
}

#[derive(Debug, Args)]
struct StationaryArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "box")]
    bounds: String,
    #[arg(long, value_enum, default_value_t = RouteArg::Auto)]
    route: RouteArg,
    /// Where to write the alpha table.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Args)]
struct EnsembleArgs {
    #[arg(long)]
    model: PathBuf,
    /// Sample times: "linspace:a:b:k" or a comma-separated list.
    #[arg(long)]
    samples: String,
    #[arg(long, default_value_t = 1)]
    n_traj: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = rnic_core::sim::DEFAULT_MAX_EVENTS)]
    max_events: u64,
    #[arg(long, default_value = "[]")]
    init: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "box")]
    bounds: String,
    #[arg(long)]
    t_end: f64,
    /// Defaults to 10 / min(kappa_E, kappa_C, 1) over the positive values.
    #[arg(long)]
    burn_in: Option<f64>,
    /// Spacing of the samples taken after burn-in.
    #[arg(long, default_value_t = 1.0)]
    dt: f64,
    /// Explicit sample times; those before the burn-in are dropped.
    #[arg(long)]
    samples: Option<String>,
    #[arg(long, default_value_t = 1)]
    n_traj: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = rnic_core::sim::DEFAULT_MAX_EVENTS)]
    max_events: u64,
    #[arg(long, default_value = "[]")]
    init: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not configure {n} threads: {e}");
        }
    }
    let result = match cli.command {
        Command::Validate(a) => commands::validate(&a.model),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Classify(a) => commands::classify(&a),
        Command::Lyapunov(a) => commands::lyapunov(&a),
        Command::Stationary(a) => commands::stationary(&a),
        Command::Ensemble(a) => commands::ensemble(&a),
        Command::Compare(a) => commands::compare(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
