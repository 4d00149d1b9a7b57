use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use smallcell::harness::{exit_code, run_experiment_traced, ExperimentSpec, Mode};
use smallcell::Error;

/// Speed-based power control experiments for linear small-cell networks.
#[derive(Parser)]
#[command(name = "smallcell", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Handover metrics, load factor and busy probability from the model.
    Analytic(Common),
    /// Optimal speed-class powers and the continuous linear law.
    OptimizePower(Common),
    /// Cell size minimizing the joint load and power cost.
    CellSize(Common),
    /// Simulate the configured policy.
    Simulate(Common),
    /// Simulate the alpha rule over the configured alpha grid.
    SweepAlpha(Common),
    /// Model versus simulation of the handover metrics.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment document (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of replications; seeds are extended consecutively.
    #[arg(long)]
    replications: Option<usize>,
    /// Stream simulator events to stderr as time,event,user,cell,value.
    #[arg(long)]
    trace: bool,
    /// Worker threads for grid points and replications.
    #[arg(long)]
    parallel: Option<usize>,
}

impl Command {
    fn split(self) -> (Mode, Common) {
        match self {
            Command::Analytic(c) => (Mode::Analytic, c),
            Command::OptimizePower(c) => (Mode::OptimizePower, c),
            Command::CellSize(c) => (Mode::CellSize, c),
            Command::Simulate(c) => (Mode::Simulate, c),
            Command::SweepAlpha(c) => (Mode::SweepAlpha, c),
            Command::Validate(c) => (Mode::Validate, c),
        }
    }
}

fn run(mode: Mode, args: Common) -> Result<(), Error> {
    if let Some(k) = args.parallel {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("--parallel: {e}")))?;
    }
    let spec = ExperimentSpec::load(&args.config, Some(mode))?.with_seeds(args.seed.as_deref(), args.replications)?;
    log::info!("{mode}: seeds {:?}", spec.seeds);

    let mut trace_sink = BufWriter::new(io::stderr());
    let trace: Option<&mut dyn Write> = if args.trace { Some(&mut trace_sink) } else { None };
    let outcome = run_experiment_traced(&spec, trace)?;

    match &args.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| Error::Config(format!("creating {}: {e}", path.display())))?;
            outcome.table.write_csv(BufWriter::new(file))?;
        }
        None => outcome.table.write_csv(io::stdout().lock())?,
    }
    if outcome.insufficient_data {
        return Err(Error::InsufficientData(
            "fewer than 30 batches carried data; widen the horizon or add replications".into(),
        ));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (mode, args) = Cli::parse().command.split();
    match run(mode, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
