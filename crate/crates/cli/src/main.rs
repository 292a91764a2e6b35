//! Command line driver for the floating zone optimisation pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fzmoo::hpo::SearchMethod;
use fzmoo::nsga::{reference_point_count, Algorithm};
use fzmoo::pipeline::{self, Profile, RunConfig, RunDir};
use fzmoo::{ErrorKind, Result};

/// Surrogate-assisted multi-objective optimisation of floating zone growth.
///
/// Stages read and write files in the run directory given by --out. Run them
/// one at a time in the order sample, simulate, hpo, train, optimize,
/// validate, report, or all at once with `run`.
///
/// Exit status: 0 success, 2 usage or configuration error, 3 data error,
/// 4 numeric failure.
#[derive(Debug, Parser)]
#[command(name = "fzmoo", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Master seed; every stage derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Default settings: desk (minutes on a laptop) or paper (full scale).
    #[arg(long, global = true, value_enum, default_value_t = ProfileArg::Desk)]
    profile: ProfileArg,
    /// JSON run configuration. Replaces the profile defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Run directory holding all artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = "run")]
    out: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Only print warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgoArg {
    Nsga2,
    Nsga3,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Random,
    Tpe,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Latin hypercube design, written to design.csv.
    Sample {
        /// Number of samples.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Evaluate design.csv with the built-in simulator into dataset.csv.
    Simulate {
        /// Take an externally computed dataset (x1..x12,y1..y6,feasible) instead.
        #[arg(long, value_name = "FILE")]
        ingest: Option<PathBuf>,
    },
    /// Architecture search by k-fold cross-validation.
    Hpo {
        /// Number of architectures to try.
        #[arg(long)]
        trials: Option<usize>,
        /// Number of folds.
        #[arg(long)]
        folds: Option<usize>,
        /// Search method.
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Training epochs per fold.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train the deep ensemble into model.json.
    Train {
        /// Hidden layer widths, e.g. 32,32,32. Default: best search result.
        #[arg(long, value_delimiter = ',')]
        hidden: Option<Vec<usize>>,
        /// Ensemble size.
        #[arg(long)]
        members: Option<usize>,
        /// Training epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Genetic optimisation on the surrogate.
    Optimize {
        /// Algorithm to run.
        #[arg(long, value_enum)]
        algo: Option<AlgoArg>,
        /// Reference lattice granularity for NSGA-III.
        #[arg(long)]
        g: Option<usize>,
        /// Population size (even).
        #[arg(long)]
        pop: Option<usize>,
        /// Number of generations.
        #[arg(long)]
        gens: Option<usize>,
    },
    /// Recompute selected Pareto solutions with the simulator.
    Validate {
        /// Number of candidates.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Pareto front, parallel coordinates, distributions and statistics.
    Report,
    /// All stages in order.
    Run,
    /// Print the resolved configuration as JSON, a starting point for --config.
    Config,
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::profile(match g.profile {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Paper => Profile::Paper,
        }),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn warn_reference_points(cfg: &RunConfig) -> Result<()> {
    if !cfg.optimize.algorithms.contains(&Algorithm::Nsga3) {
        return Ok(());
    }
    let n_obj = cfg.objective_table()?.len();
    let g = cfg.optimize.granularity;
    match reference_point_count(n_obj, g) {
        Some(count) => log::warn!("NSGA-III with {n_obj} objectives and g = {g} uses {count} reference points"),
        None => log::warn!("NSGA-III with {n_obj} objectives and g = {g}: reference point count overflows"),
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.global)?;
    let dir = RunDir::new(cli.global.out.clone());
    match cli.command {
        Command::Sample { n } => {
            if let Some(n) = n {
                cfg.sample.samples = n;
            }
            cfg.check()?;
            pipeline::sample(&cfg, &dir)?;
        }
        Command::Simulate { ingest } => {
            cfg.check()?;
            pipeline::simulate(&cfg, &dir, ingest.as_deref())?;
        }
        Command::Hpo { trials, folds, method, epochs } => {
            if let Some(t) = trials {
                cfg.hpo.trials = t;
            }
            if let Some(k) = folds {
                cfg.hpo.folds = k;
            }
            if let Some(m) = method {
                cfg.hpo.method = match m {
                    MethodArg::Random => SearchMethod::Random,
                    MethodArg::Tpe => SearchMethod::Tpe,
                };
            }
            if let Some(e) = epochs {
                cfg.hpo.epochs = e;
            }
            cfg.check()?;
            pipeline::search(&cfg, &dir)?;
        }
        Command::Train { hidden, members, epochs } => {
            if hidden.is_some() {
                cfg.train.hidden = hidden;
            }
            if let Some(m) = members {
                cfg.train.members = m;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            cfg.check()?;
            pipeline::train(&cfg, &dir)?;
        }
        Command::Optimize { algo, g, pop, gens } => {
            if let Some(a) = algo {
                cfg.optimize.algorithms = match a {
                    AlgoArg::Nsga2 => vec![Algorithm::Nsga2],
                    AlgoArg::Nsga3 => vec![Algorithm::Nsga3],
                    AlgoArg::Both => vec![Algorithm::Nsga2, Algorithm::Nsga3],
                };
            }
            if let Some(g) = g {
                cfg.optimize.granularity = g;
            }
            if let Some(p) = pop {
                cfg.optimize.population = p;
            }
            if let Some(n) = gens {
                cfg.optimize.generations = n;
            }
            cfg.check()?;
            warn_reference_points(&cfg)?;
            pipeline::optimize(&cfg, &dir)?;
        }
        Command::Validate { n } => {
            if let Some(n) = n {
                cfg.validate.candidates = n;
            }
            cfg.check()?;
            pipeline::validate(&cfg, &dir)?;
        }
        Command::Report => {
            cfg.check()?;
            pipeline::write_report(&cfg, &dir)?;
        }
        Command::Config => {
            cfg.check()?;
            println!("{}", cfg.to_json());
        }
        Command::Run => {
            cfg.check()?;
            warn_reference_points(&cfg)?;
            pipeline::run_all(&cfg, &dir)?;
        }
    }
    Ok(())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

fn main() -> ExitCode {
    // Help and version exit 0, parse errors exit 2.
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    let level = if cli.global.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
