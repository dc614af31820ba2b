use std::path::PathBuf;
use std::process::ExitCode;

use bde::intervals::Method;
use bde::NoiseModel;
use bde_cli::commands;
use bde_cli::config::{Experiment, SimulatorKind};
use bde_cli::error::exit;
use bde_cli::runner::{self, with_jobs};
use bde_cli::{CliError, ExperimentConfig, Overrides};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bde", version, about = "Bootstrapped deep ensembles: training and coverage experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file; defaults apply to anything it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0: one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Dataset CSV (features, then target); overrides `dataset`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long = "n-sim")]
    n_sim: Option<usize>,
    /// Ensemble members.
    #[arg(long)]
    m: Option<usize>,
    /// Retrain fraction.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    alpha: Vec<f64>,
    #[arg(long, value_parser = parse_method)]
    method: Vec<Method>,
    #[arg(long, value_parser = parse_noise)]
    noise: Option<NoiseModel>,
    #[arg(long, value_parser = parse_simulator)]
    simulator: Option<SimulatorKind>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: bde::Error| e.to_string())
}

fn parse_noise(s: &str) -> Result<NoiseModel, String> {
    s.parse().map_err(|e: bde::Error| e.to_string())
}

fn parse_simulator(s: &str) -> Result<SimulatorKind, String> {
    s.parse()
}

#[derive(Subcommand)]
enum Command {
    /// Build the ground truth and write it out.
    Simulate(Common),
    /// Train one method on a dataset and save the model.
    Train(Common),
    /// Intervals from a saved model on a CSV.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory written by `train` (its `model` subdirectory).
        #[arg(long)]
        model: PathBuf,
    },
    /// Coverage of BDE, DE and NB on simulated replicates.
    Exp1(Common),
    /// Training and data variance against training-set size.
    Exp2(Common),
    /// BDE variance decomposition against a fresh-target oracle.
    Exp3(Common),
    /// Interval widths of an overfitted ensemble.
    Exp4(Common),
    /// Coverage runs under other noise, no L2, a network simulator and an r sweep.
    Variants(Common),
    /// Print a run directory's summary as a table.
    Report {
        /// Run directory containing summary.json.
        dir: PathBuf,
    },
}

fn load(c: &Common, experiment: Option<Experiment>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(e) = experiment {
        cfg.experiment = e;
    }
    cfg.apply(&Overrides {
        seed: c.seed,
        out: c.out.clone(),
        dataset: c.data.clone(),
        n_sim: c.n_sim,
        members: c.m,
        retrain_fraction: c.r,
        alphas: c.alpha.clone(),
        methods: c.method.clone(),
        noise: c.noise,
        simulator: c.simulator,
    });
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let done = |cfg: &ExperimentConfig| eprintln!("wrote {}", cfg.out.display());
    match cli.command {
        Command::Simulate(c) => {
            let cfg = load(&c, None)?;
            with_jobs(c.jobs, || commands::simulate(&cfg))??;
            done(&cfg);
        }
        Command::Train(c) => {
            let cfg = load(&c, None)?;
            let method = cfg.methods[0];
            with_jobs(c.jobs, || commands::train(&cfg, method))??;
            done(&cfg);
        }
        Command::Evaluate { common, model } => {
            let cfg = load(&common, None)?;
            let data = cfg
                .dataset
                .clone()
                .ok_or_else(|| CliError::config("evaluate needs --data or `dataset`"))?;
            let s = commands::evaluate(&cfg, &model, &data)?;
            println!("{} on {} points: rmse {:.4}", s.method, s.n_points, s.rmse);
            for (a, h) in s.pi_hit_rate {
                println!("  PI alpha={a}: {:.3} of targets inside", h);
            }
        }
        Command::Exp1(c) => {
            let cfg = load(&c, Some(Experiment::Exp1))?;
            with_jobs(c.jobs, || runner::run_exp1(&cfg))??;
            print!("{}", commands::report(&cfg.out)?);
        }
        Command::Exp2(c) => {
            let cfg = load(&c, Some(Experiment::Exp2))?;
            with_jobs(c.jobs, || runner::run_exp2(&cfg))??;
            print!("{}", commands::report(&cfg.out)?);
        }
        Command::Exp3(c) => {
            let cfg = load(&c, Some(Experiment::Exp3))?;
            with_jobs(c.jobs, || runner::run_exp3(&cfg))??;
            print!("{}", commands::report(&cfg.out)?);
        }
        Command::Exp4(c) => {
            let cfg = load(&c, Some(Experiment::Exp4))?;
            with_jobs(c.jobs, || runner::run_exp4(&cfg))??;
            print!("{}", commands::report(&cfg.out)?);
        }
        Command::Variants(c) => {
            let cfg = load(&c, None)?;
            with_jobs(c.jobs, || runner::run_variants(&cfg))??;
            print!("{}", commands::report(&cfg.out)?);
        }
        Command::Report { dir } => print!("{}", commands::report(&dir)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
