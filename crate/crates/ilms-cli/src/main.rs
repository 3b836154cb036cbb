//! Command-line front end binding JSON network configurations to the
//! simulator, the theory engine, and the experiment suites.
//!
//! Exit codes: 0 success, 2 usage/config error, 3 instability, 4 simulator
//! divergence, 5 I/O failure, 6 numerical non-convergence.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ilms_core::error::Error;
use ilms_core::experiments::{run_experiment, table1_suite, theory_curves, ExperimentSpec};
use ilms_core::network::NetworkSpec;
use ilms_core::scalar::power_db;
use ilms_core::simulator::monte_carlo;
use ilms_core::theory::{
    build_chain, mean_stability_bound, spectral_radius, steady_state, write_curves_csv,
    SpectralData, SteadySummary, RADIUS_MAX_ITERS,
};

const EXIT_USAGE: u8 = 2;
const EXIT_INSTABILITY: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;
const EXIT_IO: u8 = 5;
const EXIT_NUMERICAL: u8 = 6;

const DEFAULT_ITERATIONS: usize = 1000;
const DEFAULT_REPLICAS: usize = 100;

#[derive(Parser)]
#[command(
    name = "ilms",
    version,
    about = "Incremental LMS ring network: simulation, closed-form theory, and comparisons"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo simulator and write simulation.csv
    Simulate(RunArgs),
    /// Evaluate theory curves and the steady state; write theory.csv and
    /// steady_state.json
    Theory(RunArgs),
    /// Run simulation and theory together; write a comparison report under
    /// <out>/<config-stem>/
    Compare(RunArgs),
    /// Run the 12-scenario white/correlated suite and write table1.csv
    Table1(Table1Args),
    /// Print each node's step-size bound and pass/fail; exit 3 on any fail
    Stability(StabilityArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Network configuration JSON
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Override a config key, e.g. --set mu=0.05 or --set 'w_o=[1,0,0,0]'
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the replica count
    #[arg(long)]
    replicas: Option<usize>,
    /// Override the iteration count
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Args)]
struct Table1Args {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Master seed for the per-row Monte Carlo runs
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replicas per row; 0 skips the simulation column (theory only)
    #[arg(long, default_value_t = 0)]
    replicas: usize,
}

#[derive(Args)]
struct StabilityArgs {
    /// Network configuration JSON
    #[arg(long)]
    config: PathBuf,
    /// Override a config key
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
}

/// A parsed run configuration: the network document plus the simulation
/// budget keys.
struct RunConfig {
    network: NetworkSpec,
    iterations: usize,
    replicas: usize,
}

fn load_config(
    path: &Path,
    overrides: &[String],
    seed: Option<u64>,
    replicas: Option<usize>,
    iterations: Option<usize>,
) -> Result<RunConfig, Error> {
    let text = fs::read_to_string(path)?;
    let mut value: serde_json::Value = serde_json::from_str(&text)?;
    let object = value
        .as_object_mut()
        .ok_or_else(|| Error::Validation("config root must be a JSON object".to_string()))?;

    for entry in overrides {
        let (key, raw) = entry.split_once('=').ok_or_else(|| {
            Error::Validation(format!("override '{entry}' is not of the form key=value"))
        })?;
        let parsed = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        object.insert(key.to_string(), parsed);
    }
    if let Some(seed) = seed {
        object.insert("seed".to_string(), seed.into());
    }

    let iterations = match iterations {
        Some(n) => {
            object.remove("iterations");
            n
        }
        None => match object.remove("iterations") {
            Some(v) => usize_key(&v, "iterations")?,
            None => DEFAULT_ITERATIONS,
        },
    };
    let replicas = match replicas {
        Some(n) => {
            object.remove("replicas");
            n
        }
        None => match object.remove("replicas") {
            Some(v) => usize_key(&v, "replicas")?,
            None => DEFAULT_REPLICAS,
        },
    };

    let network: NetworkSpec = serde_json::from_value(value)?;
    Ok(RunConfig { network, iterations, replicas })
}

fn usize_key(value: &serde_json::Value, key: &str) -> Result<usize, Error> {
    value
        .as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| Error::Validation(format!("'{key}' must be a non-negative integer")))
}

fn cmd_simulate(args: &RunArgs) -> Result<(), Error> {
    let cfg = load_config(&args.config, &args.set, args.seed, args.replicas, args.iterations)?;
    let network = cfg.network.build()?;
    let result = monte_carlo(&network, cfg.iterations, cfg.replicas, cfg.network.seed)?;
    fs::create_dir_all(&args.out)?;
    let mut file = fs::File::create(args.out.join("simulation.csv"))?;
    result.write_csv(&mut file)?;
    Ok(())
}

fn cmd_theory(args: &RunArgs) -> Result<(), Error> {
    let cfg = load_config(&args.config, &args.set, args.seed, args.replicas, args.iterations)?;
    let network = cfg.network.build()?;
    let spectral = SpectralData::from_network(&network)?;
    let chain = build_chain(&network, &spectral)?;
    let rho = spectral_radius(&chain.sweep_matrix, 1e-10, RADIUS_MAX_ITERS)?;
    if rho >= 1.0 {
        return Err(Error::Instability { spectral_radius: rho });
    }
    let (msd, emse) = theory_curves(&chain, network.true_weights(), cfg.iterations)?;
    let summary = SteadySummary {
        msd_db: power_db(steady_state(&chain, &chain.msd_weighting())?),
        emse_db: power_db(steady_state(&chain, &chain.emse_weighting())?),
        spectral_radius: rho,
        stable: true,
    };
    fs::create_dir_all(&args.out)?;
    let mut file = fs::File::create(args.out.join("theory.csv"))?;
    write_curves_csv(&msd, &emse, &mut file)?;
    let json = serde_json::to_string_pretty(&summary)?;
    fs::write(args.out.join("steady_state.json"), json + "\n")?;
    Ok(())
}

fn cmd_compare(args: &RunArgs) -> Result<(), Error> {
    let cfg = load_config(&args.config, &args.set, args.seed, args.replicas, args.iterations)?;
    let label = args
        .config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiment".to_string());
    let spec = ExperimentSpec {
        label,
        network: cfg.network.to_params(),
        seed: cfg.network.seed,
        iterations: cfg.iterations,
        replicas: cfg.replicas,
    };
    let report = run_experiment(&spec)?;
    fs::create_dir_all(&args.out)?;
    report.write_into(&args.out)?;
    Ok(())
}

fn cmd_table1(args: &Table1Args) -> Result<(), Error> {
    let summary = table1_suite(args.seed, args.replicas)?;
    fs::create_dir_all(&args.out)?;
    let mut file = fs::File::create(args.out.join("table1.csv"))?;
    summary.write_csv(&mut file)?;
    Ok(())
}

fn cmd_stability(args: &StabilityArgs) -> Result<ExitCode, Error> {
    let cfg = load_config(&args.config, &args.set, args.seed, None, None)?;
    let network = cfg.network.build()?;
    let spectral = SpectralData::from_network(&network)?;
    let mut all_pass = true;
    for k in 0..network.num_nodes() {
        let bound = mean_stability_bound(&spectral, k);
        let mu = network.node(k).step_size();
        let pass = mu > 0.0 && mu < bound;
        all_pass &= pass;
        println!(
            "node {:>3}: mu = {:?} bound = {:?} {}",
            k + 1,
            mu,
            bound,
            if pass { "OK" } else { "FAIL" }
        );
    }
    if all_pass {
        println!("all nodes inside the mean-stability bound");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("one or more nodes violate the mean-stability bound");
        Ok(ExitCode::from(EXIT_INSTABILITY))
    }
}

fn exit_code(error: &Error) -> u8 {
    match error.root() {
        Error::Validation(_) | Error::Json(_) | Error::Factorization(_) => EXIT_USAGE,
        Error::Instability { .. } | Error::Singular(_) => EXIT_INSTABILITY,
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::Io(_) => EXIT_IO,
        Error::Convergence { .. } => EXIT_NUMERICAL,
        Error::Labeled { .. } => unreachable!("root() unwraps labels"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args).map(|()| ExitCode::SUCCESS),
        Command::Theory(args) => cmd_theory(args).map(|()| ExitCode::SUCCESS),
        Command::Compare(args) => cmd_compare(args).map(|()| ExitCode::SUCCESS),
        Command::Table1(args) => cmd_table1(args).map(|()| ExitCode::SUCCESS),
        Command::Stability(args) => cmd_stability(args),
    };
    match result {
        Ok(code) => code,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code(&error))
        }
    }
}
