use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use superlab_cli::experiments::{DEFAULT_OUTPUT_DIR, OUTPUT_DIR_ENV};
use superlab_cli::{bundle, exit, run, CliError, CliResult, ExperimentSpec, Kind};

#[derive(Parser)]
#[command(name = "superlab", version, about = "Numerical laboratory for critical superprocesses")]
struct Cli {
    /// Worker threads for Monte Carlo reductions (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory used when a spec names none.
    #[arg(long, global = true, env = OUTPUT_DIR_ENV, default_value = DEFAULT_OUTPUT_DIR)]
    output_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec file.
    Run { spec: PathBuf },
    /// Write a preset model and its ready-to-run specs.
    Preset {
        /// scalar-csbp, two-site or three-site-mixed.
        name: String,
        #[arg(long, default_value = ".")]
        dir: PathBuf,
    },
    /// Simulate the superprocess and report survivors.
    Simulate(SimulateArgs),
    /// Compare the spine Feynman-Kac estimate with the cumulant ODE.
    SpineCheck(SpineArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    paths: usize,
    #[arg(long)]
    step: f64,
    #[arg(long)]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON array of initial masses.
    #[arg(long)]
    mu: PathBuf,
    /// JSON array of test-function values.
    #[arg(long)]
    f: PathBuf,
    #[arg(long, default_value_t = 1)]
    levels: usize,
}

#[derive(Args)]
struct SpineArgs {
    #[arg(long)]
    model: PathBuf,
    /// JSON array of test-function values.
    #[arg(long)]
    f: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[arg(long)]
    horizon: f64,
    #[arg(long)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3.0)]
    z_max: f64,
}

fn read_vector(path: &PathBuf) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> CliResult<i32> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let spec = match cli.command {
        Command::Preset { name, dir } => {
            for p in bundle::write_bundle(&name, &dir)? {
                println!("{}", p.display());
            }
            return Ok(exit::OK);
        }
        Command::Run { spec } => ExperimentSpec::load(&spec)?,
        Command::Simulate(a) => ExperimentSpec {
            kind: Kind::Simulate,
            model_path: Some(a.model),
            parameters: serde_json::json!({
                "mu": read_vector(&a.mu)?, "f": read_vector(&a.f)?, "step": a.step,
                "horizon": a.horizon, "paths": a.paths, "levels": a.levels
            }),
            output_dir: None,
            seed: Some(a.seed),
        },
        Command::SpineCheck(a) => ExperimentSpec {
            kind: Kind::SpineCheck,
            model_path: Some(a.model),
            parameters: serde_json::json!({
                "f": read_vector(&a.f)?, "theta": a.theta, "horizon": a.horizon,
                "paths": a.paths, "zMax": a.z_max
            }),
            output_dir: None,
            seed: Some(a.seed),
        },
    };
    let outcome = run(&spec, &cli.output_dir)?;
    println!("{}", outcome.manifest_path.display());
    for c in outcome.manifest.checks.iter().filter(|c| !c.passed) {
        eprintln!("tolerance violated: {} = {} > {}", c.name, c.value, c.limit);
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
