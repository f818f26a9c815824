use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vumps::cli::{self, CliError, Overrides, RunConfig};
use vumps::optimizer::Algorithm;

/// Ground states of one-dimensional lattice Hamiltonians in the
/// thermodynamic limit.
#[derive(Parser)]
#[command(name = "vumps", version)]
struct Cli {
    /// Worker threads; overrides the VUMPS_THREADS environment variable.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimization described by a TOML configuration.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Continue a run from its checkpoint.bin.
    Resume {
        checkpoint: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Fit the energies of result.json files matched by a glob pattern.
    Extrapolate {
        pattern: String,
        /// Also write the fit to this file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a configuration without running it.
    Validate { config: PathBuf },
}

#[derive(Args)]
struct OverrideArgs {
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    bond_dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Convergence target for the gradient norm and precision.
    #[arg(long)]
    target: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// single_site, sequential or parallel.
    #[arg(long, value_parser = parse_algorithm)]
    algorithm: Option<Algorithm>,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

impl From<OverrideArgs> for Overrides {
    fn from(a: OverrideArgs) -> Self {
        Overrides {
            output: a.output,
            bond_dim: a.bond_dim,
            seed: a.seed,
            target: a.target,
            max_iterations: a.max_iterations,
            algorithm: a.algorithm,
        }
    }
}

fn init_threads(flag: Option<usize>) -> Result<(), CliError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("VUMPS_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("VUMPS_THREADS={v} is not a count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Run { config, overrides } => {
            let mut cfg = RunConfig::load(&config)?;
            Overrides::from(overrides).apply(&mut cfg);
            let (result, status) = cli::run(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&result).expect("result serializes"));
            Ok(status.exit_code())
        }
        Command::Resume { checkpoint, overrides } => {
            let (result, status) = cli::resume(&checkpoint, &overrides.into())?;
            println!("{}", serde_json::to_string_pretty(&result).expect("result serializes"));
            Ok(status.exit_code())
        }
        Command::Extrapolate { pattern, output } => {
            let results = cli::load_results(&pattern)?;
            let fit = cli::extrapolate(&results)?;
            let json = serde_json::to_string_pretty(&fit).expect("fit serializes");
            if let Some(path) = output {
                std::fs::write(&path, &json).map_err(|e| CliError::io(&path, e))?;
            }
            println!("{json}");
            Ok(0)
        }
        Command::Validate { config } => {
            let p = RunConfig::load(&config)?.prepare()?;
            println!(
                "ok: model {} (d = {}), backend {:?}, cell {}, algorithm {:?}",
                p.spec.name(),
                p.spec.phys_dim(),
                p.ham.backend(),
                p.cell,
                p.options.algorithm
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
