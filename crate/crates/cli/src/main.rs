//! Command line front end: KL reports, stability certificates, simulations and sweeps
//! driven by a TOML experiment configuration.

mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::LevelFilter;

use commands::Output;
use exit::Failure;

#[derive(Parser, Debug)]
#[command(name = "sgcontrol", version, about = "Boundary feedback stabilization of random hyperbolic balance laws")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(short, long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; overrides `output.dir` from the configuration.
    #[arg(short, long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for sweeps (defaults to the available parallelism).
    #[arg(short = 'j', long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Leave the creation time out of metadata files.
    #[arg(long, global = true)]
    no_timestamp: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Karhunen-Loève decomposition of the configured stress field.
    Kl,
    /// Hyperbolicity, dissipativity and decay rate of the Galerkin system.
    Certify,
    /// Integrate the controlled system and write the time series.
    Simulate,
    /// Run the simulation once per value of a scalar parameter.
    Sweep {
        /// Parameter to vary, e.g. sigma_star, kappa or mu_hat.
        #[arg(short, long)]
        param: String,
        /// Comma separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Failure::Validation("no configuration given (use --config PATH)".into()))?;
    let config = commands::load_config(path)?;
    let out = Output::new(&config, cli.out.as_deref(), !cli.no_timestamp)?;
    match &cli.command {
        Command::Kl => commands::kl(&config, &out),
        Command::Certify => commands::certify(&config, &out),
        Command::Simulate => commands::simulate_one(&config, &out),
        Command::Sweep { param, values } => {
            let workers = cli
                .workers
                .map(usize::from)
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            commands::sweep(&config, &out, param, values, workers)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sgcontrol: {f}");
            f.exit_code()
        }
    }
}
