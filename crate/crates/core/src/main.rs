use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use datastop::config::{build_experiment, parse_config, ConfigEntries, Preset};
use datastop::error::Error;
use datastop::harness::{run_benchmark, Scenario};
use datastop::returns_io::write_returns;
use datastop::simulate::Simulator;

/// Data-driven optimal stopping benchmarks.
///
/// Exit codes: 0 success, 2 configuration error, 3 data validation error,
/// 1 anything else.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark and write the result CSV.
    Run {
        /// garch-table1, finite-oracle or custom-data.
        #[arg(long)]
        scenario: Scenario,
        /// Master seed; every random stream derives from it.
        #[arg(long)]
        seed: u64,
        /// Configuration file of `section.key = value` lines (may be empty).
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Named preset applied after the file (`desk`).
        #[arg(long)]
        preset: Option<Preset>,
        /// Override a key, e.g. `--set experiment.repetitions=3`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Write a simulated GARCH return series, one return per line.
    Simulate {
        #[arg(long)]
        seed: u64,
        /// Number of returns.
        #[arg(long)]
        len: usize,
        #[arg(long)]
        out: PathBuf,
        /// Optional configuration file; only `garch.*` keys are used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<ConfigEntries, Error> {
    match path {
        None => Ok(ConfigEntries::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            parse_config(&text)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            config,
            out,
            preset,
            mut overrides,
        } => {
            let file = load_config(Some(&config))?;
            overrides.push(format!("experiment.output={}", out.display()));
            let experiment = build_experiment(&file, &overrides, Some(scenario), Some(seed), preset)?;
            let table = run_benchmark(&experiment)?;
            println!("algorithm,mean,sd");
            for (a, mean, sd) in table.summary()? {
                println!("{a},{mean:.6},{sd:.6}");
            }
            Ok(())
        }
        Command::Simulate {
            seed,
            len,
            out,
            config,
            overrides,
        } => {
            let file = load_config(config.as_ref())?;
            let experiment = build_experiment(&file, &overrides, Some(Scenario::GarchTable1), Some(seed), None)?;
            let sim = Simulator::Garch(experiment.garch);
            let (returns, _) = sim.past(len, seed, &[]);
            write_returns(&out, &returns)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::Data { .. } => 3,
                _ => 1,
            })
        }
    }
}
