use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use predint::bench::{self, ExperimentConfig};
use predint::data::{self, SyntheticKind, SyntheticSpec};

#[derive(Parser)]
#[command(name = "predint", version, about = "Prediction-interval benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Directory for results.csv and aggregate.csv.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Write a synthetic dataset as CSV.
    Synth {
        #[arg(long)]
        kind: SyntheticKind,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
    },
    /// Print the accepted method identifiers.
    ListMethods,
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> predint::Result<()> {
    match command {
        Command::Run { config, out_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let table = bench::run_with_base(&cfg, config.parent())?;
            table.write(&out_dir)?;
            print!("{}", table.aggregate_csv());
        }
        Command::Synth { kind, n, d, seed, out, noise } => {
            let ds = data::gen_synthetic::<f64>(&SyntheticSpec::new(kind, n, d, noise), seed)?;
            data::write_csv(&ds, &out)?;
        }
        Command::ListMethods => {
            for (name, about) in bench::METHODS {
                println!("{name:<10} {about}");
            }
        }
    }
    Ok(())
}
