use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dcbc_cli::commands;
use dcbc_cli::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "dcbc",
    about = "Data-driven synthesis and verification of barrier certificates and dynamic safety controllers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a certificate and dynamic controller from a fresh
    /// seeded experiment.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides all stage seeds (experiment, scenario, verification).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the sampled (deterministic or probabilistic) computation route.
    Scenario {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a certificate file against the true model.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        certificate: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Export closed-loop rollouts without checks.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        certificate: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        steps: u64,
        #[arg(long, default_value_t = 10)]
        runs: u64,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<RunConfig, dcbc_core::Error> {
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = seed {
        config.override_seed(seed);
    }
    Ok(config)
}

fn run() -> Result<i32, dcbc_core::Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synthesize { config, out, seed } => {
            let config = load_config(&config, seed)?;
            let file = commands::cmd_synthesize(&config, &out)?;
            println!(
                "certificate: eta_a = {:.6}, gamma_a = {:.6}, c_a = {:.6}, horizon T = {}",
                file.eta_a, file.gamma_a, file.c_a, file.horizon
            );
            println!("wrote {}", out.join("certificate.json").display());
            Ok(0)
        }
        Command::Scenario { config, out, seed } => {
            let config = load_config(&config, seed)?;
            let file = commands::cmd_scenario(&config, &out)?;
            println!(
                "scenario certificate: eta_a = {:.6}, gamma_a = {:.6}, c_a = {:.6}, horizon T = {}",
                file.eta_a, file.gamma_a, file.c_a, file.horizon
            );
            println!("wrote {}", out.join("certificate.json").display());
            Ok(0)
        }
        Command::Verify {
            config,
            certificate,
            out,
            seed,
        } => {
            let config = load_config(&config, seed)?;
            let (file, passed) = commands::cmd_verify(&config, &certificate, &out)?;
            println!(
                "decrement max = {:.3e}, levels ok = {}, rollouts ok = {}",
                file.report.decrement_max,
                file.report.levels.passed(),
                file.report.rollouts.passed()
            );
            if passed {
                println!("verification PASSED");
                Ok(0)
            } else {
                println!("verification FAILED");
                Ok(dcbc_cli::EXIT_VERIFICATION_FAILED)
            }
        }
        Command::Simulate {
            config,
            certificate,
            out,
            steps,
            runs,
            seed,
        } => {
            let config = load_config(&config, seed)?;
            commands::cmd_simulate(&config, &certificate, &out, steps, runs)?;
            println!("wrote {}", out.join("simulation.csv").display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(dcbc_cli::exit_code(&e) as u8)
        }
    }
}
