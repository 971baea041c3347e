use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bicmdp::casegen::EpidemicParams;
use bicmdp::io;
use bicmdp_cli::{exit, CmdResult, Failure, OracleMode, SolveOptions};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Finite-horizon CMDPs with additive and multiplicative costs.
#[derive(Parser)]
#[command(name = "bicmdp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file and print its dimensions.
    Validate { model: PathBuf },
    /// Run the restart search and print the best feasible policy found.
    Solve {
        model: PathBuf,
        #[arg(long, default_value_t = 2000)]
        max_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `w` in the restart probability `min(1, w / k)`.
        #[arg(long, default_value_t = 1.0)]
        restart_weight: f64,
        /// Chance that a decision row of a restart policy is a pure action.
        #[arg(long, default_value_t = 0.5)]
        vertex_probability: f64,
        #[arg(long, default_value_t = 1)]
        chains: usize,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        log_csv: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact component values of a policy, computed two ways.
    Evaluate { model: PathBuf, policy: PathBuf },
    /// Brute-force reference value over a policy lattice.
    Oracle {
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Grid)]
        mode: Mode,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        #[arg(long, default_value_t = 1_000_000)]
        max_points: u128,
    },
    /// Write the epidemic lock-down model.
    GenEpidemic {
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        /// Contact rate per action, comma separated.
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
        #[arg(long)]
        recovery: Option<f64>,
        /// Economic cost per action, comma separated.
        #[arg(long, value_delimiter = ',')]
        econ_cost: Option<Vec<f64>>,
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        #[arg(long)]
        initial_infected: Option<usize>,
        /// Adds a constraint on expected new infections.
        #[arg(long)]
        infection_bound: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Det,
    Grid,
}

fn emit(text: &str, out: Option<&Path>) -> CmdResult<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| bicmdp::Error::from(e).into()),
        None => {
            // a closed pipe (e.g. `| head`) is not an error worth reporting
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(value: &T) -> String {
    io::to_json_readable(value).expect("reports serialize")
}

fn run(command: Command) -> CmdResult<i32> {
    match command {
        Command::Validate { model } => emit(&json(&bicmdp_cli::cmd_validate(&model)?), None)?,
        Command::Solve { model, max_iters, seed, restart_weight, vertex_probability, chains, threads, log_csv, out } => {
            let options = SolveOptions {
                max_iterations: max_iters,
                seed,
                restart_weight,
                vertex_probability,
                chains,
                threads,
                log_csv,
            };
            emit(&json(&bicmdp_cli::cmd_solve(&model, &options)?), out.as_deref())?;
        }
        Command::Evaluate { model, policy } => emit(&json(&bicmdp_cli::cmd_evaluate(&model, &policy)?), None)?,
        Command::Oracle { model, mode, step, max_points } => {
            let mode = match mode {
                Mode::Det => OracleMode::Deterministic,
                Mode::Grid => OracleMode::Grid,
            };
            let result = bicmdp_cli::cmd_oracle(&model, mode, step, max_points)?;
            emit(&json(&result), None)?;
            if result.best_value.is_none() {
                return Ok(exit::NO_FEASIBLE);
            }
        }
        Command::GenEpidemic {
            population,
            horizon,
            rates,
            recovery,
            econ_cost,
            alpha,
            initial_infected,
            infection_bound,
            out,
        } => {
            let defaults = EpidemicParams::default();
            let params = EpidemicParams {
                population: population.unwrap_or(defaults.population),
                horizon: horizon.unwrap_or(defaults.horizon),
                contact_rates: rates.unwrap_or(defaults.contact_rates),
                recovery_prob: recovery.unwrap_or(defaults.recovery_prob),
                econ_cost: econ_cost.unwrap_or(defaults.econ_cost),
                alpha: alpha.unwrap_or(defaults.alpha),
                initial_infected: initial_infected.unwrap_or(defaults.initial_infected),
                infection_bound: infection_bound.or(defaults.infection_bound),
            };
            let model = bicmdp_cli::cmd_gen_epidemic(&params)?;
            emit(&io::model_to_json(&model).map_err(Failure::from)?, out.as_deref())?;
        }
    }
    Ok(exit::OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(failure) => {
            eprintln!("{}", failure.to_json());
            ExitCode::from(failure.code as u8)
        }
    }
}
