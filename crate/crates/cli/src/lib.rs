//! Commands behind the `bicmdp` binary.
//!
//! Every command returns the document the binary prints, or a [`Failure`]
//! that carries the process exit code and is printed as JSON on stderr.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bicmdp::blp::BlpInstance;
use bicmdp::casegen::{self, EpidemicParams};
use bicmdp::grc::{self, GrcConfig};
use bicmdp::io;
use bicmdp::model::{normalize, validate};
use bicmdp::occupancy::{evaluate_augmented, evaluate_direct, MarkovPolicy};
use bicmdp::oracle::{self, OracleOptions, OracleResult};
use bicmdp::{AugmentedMdp, Cmdp, Error};
use serde::{Deserialize, Serialize};

pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const INVALID: i32 = 2;
    pub const NO_FEASIBLE: i32 = 3;
    pub const SIZE_LIMIT: i32 = 4;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    #[serde(skip)]
    pub code: i32,
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
}

impl Failure {
    fn new(code: i32, error: &'static str, message: impl Into<String>) -> Self {
        Failure { code, error, message: message.into(), violations: Vec::new() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", self.error))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Invalid(violations) => Failure {
                violations: violations.iter().map(ToString::to_string).collect(),
                ..Failure::new(exit::INVALID, "invalid-model", message)
            },
            Error::Parse(_) => Failure::new(exit::INVALID, "parse", message),
            Error::NonFinite(_) | Error::Precondition(_) | Error::Dimension(_) => {
                Failure::new(exit::INVALID, "invalid-input", message)
            }
            Error::SizeLimit(_) => Failure::new(exit::SIZE_LIMIT, "size-limit", message),
            Error::Io(_) => Failure::new(exit::IO, "io", message),
            Error::CyclingLimit(_) => Failure::new(exit::IO, "solver", message),
        }
    }
}

pub type CmdResult<T> = std::result::Result<T, Failure>;

/// Loads a model and rejects it unless it passes validation.
pub fn load_valid_model(path: &Path) -> CmdResult<Cmdp> {
    let cmdp = io::load_model(path)?;
    let violations = validate(&cmdp);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations).into());
    }
    Ok(cmdp)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub valid: bool,
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub num_constraints: usize,
    /// Components that keep a multiplicative part after normalization.
    pub survival_bits: usize,
    /// `m * 2^bits`, absent when it does not fit in 64 bits.
    pub augmented_states: Option<u64>,
}

pub fn cmd_validate(path: &Path) -> CmdResult<ModelSummary> {
    let cmdp = load_valid_model(path)?;
    let bits = normalize(&cmdp)?.components.iter().filter(|c| c.alpha != 0.0).count();
    Ok(ModelSummary {
        valid: true,
        num_states: cmdp.num_states,
        num_actions: cmdp.num_actions,
        horizon: cmdp.horizon,
        num_constraints: cmdp.num_constraints(),
        survival_bits: bits,
        augmented_states: 1u64.checked_shl(bits as u32).and_then(|p| p.checked_mul(cmdp.num_states as u64)),
    })
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_iterations: usize,
    pub seed: u64,
    pub restart_weight: f64,
    pub vertex_probability: f64,
    /// Independent restart chains; the result depends on this, not on `threads`.
    pub chains: usize,
    pub threads: usize,
    pub log_csv: Option<PathBuf>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        let grc = GrcConfig::default();
        SolveOptions {
            max_iterations: grc.max_iterations,
            seed: grc.seed,
            restart_weight: grc.restart_weight,
            vertex_probability: grc.vertex_probability,
            chains: 1,
            threads: 1,
            log_csv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub index: usize,
    /// Exact value of the reported policy.
    pub value: f64,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Objective of the incumbent occupation measure.
    pub value: f64,
    /// `[t][x][a]`
    pub policy: MarkovPolicy,
    pub constraints: Vec<ConstraintReport>,
    pub c2_residual: f64,
    pub fixed_point_residual: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub chains: usize,
    pub seed: u64,
    pub wall_time_ms: u64,
}

pub fn cmd_solve(path: &Path, options: &SolveOptions) -> CmdResult<SolveReport> {
    solve_model(&load_valid_model(path)?, options)
}

/// Normalizes, augments, assembles and runs the restart search.
pub fn solve_model(cmdp: &Cmdp, options: &SolveOptions) -> CmdResult<SolveReport> {
    let started = Instant::now();
    let aug = AugmentedMdp::build(&normalize(cmdp)?)?;
    let blp = BlpInstance::assemble(&aug)?;
    let config = GrcConfig {
        max_iterations: options.max_iterations,
        restart_weight: options.restart_weight,
        seed: options.seed,
        vertex_probability: options.vertex_probability,
        ..GrcConfig::default()
    };
    let report = grc::run_chains(&aug, &blp, &config, options.chains.max(1), options.threads.max(1))?;
    if let Some(path) = &options.log_csv {
        report.write_csv(BufWriter::new(File::create(path).map_err(Error::from)?))?;
    }
    let Some(best) = report.best else {
        return Err(Failure::new(
            exit::NO_FEASIBLE,
            "no-feasible-point",
            format!("no iterate passed both gates in {} iterations", report.iterations),
        ));
    };
    let constraints = (1..cmdp.components.len())
        .map(|i| ConstraintReport {
            index: i,
            value: evaluate_direct(cmdp, &best.policy, i),
            bound: cmdp.components[i].bound,
        })
        .collect();
    Ok(SolveReport {
        value: best.value,
        c2_residual: blp.bilinear_residual(&best.occupancy),
        policy: best.policy,
        constraints,
        fixed_point_residual: report.fixed_point_residual,
        converged: report.converged,
        iterations: report.iterations,
        chains: options.chains.max(1),
        seed: options.seed,
        wall_time_ms: started.elapsed().as_millis() as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentValue {
    pub component: usize,
    pub direct: f64,
    pub augmented: f64,
}

/// Exact value of every component, by backward recursion on the original
/// model and by forward occupation measures on the augmented one.
pub fn cmd_evaluate(model: &Path, policy: &Path) -> CmdResult<Vec<ComponentValue>> {
    let cmdp = load_valid_model(model)?;
    let policy = io::load_policy(policy)?;
    evaluate_model(&cmdp, &policy)
}

pub fn evaluate_model(cmdp: &Cmdp, policy: &MarkovPolicy) -> CmdResult<Vec<ComponentValue>> {
    policy.check(cmdp)?;
    let aug = AugmentedMdp::build(&normalize(cmdp)?)?;
    Ok((0..cmdp.components.len())
        .map(|i| ComponentValue {
            component: i,
            direct: evaluate_direct(cmdp, policy, i),
            augmented: evaluate_augmented(&aug, policy, i),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    Deterministic,
    Grid,
}

pub fn cmd_oracle(path: &Path, mode: OracleMode, step: f64, max_points: u128) -> CmdResult<OracleResult> {
    let cmdp = load_valid_model(path)?;
    let options = OracleOptions { max_points };
    Ok(match mode {
        OracleMode::Deterministic => oracle::enumerate_deterministic(&cmdp, &options)?,
        OracleMode::Grid => oracle::grid_search(&cmdp, step, &options)?,
    })
}

pub fn cmd_gen_epidemic(params: &EpidemicParams) -> CmdResult<Cmdp> {
    Ok(casegen::generate(params)?)
}
