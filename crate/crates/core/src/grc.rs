//! Global search over the bilinear program: random restarts with a
//! diminishing probability `min(1, w / k)`, interleaved with damped steps
//! toward the alternating block-LP response `Psi(W)`.
//!
//! A point is recorded as incumbent only when it passes the bilinear gate
//! `C2(W) <= tol` and the cost gate `C1(W) <= b + tol`; every point failing
//! the gates is replaced by a fresh random policy before the next iteration.

use std::io::Write;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::augment::AugmentedMdp;
use crate::blp::{Block, BlpInstance, RowKind};
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, SimplexOptions};
use crate::occupancy::{occupancy_to_policy, policy_to_occupancy, MarkovPolicy, OccupancyMeasure};

/// How the damping index of a local step is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `eps = 1/j` where `j` counts local steps since the last restart.
    SinceRestart,
    /// `eps = 1/k` with `k` the global iteration counter.
    Global,
}

#[derive(Debug, Clone)]
pub struct GrcConfig {
    pub max_iterations: usize,
    /// `w` in the restart probability `min(1, w / k)`.
    pub restart_weight: f64,
    pub seed: u64,
    /// Bilinear gate `C2(W) <= c2_tol`.
    pub c2_tol: f64,
    /// Cost gate `C1(W) <= b + c1_tol`.
    pub c1_tol: f64,
    /// Convergence is reported when `||Psi(W*) - W*||_inf <= fixed_point_tol`.
    pub fixed_point_tol: f64,
    pub schedule: StepSchedule,
    /// Magnitude of a random perturbation added to the block-LP objectives,
    /// selecting a random vertex among (near-)optimal ones.
    pub perturbation: Option<f64>,
    /// Probability that a decision row of a restart policy is a pure action
    /// instead of a uniform draw from the simplex.
    pub vertex_probability: f64,
    pub simplex: SimplexOptions,
}

impl Default for GrcConfig {
    fn default() -> Self {
        GrcConfig {
            max_iterations: 2000,
            restart_weight: 1.0,
            seed: 0,
            c2_tol: 1e-8,
            c1_tol: 1e-8,
            fixed_point_tol: 1e-8,
            schedule: StepSchedule::SinceRestart,
            perturbation: None,
            vertex_probability: 0.5,
            simplex: SimplexOptions::default(),
        }
    }
}

impl GrcConfig {
    fn check(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Precondition("max_iterations must be at least 1".into()));
        }
        let positive = [self.restart_weight, self.c2_tol, self.c1_tol, self.fixed_point_tol];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Precondition("restart weight and tolerances must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.vertex_probability) {
            return Err(Error::Precondition("vertex probability must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// `p_k = min(1, w / k)`.
    pub fn restart_probability(&self, k: usize) -> f64 {
        (self.restart_weight / k as f64).min(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    /// Random point drawn with probability `p_k`.
    Restart,
    Local,
    /// A block LP was infeasible, so a random point was drawn instead.
    InfeasibleRestart,
}

impl StepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepKind::Restart => "restart",
            StepKind::Local => "local",
            StepKind::InfeasibleRestart => "infeasible-restart",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterateRecord {
    pub chain: usize,
    pub k: usize,
    pub step: StepKind,
    pub objective: f64,
    pub c2_residual: f64,
    pub max_c1_slack: Option<f64>,
    pub feasible: bool,
    /// Incumbent value after this iteration.
    pub incumbent: Option<f64>,
    /// `||Psi_k(W) - W||_inf` for local steps.
    pub fixed_point_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Incumbent {
    pub occupancy: OccupancyMeasure,
    pub value: f64,
    pub policy: MarkovPolicy,
    pub chain: usize,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrcReport {
    /// `None` when no iterate passed both gates.
    pub best: Option<Incumbent>,
    pub log: Vec<IterateRecord>,
    /// `||Psi(W*) - W*||_inf` re-solved at the incumbent.
    pub fixed_point_residual: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub seed: u64,
}

impl GrcReport {
    pub fn best_value(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.value)
    }

    /// Writes the iterate log as CSV:
    /// `k,step_type,objective,c2_residual,max_c1_slack,incumbent`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        writer
            .write_record(["k", "step_type", "objective", "c2_residual", "max_c1_slack", "incumbent"])
            .map_err(io)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for rec in &self.log {
            writer
                .write_record([
                    rec.k.to_string(),
                    rec.step.as_str().to_string(),
                    rec.objective.to_string(),
                    rec.c2_residual.to_string(),
                    opt(rec.max_c1_slack),
                    opt(rec.incumbent),
                ])
                .map_err(io)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Occupation measure of a policy whose rows are uniform on the simplex.
pub fn random_feasible_point<R: Rng + ?Sized>(aug: &AugmentedMdp, rng: &mut R) -> OccupancyMeasure {
    let policy = MarkovPolicy::random(rng, aug.horizon(), aug.num_states(), aug.num_actions());
    policy_to_occupancy(aug, &policy)
}

/// Restart point: rows are pure actions with probability
/// `vertex_probability` and uniform on the simplex otherwise.
pub fn restart_point<R: Rng + ?Sized>(aug: &AugmentedMdp, vertex_probability: f64, rng: &mut R) -> OccupancyMeasure {
    let policy =
        MarkovPolicy::random_mixed(rng, aug.horizon(), aug.num_states(), aug.num_actions(), vertex_probability);
    policy_to_occupancy(aug, &policy)
}

/// Outcome of one damped step.
#[derive(Debug, Clone)]
pub enum LocalImprovement {
    Step {
        next: OccupancyMeasure,
        response: OccupancyMeasure,
        fixed_point_residual: f64,
    },
    /// One of the block LPs has no feasible point.
    RestartRequired,
}

/// `Psi(W)`: `W1` from the LP with `W2` fixed, `W2` from the LP with `W1`
/// fixed, terminal masses pushed forward from the combined last stage.
/// `None` when either LP is infeasible or exhausts its pivot budget.
pub fn block_response<R: Rng + ?Sized>(
    instance: &BlpInstance,
    occ: &OccupancyMeasure,
    config: &GrcConfig,
    rng: &mut R,
) -> Result<Option<OccupancyMeasure>> {
    let layout = instance.layout();
    let mut response = occ.clone();
    for block in [Block::FixSecond, Block::FixFirst] {
        let reduced = instance.fix_block(occ, block);
        let mut program = reduced.program.clone();
        if let Some(scale) = config.perturbation {
            perturb(&mut program, scale, rng);
        }
        let outcome = match lp::solve_with(&program, &config.simplex) {
            // a stalled LP is treated like an infeasible one
            Err(Error::CyclingLimit(_)) => return Ok(None),
            other => other?,
        };
        if outcome.status != LpStatus::Optimal {
            return Ok(None);
        }
        let values = response.values_mut();
        for (&col, &v) in reduced.columns.iter().zip(&outcome.solution) {
            if col >= layout.num_stage_columns() {
                continue;
            }
            let state = (col / layout.num_actions) % layout.num_aug_states();
            let owned = match block {
                Block::FixSecond => layout.in_first_block(state),
                Block::FixFirst => !layout.in_first_block(state),
            };
            if owned {
                values[col] = v.max(0.0);
            }
        }
    }
    push_terminal(instance, &mut response);
    Ok(Some(response))
}

fn perturb<R: Rng + ?Sized>(program: &mut LinearProgram, scale: f64, rng: &mut R) {
    for c in &mut program.objective {
        *c += scale * (2.0 * rng.gen::<f64>() - 1.0);
    }
}

/// Recomputes `w_T` from the terminal flow rows.
fn push_terminal(instance: &BlpInstance, occ: &mut OccupancyMeasure) {
    let layout = instance.layout();
    let terminal: Vec<(usize, f64)> = instance
        .eq_rows()
        .iter()
        .filter(|row| row.kind == RowKind::Terminal)
        .map(|row| {
            let own = layout.terminal_col(row.state);
            let inflow: f64 = row
                .coefs
                .iter()
                .filter(|(c, _)| *c != own)
                .map(|(c, v)| -v * occ.values()[*c])
                .sum();
            (own, row.rhs + inflow)
        })
        .collect();
    let values = occ.values_mut();
    for (col, v) in terminal {
        values[col] = v;
    }
}

/// `W + eps (Psi(W) - W)` with `eps = 1 / index`.
pub fn local_improvement<R: Rng + ?Sized>(
    instance: &BlpInstance,
    occ: &OccupancyMeasure,
    index: usize,
    config: &GrcConfig,
    rng: &mut R,
) -> Result<LocalImprovement> {
    if index == 0 {
        return Err(Error::Precondition("step index starts at 1".into()));
    }
    let Some(response) = block_response(instance, occ, config, rng)? else {
        return Ok(LocalImprovement::RestartRequired);
    };
    let eps = 1.0 / index as f64;
    let mut next = occ.clone();
    for (v, r) in next.values_mut().iter_mut().zip(response.values()) {
        *v = (1.0 - eps) * *v + eps * r;
    }
    let fixed_point_residual = response.max_abs_diff(occ);
    Ok(LocalImprovement::Step { next, response, fixed_point_residual })
}

/// One restart chain seeded with `config.seed`.
pub fn run(aug: &AugmentedMdp, instance: &BlpInstance, config: &GrcConfig) -> Result<GrcReport> {
    run_chain(aug, instance, config, 0, config.seed)
}

/// Seed of restart chain `chain`; chain 0 uses the base seed.
pub fn chain_seed(seed: u64, chain: usize) -> u64 {
    seed.wrapping_add((chain as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Independent chains run on up to `threads` threads; the incumbent is the
/// lexicographic minimum of `(value, chain, iteration)`.
pub fn run_chains(
    aug: &AugmentedMdp,
    instance: &BlpInstance,
    config: &GrcConfig,
    chains: usize,
    threads: usize,
) -> Result<GrcReport> {
    if chains <= 1 {
        return run(aug, instance, config);
    }
    let threads = threads.clamp(1, chains);
    let mut reports: Vec<Option<Result<GrcReport>>> = (0..chains).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (worker, slots) in reports.chunks_mut(chains.div_ceil(threads)).enumerate() {
            let first = worker * chains.div_ceil(threads);
            scope.spawn(move || {
                for (offset, slot) in slots.iter_mut().enumerate() {
                    let chain = first + offset;
                    *slot = Some(run_chain(aug, instance, config, chain, chain_seed(config.seed, chain)));
                }
            });
        }
    });
    let reports = reports
        .into_iter()
        .map(|r| r.expect("every chain is assigned to a worker"))
        .collect::<Result<Vec<_>>>()?;

    let mut merged = GrcReport {
        best: None,
        log: Vec::new(),
        fixed_point_residual: None,
        converged: false,
        iterations: config.max_iterations * chains,
        seed: config.seed,
    };
    for report in reports {
        merged.log.extend(report.log);
        if let Some(candidate) = report.best {
            let better = match &merged.best {
                None => true,
                Some(cur) => {
                    (candidate.value, candidate.chain, candidate.iteration) < (cur.value, cur.chain, cur.iteration)
                }
            };
            if better {
                merged.fixed_point_residual = report.fixed_point_residual;
                merged.converged = report.converged;
                merged.best = Some(candidate);
            }
        }
    }
    Ok(merged)
}

fn run_chain(
    aug: &AugmentedMdp,
    instance: &BlpInstance,
    config: &GrcConfig,
    chain: usize,
    seed: u64,
) -> Result<GrcReport> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = restart_point(aug, config.vertex_probability, &mut rng);
    let mut since_restart = 0;
    let mut best: Option<Incumbent> = None;
    let mut log = Vec::with_capacity(config.max_iterations);

    for k in 1..=config.max_iterations {
        let mut fixed_point_residual = None;
        let step = if rng.gen::<f64>() < config.restart_probability(k) {
            current = restart_point(aug, config.vertex_probability, &mut rng);
            since_restart = 0;
            StepKind::Restart
        } else {
            since_restart += 1;
            let index = match config.schedule {
                StepSchedule::SinceRestart => since_restart,
                StepSchedule::Global => k,
            };
            match local_improvement(instance, &current, index, config, &mut rng)? {
                LocalImprovement::Step { next, fixed_point_residual: r, .. } => {
                    current = next;
                    fixed_point_residual = Some(r);
                    StepKind::Local
                }
                LocalImprovement::RestartRequired => {
                    current = restart_point(aug, config.vertex_probability, &mut rng);
                    since_restart = 0;
                    StepKind::InfeasibleRestart
                }
            }
        };

        let c2_residual = instance.bilinear_residual(&current);
        let max_c1_slack = instance.max_cost_slack(&current);
        let feasible = c2_residual <= config.c2_tol && max_c1_slack.is_none_or(|s| s <= config.c1_tol);
        let objective = instance.objective(&current);
        if feasible && best.as_ref().is_none_or(|b| objective < b.value) {
            best = Some(Incumbent {
                policy: occupancy_to_policy(&current),
                occupancy: current.clone(),
                value: objective,
                chain,
                iteration: k,
            });
        }
        log.push(IterateRecord {
            chain,
            k,
            step,
            objective,
            c2_residual,
            max_c1_slack,
            feasible,
            incumbent: best.as_ref().map(|b| b.value),
            fixed_point_residual,
        });
        if !feasible {
            current = restart_point(aug, config.vertex_probability, &mut rng);
            since_restart = 0;
        }
    }

    let certificate_config = GrcConfig { perturbation: None, ..config.clone() };
    let fixed_point_residual = match &best {
        Some(b) => block_response(instance, &b.occupancy, &certificate_config, &mut rng)?
            .map(|psi| psi.max_abs_diff(&b.occupancy)),
        None => None,
    };
    Ok(GrcReport {
        converged: fixed_point_residual.is_some_and(|r| r <= config.fixed_point_tol),
        best,
        log,
        fixed_point_residual,
        iterations: config.max_iterations,
        seed,
    })
}
