//! Seeded random instances for tests and benchmarks.

use rand::Rng;

use crate::model::{Cmdp, CostComponent, Kernel, StageTensor};
use crate::occupancy::MarkovPolicy;
use crate::oracle::backward_induction;

#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    /// One entry per component, objective first: `true` gives the component
    /// a nonzero `alpha` and random factors in `(0, 1]`.
    pub multiplicative: Vec<bool>,
}

impl Shape {
    pub fn new(states: usize, actions: usize, horizon: usize, multiplicative: Vec<bool>) -> Self {
        Shape { states, actions, horizon, multiplicative }
    }

    /// Uniform draw with `m <= max_states`, `n <= max_actions`,
    /// `T <= max_horizon`, and up to `max_constraints` constraints.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        max_states: usize,
        max_actions: usize,
        max_horizon: usize,
        max_constraints: usize,
    ) -> Self {
        let components = 1 + rng.gen_range(0..=max_constraints);
        Shape {
            states: rng.gen_range(1..=max_states),
            actions: rng.gen_range(1..=max_actions),
            horizon: rng.gen_range(1..=max_horizon),
            multiplicative: (0..components).map(|_| rng.gen_bool(0.6)).collect(),
        }
    }
}

/// Row-stochastic kernel; about a fifth of the entries are zero.
pub fn random_kernel<R: Rng + ?Sized>(rng: &mut R, m: usize, n: usize) -> Kernel {
    (0..m)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let mut row: Vec<f64> = (0..m)
                        .map(|_| if rng.gen_bool(0.2) { 0.0 } else { -rng.gen::<f64>().ln() })
                        .collect();
                    let total: f64 = row.iter().sum();
                    if total == 0.0 {
                        row[rng.gen_range(0..m)] = 1.0;
                    } else {
                        row.iter_mut().for_each(|v| *v /= total);
                    }
                    row
                })
                .collect()
        })
        .collect()
}

fn random_tensor<R: Rng + ?Sized>(rng: &mut R, shape: &Shape, mut draw: impl FnMut(&mut R) -> f64) -> StageTensor {
    let (m, n) = (shape.states, shape.actions);
    (0..shape.horizon)
        .map(|_| (0..m).map(|_| (0..n).map(|_| (0..m).map(|_| draw(rng)).collect()).collect()).collect())
        .collect()
}

/// Costs in `[-1, 1]`, factors in `(0, 1]`, `|alpha|` in `[0.5, 2]`.
/// Constraint bounds are `+inf`; see [`with_bound_between`].
pub fn random_cmdp<R: Rng + ?Sized>(rng: &mut R, shape: &Shape) -> Cmdp {
    let (m, n) = (shape.states, shape.actions);
    let kernel = random_kernel(rng, m, n);
    let components = shape
        .multiplicative
        .iter()
        .enumerate()
        .map(|(i, &mult)| {
            let additive = random_tensor(rng, shape, |r| r.gen_range(-1.0..=1.0));
            let bound = (i > 0).then_some(f64::INFINITY);
            if mult {
                let multiplicative = random_tensor(rng, shape, |r| 1.0 - r.gen::<f64>());
                let alpha = rng.gen_range(0.5..=2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                CostComponent { additive, multiplicative, alpha, bound }
            } else {
                CostComponent::additive_only(shape.horizon, m, n, additive, bound)
            }
        })
        .collect();
    Cmdp {
        num_states: m,
        num_actions: n,
        horizon: shape.horizon,
        initial_state: rng.gen_range(0..m),
        kernel,
        components,
    }
}

/// Sets the bound of additive constraint `component` to
/// `lo + fraction * (hi - lo)`, where `lo` and `hi` are its smallest and
/// largest values over all policies. `fraction = 1` never binds;
/// `fraction = 0` leaves only the minimizers feasible.
pub fn with_bound_between(cmdp: &Cmdp, component: usize, fraction: f64) -> crate::Result<Cmdp> {
    let (lo, _) = backward_induction(cmdp, component)?;
    let mut negated = cmdp.clone();
    for v in negated.components[component].additive.iter_mut().flatten().flatten().flatten() {
        *v = -*v;
    }
    let (neg_hi, _) = backward_induction(&negated, component)?;
    let mut out = cmdp.clone();
    out.components[component].bound = Some(lo + fraction * (-neg_hi - lo));
    Ok(out)
}

/// Policy with uniformly random decision rows.
pub fn random_policy<R: Rng + ?Sized>(rng: &mut R, cmdp: &Cmdp) -> MarkovPolicy {
    MarkovPolicy::random(rng, cmdp.horizon, cmdp.num_states, cmdp.num_actions)
}
