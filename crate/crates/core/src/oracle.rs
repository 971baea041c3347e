//! Brute-force reference solvers for desk-scale instances.
//!
//! Nothing here touches the augmented model or the bilinear program: policies
//! are scored on the original model only, by backward recursion or by
//! enumerating every trajectory.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Cmdp;
use crate::occupancy::{evaluate_all_direct, MarkovPolicy};

/// Slack allowed when checking `w_i <= b_i` on exact values.
pub const FEASIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    DeterministicEnumeration,
    GridSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub method: OracleMethod,
    /// `None` when no evaluated policy satisfies every bound.
    pub best_value: Option<f64>,
    pub best_policy: Option<MarkovPolicy>,
    /// Component values of the best policy.
    pub best_components: Option<Vec<f64>>,
    pub points_evaluated: u128,
    /// Lattice spacing actually used (`1` for deterministic enumeration).
    pub resolution: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub max_points: u128,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { max_points: 1_000_000 }
    }
}

/// Best feasible deterministic Markov policy. An upper bound on the
/// constrained optimum, which may need randomization.
pub fn enumerate_deterministic(cmdp: &Cmdp, options: &OracleOptions) -> Result<OracleResult> {
    let mut result = lattice_search(cmdp, 1, options)?;
    result.method = OracleMethod::DeterministicEnumeration;
    Ok(result)
}

/// Best feasible policy whose decision rows lie on the simplex lattice with
/// spacing `1 / round(1 / step)`. The lattice always contains the vertices,
/// and halving the step yields a superset.
pub fn grid_search(cmdp: &Cmdp, step: f64, options: &OracleOptions) -> Result<OracleResult> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Precondition(format!("grid step {step} outside (0, 1]")));
    }
    let divisions = (1.0 / step).round().max(1.0) as usize;
    lattice_search(cmdp, divisions, options)
}

/// Number of points of the lattice with `divisions` steps per unit on the
/// `(n-1)`-simplex: `C(divisions + n - 1, n - 1)`.
pub fn simplex_lattice_size(divisions: usize, n: usize) -> u128 {
    let mut c: u128 = 1;
    for i in 1..n as u128 {
        c = c * (divisions as u128 + i) / i;
    }
    c
}

fn simplex_lattice(divisions: usize, n: usize) -> Vec<Vec<f64>> {
    fn fill(rest: usize, slot: usize, counts: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slot + 1 == counts.len() {
            counts[slot] = rest;
            out.push(counts.clone());
            return;
        }
        for c in (0..=rest).rev() {
            counts[slot] = c;
            fill(rest - c, slot + 1, counts, out);
        }
    }
    let mut raw = Vec::new();
    fill(divisions, 0, &mut vec![0; n], &mut raw);
    raw.into_iter()
        .map(|counts| counts.into_iter().map(|c| c as f64 / divisions as f64).collect())
        .collect()
}

fn lattice_search(cmdp: &Cmdp, divisions: usize, options: &OracleOptions) -> Result<OracleResult> {
    let (m, n, horizon) = (cmdp.num_states, cmdp.num_actions, cmdp.horizon);
    let rows = m * horizon;
    let per_row = simplex_lattice_size(divisions, n);
    let total = per_row.checked_pow(rows as u32).unwrap_or(u128::MAX);
    if total > options.max_points {
        return Err(Error::SizeLimit(format!(
            "{total} candidate policies exceed the cap of {}",
            options.max_points
        )));
    }
    let lattice = simplex_lattice(divisions, n);
    let bounds = cmdp.bounds();
    let mut digits = vec![0usize; rows];
    let mut policy = MarkovPolicy { rules: vec![vec![lattice[0].clone(); m]; horizon] };
    let mut best: Option<(f64, MarkovPolicy, Vec<f64>)> = None;
    let mut evaluated: u128 = 0;
    loop {
        let values = evaluate_all_direct(cmdp, &policy);
        evaluated += 1;
        let feasible = values[1..].iter().zip(&bounds).all(|(v, b)| *v <= b + FEASIBILITY_TOL);
        if feasible && best.as_ref().is_none_or(|(v, _, _)| values[0] < *v) {
            best = Some((values[0], policy.clone(), values));
        }
        // odometer over the decision rows
        let mut row = 0;
        loop {
            if row == rows {
                let (best_value, best_policy, best_components) = match best {
                    Some((v, p, c)) => (Some(v), Some(p), Some(c)),
                    None => (None, None, None),
                };
                return Ok(OracleResult {
                    method: OracleMethod::GridSearch,
                    best_value,
                    best_policy,
                    best_components,
                    points_evaluated: evaluated,
                    resolution: 1.0 / divisions as f64,
                });
            }
            digits[row] += 1;
            let (t, x) = (row / m, row % m);
            if digits[row] < lattice.len() {
                policy.rules[t][x].clone_from(&lattice[digits[row]]);
                break;
            }
            digits[row] = 0;
            policy.rules[t][x].clone_from(&lattice[0]);
            row += 1;
        }
    }
}

/// Optimal value and a deterministic optimal policy of an additive
/// component (`alpha = 0`) by backward induction, without constraints.
pub fn backward_induction(cmdp: &Cmdp, component: usize) -> Result<(f64, MarkovPolicy)> {
    let comp = &cmdp.components[component];
    if comp.alpha != 0.0 {
        return Err(Error::Precondition(format!(
            "component {component} has a multiplicative part; backward induction needs alpha = 0"
        )));
    }
    let (m, n) = (cmdp.num_states, cmdp.num_actions);
    let mut value = vec![0.0; m];
    let mut choice = vec![vec![0; m]; cmdp.horizon];
    for t in (0..cmdp.horizon).rev() {
        let mut next = vec![0.0; m];
        for x in 0..m {
            let (mut best_a, mut best_v) = (0, f64::INFINITY);
            for a in 0..n {
                let v: f64 = (0..m).map(|y| cmdp.q(x, a, y) * (comp.r(t, x, a, y) + value[y])).sum();
                if v < best_v {
                    best_v = v;
                    best_a = a;
                }
            }
            next[x] = best_v;
            choice[t][x] = best_a;
        }
        value = next;
    }
    Ok((value[cmdp.initial_state], MarkovPolicy::deterministic(&choice, n)))
}

/// Exact component value by summing over every state-action trajectory.
pub fn trajectory_value(cmdp: &Cmdp, policy: &MarkovPolicy, component: usize) -> Result<f64> {
    let paths = ((cmdp.num_states * cmdp.num_actions) as u128)
        .checked_pow(cmdp.horizon as u32)
        .unwrap_or(u128::MAX);
    if paths > 10_000_000 {
        return Err(Error::SizeLimit(format!("{paths} trajectories to enumerate")));
    }
    let comp = &cmdp.components[component];
    let mut total = 0.0;
    // (t, x, probability, running sum, running product)
    let mut stack = vec![(0usize, cmdp.initial_state, 1.0, 0.0, 1.0)];
    while let Some((t, x, p, sum, prod)) = stack.pop() {
        if t == cmdp.horizon {
            total += p * (sum + comp.alpha * prod);
            continue;
        }
        for a in 0..cmdp.num_actions {
            let pa = p * policy.prob(t, x, a);
            if pa == 0.0 {
                continue;
            }
            for y in 0..cmdp.num_states {
                let q = cmdp.q(x, a, y);
                if q == 0.0 {
                    continue;
                }
                stack.push((t + 1, y, pa * q, sum + comp.r(t, x, a, y), prod * comp.f(t, x, a, y)));
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CostComponent;

    fn one_state(horizon: usize, costs: Vec<f64>, bound: Option<f64>) -> Cmdp {
        let n = costs.len();
        let additive = vec![vec![costs.iter().map(|c| vec![*c]).collect::<Vec<_>>()]; horizon];
        let mut components = vec![CostComponent::additive_only(horizon, 1, n, additive.clone(), None)];
        if let Some(b) = bound {
            let negated = additive
                .iter()
                .map(|s| s.iter().map(|x| x.iter().map(|a| a.iter().map(|v| -v).collect()).collect()).collect())
                .collect();
            components.push(CostComponent::additive_only(horizon, 1, n, negated, Some(b)));
        }
        Cmdp {
            num_states: 1,
            num_actions: n,
            horizon,
            initial_state: 0,
            kernel: vec![vec![vec![1.0]; n]],
            components,
        }
    }

    #[test]
    fn lattice_sizes() {
        assert_eq!(simplex_lattice_size(20, 2), 21);
        assert_eq!(simplex_lattice_size(1, 3), 3);
        assert_eq!(simplex_lattice_size(2, 3), 6);
        assert_eq!(simplex_lattice(2, 3).len(), 6);
        assert!(simplex_lattice(4, 3).iter().all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn unconstrained_single_state_enumeration() {
        let model = one_state(3, vec![2.0, 1.0, 3.0], None);
        let out = enumerate_deterministic(&model, &OracleOptions::default()).unwrap();
        assert_eq!(out.points_evaluated, 27);
        assert_eq!(out.best_value, Some(3.0));
        assert_eq!(out.method, OracleMethod::DeterministicEnumeration);
    }

    #[test]
    fn unit_step_is_deterministic_enumeration() {
        let model = one_state(2, vec![2.0, 1.0], Some(-3.5));
        let det = enumerate_deterministic(&model, &OracleOptions::default()).unwrap();
        let grid = grid_search(&model, 1.0, &OracleOptions::default()).unwrap();
        assert_eq!(det.best_value, grid.best_value);
        assert_eq!(det.points_evaluated, grid.points_evaluated);
        assert_eq!(det.best_value, Some(4.0));
    }

    #[test]
    fn impossible_bound_has_no_feasible_policy() {
        let model = one_state(2, vec![2.0, 1.0], Some(-100.0));
        let out = enumerate_deterministic(&model, &OracleOptions::default()).unwrap();
        assert_eq!(out.best_value, None);
        assert!(out.best_policy.is_none());
    }

    #[test]
    fn grid_point_count() {
        let model = Cmdp {
            num_states: 2,
            num_actions: 2,
            horizon: 2,
            initial_state: 0,
            kernel: vec![vec![vec![0.5, 0.5]; 2]; 2],
            components: vec![CostComponent::additive_only(2, 2, 2, vec![vec![vec![vec![1.0; 2]; 2]; 2]; 2], None)],
        };
        let out = grid_search(&model, 0.05, &OracleOptions::default()).unwrap();
        assert_eq!(out.points_evaluated, 21u128.pow(4));
        assert!((out.resolution - 0.05).abs() < 1e-15);
    }

    #[test]
    fn caps_and_bad_steps() {
        let model = one_state(4, vec![1.0, 2.0], None);
        let tiny = OracleOptions { max_points: 10 };
        assert!(matches!(enumerate_deterministic(&model, &tiny), Err(Error::SizeLimit(_))));
        assert!(grid_search(&model, 0.0, &OracleOptions::default()).is_err());
        assert!(grid_search(&model, 1.5, &OracleOptions::default()).is_err());
    }

    #[test]
    fn backward_induction_requires_additive() {
        let model = one_state(3, vec![2.0, 1.0], None);
        let (v, policy) = backward_induction(&model, 0).unwrap();
        assert_eq!(v, 3.0);
        assert_eq!(policy.rules[0][0], vec![0.0, 1.0]);
        let mut mixed = model.clone();
        mixed.components[0].alpha = 1.0;
        assert!(backward_induction(&mixed, 0).is_err());
    }
}
