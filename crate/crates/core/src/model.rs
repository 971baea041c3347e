//! The original finite-horizon model: states, actions, a time-homogeneous
//! kernel and a list of cost components, each an additive stage cost plus a
//! weighted product of stage-wise factors.

use std::fmt;

use crate::error::{Error, Result};

/// Row-sum tolerance for the transition kernel.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// `[x][a][x']`
pub type Kernel = Vec<Vec<Vec<f64>>>;

/// `[t][x][a][x']`
pub type StageTensor = Vec<Vec<Vec<Vec<f64>>>>;

/// One cost component: `E[sum_t r_t + alpha * prod_t f_t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostComponent {
    pub additive: StageTensor,
    pub multiplicative: StageTensor,
    pub alpha: f64,
    /// `None` for the objective, `Some(b)` for a constraint `w <= b`.
    pub bound: Option<f64>,
}

impl CostComponent {
    /// A component whose stage tensors are the same at every stage.
    pub fn time_invariant(
        horizon: usize,
        additive: Vec<Vec<Vec<f64>>>,
        multiplicative: Vec<Vec<Vec<f64>>>,
        alpha: f64,
        bound: Option<f64>,
    ) -> Self {
        CostComponent {
            additive: vec![additive; horizon],
            multiplicative: vec![multiplicative; horizon],
            alpha,
            bound,
        }
    }

    /// Purely additive component (`alpha = 0`, `f = 1`).
    pub fn additive_only(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        additive: StageTensor,
        bound: Option<f64>,
    ) -> Self {
        CostComponent {
            additive,
            multiplicative: vec![vec![vec![vec![1.0; num_states]; num_actions]; num_states]; horizon],
            alpha: 0.0,
            bound,
        }
    }

    #[inline]
    pub fn r(&self, t: usize, x: usize, a: usize, y: usize) -> f64 {
        self.additive[t][x][a][y]
    }

    #[inline]
    pub fn f(&self, t: usize, x: usize, a: usize, y: usize) -> f64 {
        self.multiplicative[t][x][a][y]
    }
}

/// Finite-horizon constrained MDP with combined additive/multiplicative costs.
///
/// `components[0]` is the objective; every later component is a constraint
/// carrying a bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Cmdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub initial_state: usize,
    pub kernel: Kernel,
    pub components: Vec<CostComponent>,
}

impl Cmdp {
    #[inline]
    pub fn q(&self, x: usize, a: usize, y: usize) -> f64 {
        self.kernel[x][a][y]
    }

    /// Number of constraint components (`K`).
    pub fn num_constraints(&self) -> usize {
        self.components.len().saturating_sub(1)
    }

    pub fn bounds(&self) -> Vec<f64> {
        self.components
            .iter()
            .skip(1)
            .map(|c| c.bound.unwrap_or(f64::INFINITY))
            .collect()
    }

    /// Number of deterministic Markov policies, saturating at `u128::MAX`.
    pub fn deterministic_policy_count(&self) -> u128 {
        let rows = (self.num_states * self.horizon) as u32;
        (self.num_actions as u128).checked_pow(rows).unwrap_or(u128::MAX)
    }
}

/// A single admissibility failure reported by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyDimension(&'static str),
    InitialState { state: usize, num_states: usize },
    KernelShape(String),
    KernelEntry { x: usize, a: usize, y: usize, value: f64 },
    RowSum { x: usize, a: usize, sum: f64 },
    NoComponents,
    ComponentShape { component: usize, detail: String },
    NonFinite { component: usize, what: &'static str },
    MixedSign { component: usize, stage: usize },
    ObjectiveBound,
    MissingBound { component: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyDimension(what) => write!(f, "{what} must be positive"),
            Violation::InitialState { state, num_states } => {
                write!(f, "initial state {state} outside [0, {num_states})")
            }
            Violation::KernelShape(detail) => write!(f, "kernel shape: {detail}"),
            Violation::KernelEntry { x, a, y, value } => {
                write!(f, "kernel entry Q({y}|{x},{a}) = {value} is not a probability")
            }
            Violation::RowSum { x, a, sum } => {
                write!(f, "kernel row (x={x}, a={a}): row sum {sum} != 1")
            }
            Violation::NoComponents => write!(f, "model has no objective component"),
            Violation::ComponentShape { component, detail } => {
                write!(f, "component {component}: {detail}")
            }
            Violation::NonFinite { component, what } => {
                write!(f, "component {component}: non-finite {what}")
            }
            Violation::MixedSign { component, stage } => write!(
                f,
                "component {component}: multiplicative factor at stage {stage} mixes strict signs"
            ),
            Violation::ObjectiveBound => write!(f, "objective component must not carry a bound"),
            Violation::MissingBound { component } => {
                write!(f, "constraint component {component} has no bound")
            }
        }
    }
}

/// Every violated admissibility condition; empty iff the model is usable.
pub fn validate(cmdp: &Cmdp) -> Vec<Violation> {
    let mut out = Vec::new();
    let (m, n, horizon) = (cmdp.num_states, cmdp.num_actions, cmdp.horizon);
    if m == 0 {
        out.push(Violation::EmptyDimension("num_states"));
    }
    if n == 0 {
        out.push(Violation::EmptyDimension("num_actions"));
    }
    if horizon == 0 {
        out.push(Violation::EmptyDimension("horizon"));
    }
    if cmdp.initial_state >= m {
        out.push(Violation::InitialState { state: cmdp.initial_state, num_states: m });
    }

    if let Some(detail) = shape3_mismatch(&cmdp.kernel, m, n, m) {
        out.push(Violation::KernelShape(detail));
    } else {
        for (x, per_action) in cmdp.kernel.iter().enumerate() {
            for (a, row) in per_action.iter().enumerate() {
                for (y, &value) in row.iter().enumerate() {
                    if !value.is_finite() || value < 0.0 {
                        out.push(Violation::KernelEntry { x, a, y, value });
                    }
                }
                let sum: f64 = row.iter().sum();
                if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
                    out.push(Violation::RowSum { x, a, sum });
                }
            }
        }
    }

    if cmdp.components.is_empty() {
        out.push(Violation::NoComponents);
    }
    for (i, comp) in cmdp.components.iter().enumerate() {
        if i == 0 && comp.bound.is_some() {
            out.push(Violation::ObjectiveBound);
        }
        if i > 0 && comp.bound.is_none() {
            out.push(Violation::MissingBound { component: i });
        }
        if !comp.alpha.is_finite() {
            out.push(Violation::NonFinite { component: i, what: "alpha" });
        }
        if matches!(comp.bound, Some(b) if b.is_nan()) {
            out.push(Violation::NonFinite { component: i, what: "bound" });
        }
        let mut shapes_ok = true;
        for (name, tensor) in [("additive", &comp.additive), ("multiplicative", &comp.multiplicative)] {
            if tensor.len() != horizon {
                out.push(Violation::ComponentShape {
                    component: i,
                    detail: format!("{name} has {} stages, expected {horizon}", tensor.len()),
                });
                shapes_ok = false;
                continue;
            }
            for (t, stage) in tensor.iter().enumerate() {
                if let Some(detail) = shape3_mismatch(stage, m, n, m) {
                    out.push(Violation::ComponentShape {
                        component: i,
                        detail: format!("{name} stage {t}: {detail}"),
                    });
                    shapes_ok = false;
                }
            }
        }
        if !shapes_ok {
            continue;
        }
        if !all_finite(&comp.additive) {
            out.push(Violation::NonFinite { component: i, what: "additive cost" });
        }
        if !all_finite(&comp.multiplicative) {
            out.push(Violation::NonFinite { component: i, what: "multiplicative factor" });
        }
        for (t, stage) in comp.multiplicative.iter().enumerate() {
            let entries = || stage.iter().flatten().flatten().copied();
            let positive = entries().any(|v| v > 0.0);
            let negative = entries().any(|v| v < 0.0);
            if positive && negative {
                out.push(Violation::MixedSign { component: i, stage: t });
            }
        }
    }
    out
}

fn shape3_mismatch(tensor: &[Vec<Vec<f64>>], d0: usize, d1: usize, d2: usize) -> Option<String> {
    if tensor.len() != d0 {
        return Some(format!("outer length {} != {d0}", tensor.len()));
    }
    for (i, mid) in tensor.iter().enumerate() {
        if mid.len() != d1 {
            return Some(format!("[{i}] has length {} != {d1}", mid.len()));
        }
        for (j, inner) in mid.iter().enumerate() {
            if inner.len() != d2 {
                return Some(format!("[{i}][{j}] has length {} != {d2}", inner.len()));
            }
        }
    }
    None
}

fn all_finite(tensor: &StageTensor) -> bool {
    tensor.iter().flatten().flatten().flatten().all(|v| v.is_finite())
}

/// Rescales every multiplicative factor into `[0, 1]` stage by stage.
///
/// Stage `t` of component `i` is divided by `s = max |f_t|` and its common
/// sign `sigma` is stripped; `alpha` absorbs `prod_t sigma * s` so that
/// `alpha * E[prod f]` is unchanged for every policy. A stage with `s = 0`
/// makes the product vanish: the component gets `alpha = 0` and `f = 1`.
pub fn normalize(cmdp: &Cmdp) -> Result<Cmdp> {
    for (i, comp) in cmdp.components.iter().enumerate() {
        if !comp.alpha.is_finite() || !all_finite(&comp.multiplicative) || !all_finite(&comp.additive) {
            return Err(Error::NonFinite(format!("component {i}")));
        }
    }
    if cmdp.kernel.iter().flatten().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel".into()));
    }
    let violations = validate(cmdp);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }

    let mut out = cmdp.clone();
    for comp in &mut out.components {
        let mut alpha = comp.alpha;
        let mut vanishes = false;
        for stage in &mut comp.multiplicative {
            let scale = stage
                .iter()
                .flatten()
                .flatten()
                .fold(0.0_f64, |acc, v| acc.max(v.abs()));
            if scale == 0.0 {
                vanishes = true;
                break;
            }
            let sign = stage
                .iter()
                .flatten()
                .flatten()
                .find(|v| **v != 0.0)
                .map_or(1.0, |v| v.signum());
            for v in stage.iter_mut().flatten().flatten() {
                *v = v.abs() / scale;
            }
            alpha *= sign * scale;
        }
        if vanishes {
            alpha = 0.0;
            for v in comp.multiplicative.iter_mut().flatten().flatten().flatten() {
                *v = 1.0;
            }
        }
        comp.alpha = alpha;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state(horizon: usize, f: f64, alpha: f64) -> Cmdp {
        Cmdp {
            num_states: 1,
            num_actions: 1,
            horizon,
            initial_state: 0,
            kernel: vec![vec![vec![1.0]]],
            components: vec![CostComponent::time_invariant(
                horizon,
                vec![vec![vec![0.0]]],
                vec![vec![vec![f]]],
                alpha,
                None,
            )],
        }
    }

    fn two_state(row: [f64; 2]) -> Cmdp {
        let mut m = single_state(1, 1.0, 1.0);
        m.num_states = 2;
        m.kernel = vec![vec![row.to_vec()], vec![vec![0.0, 1.0]]];
        m.components[0] = CostComponent::time_invariant(
            1,
            vec![vec![vec![0.0; 2]]; 2],
            vec![vec![vec![1.0; 2]]; 2],
            1.0,
            None,
        );
        m
    }

    #[test]
    fn stochastic_row_is_admissible() {
        assert!(validate(&two_state([0.5, 0.5])).is_empty());
    }

    #[test]
    fn overfull_row_is_reported() {
        let v = validate(&two_state([0.5, 0.6]));
        assert_eq!(v.len(), 1);
        match &v[0] {
            Violation::RowSum { x: 0, a: 0, sum } => assert!((sum - 1.1).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        assert!(v[0].to_string().contains("row sum 1.1"));
    }

    #[test]
    fn mixed_sign_stage_is_reported() {
        let mut m = two_state([0.5, 0.5]);
        m.components[0].multiplicative[0][0][0] = vec![0.2, -0.3];
        let v = validate(&m);
        assert_eq!(v, vec![Violation::MixedSign { component: 0, stage: 0 }]);
    }

    #[test]
    fn zero_entries_do_not_mix_signs() {
        let mut m = two_state([0.5, 0.5]);
        m.components[0].multiplicative[0][0][0] = vec![0.0, -0.3];
        m.components[0].multiplicative[0][1][0] = vec![-1.0, 0.0];
        assert!(validate(&m).is_empty());
    }

    #[test]
    fn bound_bookkeeping() {
        let mut m = single_state(1, 1.0, 1.0);
        m.components[0].bound = Some(1.0);
        let mut extra = m.components[0].clone();
        extra.bound = None;
        m.components.push(extra);
        let v = validate(&m);
        assert!(v.contains(&Violation::ObjectiveBound));
        assert!(v.contains(&Violation::MissingBound { component: 1 }));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut m = single_state(2, 1.0, 1.0);
        m.components[0].additive.pop();
        assert!(matches!(validate(&m)[0], Violation::ComponentShape { component: 0, .. }));
    }

    #[test]
    fn normalize_constant_scaling() {
        let n = normalize(&single_state(2, 2.0, 0.5)).unwrap();
        assert_eq!(n.components[0].multiplicative, vec![vec![vec![vec![1.0]]]; 2]);
        assert_eq!(n.components[0].alpha, 2.0);
    }

    #[test]
    fn normalize_absorbs_sign() {
        let n = normalize(&single_state(1, -0.5, 1.0)).unwrap();
        assert_eq!(n.components[0].multiplicative[0][0][0][0], 1.0);
        assert_eq!(n.components[0].alpha, -0.5);
    }

    #[test]
    fn normalize_zero_stage_kills_product() {
        let mut m = single_state(2, 0.7, 3.0);
        m.components[0].multiplicative[1][0][0][0] = 0.0;
        let n = normalize(&m).unwrap();
        assert_eq!(n.components[0].alpha, 0.0);
        assert!(n.components[0].multiplicative.iter().flatten().flatten().flatten().all(|v| *v == 1.0));
    }

    #[test]
    fn normalize_rejects_non_finite() {
        let m = single_state(1, f64::NAN, 1.0);
        assert!(matches!(normalize(&m), Err(Error::NonFinite(_))));
        let m = single_state(1, 1.0, f64::INFINITY);
        assert!(matches!(normalize(&m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn normalize_rejects_invalid() {
        assert!(matches!(normalize(&two_state([0.5, 0.6])), Err(Error::Invalid(_))));
    }
}
