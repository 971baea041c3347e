//! Markov policies, occupation measures on the augmented model and the exact
//! evaluators tying the augmented model back to the original one.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentedMdp;
use crate::error::{Error, Result};
use crate::model::Cmdp;

/// Row-sum tolerance for decision rules.
pub const POLICY_TOL: f64 = 1e-12;

/// Mass below which a state is treated as unreachable when extracting a policy.
pub const REACH_TOL: f64 = 1e-12;

/// Time-indexed randomized decision rules `d_t(a | x)`, stored `[t][x][a]`.
///
/// The same object stands for a policy on the augmented model that ignores
/// the survival bits: it is read at `(x, z)` for every `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovPolicy {
    pub rules: Vec<Vec<Vec<f64>>>,
}

impl MarkovPolicy {
    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        MarkovPolicy { rules: vec![vec![vec![p; num_actions]; num_states]; horizon] }
    }

    /// Deterministic policy from `choice[t][x]`.
    pub fn deterministic(choice: &[Vec<usize>], num_actions: usize) -> Self {
        let rules = choice
            .iter()
            .map(|per_state| {
                per_state
                    .iter()
                    .map(|&a| {
                        let mut row = vec![0.0; num_actions];
                        row[a] = 1.0;
                        row
                    })
                    .collect()
            })
            .collect();
        MarkovPolicy { rules }
    }

    /// The same action at every `(t, x)`.
    pub fn constant(horizon: usize, num_states: usize, num_actions: usize, action: usize) -> Self {
        Self::deterministic(&vec![vec![action; num_states]; horizon], num_actions)
    }

    /// Each row drawn uniformly from the probability simplex.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, horizon: usize, num_states: usize, num_actions: usize) -> Self {
        let rules = (0..horizon)
            .map(|_| (0..num_states).map(|_| simplex_sample(rng, num_actions)).collect())
            .collect();
        MarkovPolicy { rules }
    }

    /// Each row is a uniformly chosen pure action with probability
    /// `vertex_probability`, and uniform on the simplex otherwise.
    pub fn random_mixed<R: Rng + ?Sized>(
        rng: &mut R,
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        vertex_probability: f64,
    ) -> Self {
        let rules = (0..horizon)
            .map(|_| {
                (0..num_states)
                    .map(|_| {
                        if rng.gen_bool(vertex_probability.clamp(0.0, 1.0)) {
                            let mut row = vec![0.0; num_actions];
                            row[rng.gen_range(0..num_actions)] = 1.0;
                            row
                        } else {
                            simplex_sample(rng, num_actions)
                        }
                    })
                    .collect()
            })
            .collect();
        MarkovPolicy { rules }
    }

    #[inline]
    pub fn prob(&self, t: usize, x: usize, a: usize) -> f64 {
        self.rules[t][x][a]
    }

    pub fn horizon(&self) -> usize {
        self.rules.len()
    }

    /// Checks dimensions against `cmdp` and that every row is a distribution.
    pub fn check(&self, cmdp: &Cmdp) -> Result<()> {
        if self.rules.len() != cmdp.horizon {
            return Err(Error::Dimension(format!(
                "policy has {} stages, model horizon is {}",
                self.rules.len(),
                cmdp.horizon
            )));
        }
        for (t, stage) in self.rules.iter().enumerate() {
            if stage.len() != cmdp.num_states {
                return Err(Error::Dimension(format!(
                    "policy stage {t} covers {} states, model has {}",
                    stage.len(),
                    cmdp.num_states
                )));
            }
            for (x, row) in stage.iter().enumerate() {
                if row.len() != cmdp.num_actions {
                    return Err(Error::Dimension(format!(
                        "policy row ({t}, {x}) has {} actions, model has {}",
                        row.len(),
                        cmdp.num_actions
                    )));
                }
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| !(*p >= 0.0)) || !((sum - 1.0).abs() <= POLICY_TOL) {
                    return Err(Error::Precondition(format!(
                        "policy row ({t}, {x}) is not a probability distribution (sum {sum})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Uniform draw from the `(n-1)`-simplex via normalized exponentials.
pub(crate) fn simplex_sample<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let mut row: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= total);
    row
}

/// Column layout shared by occupation measures and the bilinear program.
///
/// Stage variables `w_t(X, a)` come first, `t`-major then augmented state then
/// action, followed by the terminal masses `w_T(X)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub num_bits: usize,
}

impl Layout {
    pub fn of(aug: &AugmentedMdp) -> Self {
        Layout {
            horizon: aug.horizon(),
            num_states: aug.num_states(),
            num_actions: aug.num_actions(),
            num_bits: aug.num_bits(),
        }
    }

    pub fn num_aug_states(&self) -> usize {
        self.num_states << self.num_bits
    }

    pub fn all_ones(&self) -> usize {
        (1 << self.num_bits) - 1
    }

    #[inline]
    pub fn col(&self, t: usize, state: usize, a: usize) -> usize {
        (t * self.num_aug_states() + state) * self.num_actions + a
    }

    #[inline]
    pub fn terminal_col(&self, state: usize) -> usize {
        self.num_stage_columns() + state
    }

    pub fn num_stage_columns(&self) -> usize {
        self.horizon * self.num_aug_states() * self.num_actions
    }

    pub fn num_columns(&self) -> usize {
        self.num_stage_columns() + self.num_aug_states()
    }

    /// Whether an augmented state belongs to the all-ones block `W1`.
    #[inline]
    pub fn in_first_block(&self, state: usize) -> bool {
        state & self.all_ones() == self.all_ones()
    }
}

/// Occupation measure `W = (W1, W2)` plus terminal masses, stored flat in
/// [`Layout`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    layout: Layout,
    values: Vec<f64>,
}

impl OccupancyMeasure {
    pub fn zeros(layout: Layout) -> Self {
        OccupancyMeasure { layout, values: vec![0.0; layout.num_columns()] }
    }

    pub fn from_values(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.num_columns() {
            return Err(Error::Dimension(format!(
                "{} values for a layout with {} columns",
                values.len(),
                layout.num_columns()
            )));
        }
        Ok(OccupancyMeasure { layout, values })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    #[inline]
    pub fn w(&self, t: usize, state: usize, a: usize) -> f64 {
        self.values[self.layout.col(t, state, a)]
    }

    #[inline]
    pub fn w_terminal(&self, state: usize) -> f64 {
        self.values[self.layout.terminal_col(state)]
    }

    /// `sum_a w_t(state, a)`.
    pub fn state_mass(&self, t: usize, state: usize) -> f64 {
        let start = self.layout.col(t, state, 0);
        self.values[start..start + self.layout.num_actions].iter().sum()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Largest absolute componentwise difference.
    pub fn max_abs_diff(&self, other: &OccupancyMeasure) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

/// Forward recursion of the state-action distribution of the augmented
/// chain started at `(s, 1)` under a bit-indifferent policy.
pub fn policy_to_occupancy(aug: &AugmentedMdp, policy: &MarkovPolicy) -> OccupancyMeasure {
    let layout = Layout::of(aug);
    let (s, n, bits) = (layout.num_aug_states(), layout.num_actions, layout.num_bits);
    let mut occ = OccupancyMeasure::zeros(layout);
    let mut mass = vec![0.0; s];
    mass[aug.initial_state()] = 1.0;
    for t in 0..layout.horizon {
        for (state, &p) in mass.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let x = state >> bits;
            for a in 0..n {
                occ.values[layout.col(t, state, a)] = p * policy.prob(t, x, a);
            }
        }
        let mut next = vec![0.0; s];
        for state in 0..s {
            for a in 0..n {
                let w = occ.values[layout.col(t, state, a)];
                if w == 0.0 {
                    continue;
                }
                for (to, q) in aug.kernel_row(t + 1, state, a).iter().enumerate() {
                    next[to] += w * q;
                }
            }
        }
        mass = next;
    }
    for (state, p) in mass.into_iter().enumerate() {
        occ.values[layout.terminal_col(state)] = p;
    }
    occ
}

/// Decision rules read off the all-ones block; uniform where that block has
/// (numerically) no mass.
pub fn occupancy_to_policy(occ: &OccupancyMeasure) -> MarkovPolicy {
    let layout = occ.layout;
    let n = layout.num_actions;
    let rules = (0..layout.horizon)
        .map(|t| {
            (0..layout.num_states)
                .map(|x| {
                    let state = (x << layout.num_bits) | layout.all_ones();
                    let row: Vec<f64> = (0..n).map(|a| occ.w(t, state, a).max(0.0)).collect();
                    let total: f64 = row.iter().sum();
                    if total < REACH_TOL {
                        vec![1.0 / n as f64; n]
                    } else {
                        row.into_iter().map(|v| v / total).collect()
                    }
                })
                .collect()
        })
        .collect();
    MarkovPolicy { rules }
}

/// Value of component `i` on the augmented model: expected stage costs plus
/// the terminal bit reward, both under the induced occupation measure.
pub fn evaluate_augmented(aug: &AugmentedMdp, policy: &MarkovPolicy, component: usize) -> f64 {
    occupancy_value(aug, &policy_to_occupancy(aug, policy), component)
}

/// Linear value of component `i` at an arbitrary occupation measure.
pub fn occupancy_value(aug: &AugmentedMdp, occ: &OccupancyMeasure, component: usize) -> f64 {
    let layout = occ.layout;
    let mut value = 0.0;
    for t in 0..layout.horizon {
        for state in 0..layout.num_aug_states() {
            for a in 0..layout.num_actions {
                let w = occ.w(t, state, a);
                if w != 0.0 {
                    value += w * aug.stage_cost(t, component, state, a);
                }
            }
        }
    }
    for state in 0..layout.num_aug_states() {
        value += occ.w_terminal(state) * aug.terminal_cost(component, state);
    }
    value
}

/// Exact `E[sum_t r_t + alpha * prod_t f_t]` on the original model by
/// backward recursion, once for the additive part and once for the product.
pub fn evaluate_direct(cmdp: &Cmdp, policy: &MarkovPolicy, component: usize) -> f64 {
    let (m, n) = (cmdp.num_states, cmdp.num_actions);
    let comp = &cmdp.components[component];
    let mut additive = vec![0.0; m];
    let mut product = vec![1.0; m];
    for t in (0..cmdp.horizon).rev() {
        let mut next_add = vec![0.0; m];
        let mut next_prod = vec![0.0; m];
        for x in 0..m {
            for a in 0..n {
                let d = policy.prob(t, x, a);
                if d == 0.0 {
                    continue;
                }
                let (mut add, mut prod) = (0.0, 0.0);
                for y in 0..m {
                    let q = cmdp.q(x, a, y);
                    add += q * (comp.r(t, x, a, y) + additive[y]);
                    prod += q * comp.f(t, x, a, y) * product[y];
                }
                next_add[x] += d * add;
                next_prod[x] += d * prod;
            }
        }
        additive = next_add;
        product = next_prod;
    }
    let s = cmdp.initial_state;
    additive[s] + comp.alpha * product[s]
}

/// [`evaluate_direct`] for every component.
pub fn evaluate_all_direct(cmdp: &Cmdp, policy: &MarkovPolicy) -> Vec<f64> {
    (0..cmdp.components.len()).map(|i| evaluate_direct(cmdp, policy, i)).collect()
}

/// `P(X_t = x, A_t = a)` on the original chain, `[t][x][a]`.
pub fn state_action_occupancy(cmdp: &Cmdp, policy: &MarkovPolicy) -> Vec<Vec<Vec<f64>>> {
    let (m, n) = (cmdp.num_states, cmdp.num_actions);
    let mut mass = vec![0.0; m];
    mass[cmdp.initial_state] = 1.0;
    let mut out = Vec::with_capacity(cmdp.horizon);
    for t in 0..cmdp.horizon {
        let stage: Vec<Vec<f64>> = (0..m)
            .map(|x| (0..n).map(|a| mass[x] * policy.prob(t, x, a)).collect())
            .collect();
        let mut next = vec![0.0; m];
        for x in 0..m {
            for a in 0..n {
                for y in 0..m {
                    next[y] += stage[x][a] * cmdp.q(x, a, y);
                }
            }
        }
        out.push(stage);
        mass = next;
    }
    out
}

/// `sum_z w_t((x, z), a)` for every `(t, x, a)`, `[t][x][a]`.
pub fn marginal_occupancies(aug: &AugmentedMdp, policy: &MarkovPolicy) -> Vec<Vec<Vec<f64>>> {
    let occ = policy_to_occupancy(aug, policy);
    (0..aug.horizon())
        .map(|t| {
            (0..aug.num_states())
                .map(|x| {
                    (0..aug.num_actions())
                        .map(|a| (0..=aug.all_ones()).map(|mask| occ.w(t, aug.encode(x, mask), a)).sum())
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// `sum_z w_t((x, z), a)` at a single index.
pub fn marginal_occupancy(aug: &AugmentedMdp, policy: &MarkovPolicy, t: usize, x: usize, a: usize) -> f64 {
    let occ = policy_to_occupancy(aug, policy);
    (0..=aug.all_ones()).map(|mask| occ.w(t, aug.encode(x, mask), a)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Monte-Carlo estimate of every component's value; reproducible for a fixed seed.
pub fn simulate(cmdp: &Cmdp, policy: &MarkovPolicy, episodes: usize, seed: u64) -> Result<Vec<Estimate>> {
    if episodes == 0 {
        return Err(Error::Precondition("at least one episode is required".into()));
    }
    policy.check(cmdp)?;
    let (m, n) = (cmdp.num_states, cmdp.num_actions);
    let weighted = |w: &[f64]| {
        WeightedIndex::new(w).map_err(|e| Error::Precondition(format!("cannot sample distribution: {e}")))
    };
    let action_dists = policy
        .rules
        .iter()
        .map(|stage| stage.iter().map(|row| weighted(row)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let next_dists = cmdp
        .kernel
        .iter()
        .map(|per_action| per_action.iter().map(|row| weighted(row)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    debug_assert_eq!(next_dists.len(), m);
    debug_assert!(next_dists.iter().all(|d| d.len() == n));

    let k = cmdp.components.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    let mut additive = vec![0.0; k];
    let mut product = vec![0.0; k];
    for _ in 0..episodes {
        additive.iter_mut().for_each(|v| *v = 0.0);
        product.iter_mut().for_each(|v| *v = 1.0);
        let mut x = cmdp.initial_state;
        for t in 0..cmdp.horizon {
            let a = action_dists[t][x].sample(&mut rng);
            let y = next_dists[x][a].sample(&mut rng);
            for (i, comp) in cmdp.components.iter().enumerate() {
                additive[i] += comp.r(t, x, a, y);
                product[i] *= comp.f(t, x, a, y);
            }
            x = y;
        }
        for (i, comp) in cmdp.components.iter().enumerate() {
            let v = additive[i] + comp.alpha * product[i];
            sum[i] += v;
            sum_sq[i] += v * v;
        }
    }
    let count = episodes as f64;
    Ok((0..k)
        .map(|i| {
            let mean = sum[i] / count;
            let std_error = if episodes > 1 {
                let var = ((sum_sq[i] - count * mean * mean) / (count - 1.0)).max(0.0);
                (var / count).sqrt()
            } else {
                0.0
            };
            Estimate { mean, std_error }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CostComponent;

    fn self_loop(f: f64, r: f64, alpha: f64, horizon: usize, actions: usize) -> Cmdp {
        Cmdp {
            num_states: 1,
            num_actions: actions,
            horizon,
            initial_state: 0,
            kernel: vec![vec![vec![1.0]; actions]],
            components: vec![CostComponent::time_invariant(
                horizon,
                vec![vec![vec![r]; actions]],
                vec![vec![vec![f]; actions]],
                alpha,
                None,
            )],
        }
    }

    #[test]
    fn initial_stage_is_point_mass() {
        let model = self_loop(0.7, 0.0, 1.0, 2, 2);
        let aug = AugmentedMdp::build(&model).unwrap();
        let policy = MarkovPolicy { rules: vec![vec![vec![0.25, 0.75]], vec![vec![0.5, 0.5]]] };
        let occ = policy_to_occupancy(&aug, &policy);
        let start = aug.initial_state();
        assert_eq!(occ.w(0, start, 0), 0.25);
        assert_eq!(occ.w(0, start, 1), 0.75);
        assert_eq!(occ.w(0, aug.encode(0, 0), 0), 0.0);
        // one step of survival: 0.7 stays at z = 1, 0.3 drops to z = 0
        assert!((occ.w(1, start, 0) - 0.35).abs() < 1e-15);
        assert!((occ.w(1, aug.encode(0, 0), 1) - 0.15).abs() < 1e-15);
        assert!((occ.w_terminal(start) - 0.49).abs() < 1e-15);
    }

    #[test]
    fn extraction_normalizes_and_falls_back_to_uniform() {
        let model = Cmdp {
            num_states: 2,
            num_actions: 2,
            horizon: 1,
            initial_state: 0,
            kernel: vec![vec![vec![1.0, 0.0]; 2]; 2],
            components: vec![CostComponent::time_invariant(
                1,
                vec![vec![vec![0.0; 2]; 2]; 2],
                vec![vec![vec![0.5; 2]; 2]; 2],
                1.0,
                None,
            )],
        };
        let aug = AugmentedMdp::build(&model).unwrap();
        let policy = MarkovPolicy { rules: vec![vec![vec![0.25, 0.75], vec![1.0, 0.0]]] };
        let back = occupancy_to_policy(&policy_to_occupancy(&aug, &policy));
        assert_eq!(back.rules[0][0], vec![0.25, 0.75]);
        assert_eq!(back.rules[0][1], vec![0.5, 0.5]);
    }

    #[test]
    fn direct_evaluation_trivial_cases() {
        let chain = self_loop(1.0, 1.0, 0.0, 3, 1);
        assert_eq!(evaluate_direct(&chain, &MarkovPolicy::uniform(3, 1, 1), 0), 3.0);
        let halving = self_loop(0.5, 0.0, 1.0, 2, 1);
        assert_eq!(evaluate_direct(&halving, &MarkovPolicy::uniform(2, 1, 1), 0), 0.25);
    }

    #[test]
    fn augmented_adds_alpha_when_factors_are_one() {
        let model = self_loop(1.0, 2.0, 1.5, 3, 2);
        let aug = AugmentedMdp::build(&model).unwrap();
        let policy = MarkovPolicy::uniform(3, 1, 2);
        assert!((evaluate_augmented(&aug, &policy, 0) - (6.0 + 1.5)).abs() < 1e-12);
    }

    #[test]
    fn no_absorption_keeps_all_mass_on_ones() {
        let model = self_loop(1.0, 0.0, 1.0, 3, 2);
        let aug = AugmentedMdp::build(&model).unwrap();
        let occ = policy_to_occupancy(&aug, &MarkovPolicy::uniform(3, 1, 2));
        for t in 0..3 {
            assert_eq!(occ.state_mass(t, aug.encode(0, 0)), 0.0);
            assert!((occ.state_mass(t, aug.initial_state()) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn simulate_is_exact_on_deterministic_chain() {
        let model = self_loop(0.5, 1.0, 2.0, 3, 1);
        let est = simulate(&model, &MarkovPolicy::uniform(3, 1, 1), 50, 7).unwrap();
        assert_eq!(est[0].mean, 3.0 + 2.0 * 0.125);
        assert_eq!(est[0].std_error, 0.0);
    }

    #[test]
    fn simulate_is_seeded() {
        let model = self_loop(0.5, 1.0, 2.0, 3, 2);
        let policy = MarkovPolicy { rules: vec![vec![vec![0.3, 0.7]]; 3] };
        let mut noisy = model.clone();
        noisy.kernel = vec![vec![vec![1.0]; 2]];
        noisy.components[0].additive[1][0][1][0] = 5.0;
        let a = simulate(&noisy, &policy, 1000, 11).unwrap();
        let b = simulate(&noisy, &policy, 1000, 11).unwrap();
        assert_eq!(a, b);
        assert!(simulate(&model, &policy, 0, 1).is_err());
    }

    #[test]
    fn policy_check_catches_bad_rows() {
        let model = self_loop(0.5, 1.0, 2.0, 2, 2);
        assert!(MarkovPolicy::uniform(2, 1, 2).check(&model).is_ok());
        assert!(MarkovPolicy::uniform(3, 1, 2).check(&model).is_err());
        let bad = MarkovPolicy { rules: vec![vec![vec![0.5, 0.6]]; 2] };
        assert!(matches!(bad.check(&model), Err(Error::Precondition(_))));
    }
}
