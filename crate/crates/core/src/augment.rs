//! Binary state augmentation.
//!
//! Every component with a nonzero weight gets one survival bit. A bit that is
//! set stays set with probability `f_t(x, a, x')` and otherwise drops to zero,
//! where it is absorbed. The expected terminal value of the bit is then the
//! expected product of the factors, so the multiplicative part of a cost
//! becomes the terminal cost `alpha * z` of an additive model on `X x {0,1}^K'`.
//!
//! Augmented states are encoded as `x * 2^K' + mask`, bit `b` of `mask` being
//! the survival bit of the `b`-th augmented component.

use crate::error::{Error, Result};
use crate::model::{self, Cmdp};

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    /// Largest admissible number of survival bits.
    pub max_bits: usize,
    /// Largest admissible number of stored kernel entries (`T * S * n * S`).
    pub max_kernel_entries: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { max_bits: 16, max_kernel_entries: 1 << 26 }
    }
}

#[derive(Debug, Clone)]
pub struct AugmentedMdp {
    base: Cmdp,
    bit_of: Vec<Option<usize>>,
    bit_components: Vec<usize>,
    num_aug_states: usize,
    /// `kernels[t - 1][(from * n + a) * S + to]` for `t` in `1..=T`.
    kernels: Vec<Vec<f64>>,
    /// `stage_costs[t][i][x * n + a]`; independent of the survival bits.
    stage_costs: Vec<Vec<Vec<f64>>>,
}

impl AugmentedMdp {
    pub fn build(cmdp: &Cmdp) -> Result<Self> {
        Self::build_with(cmdp, &BuildOptions::default())
    }

    pub fn build_with(cmdp: &Cmdp, options: &BuildOptions) -> Result<Self> {
        let violations = model::validate(cmdp);
        if !violations.is_empty() {
            return Err(Error::Invalid(violations));
        }
        let unnormalized = cmdp.components.iter().position(|c| {
            c.multiplicative.iter().flatten().flatten().flatten().any(|v| !(0.0..=1.0).contains(v))
        });
        if let Some(i) = unnormalized {
            return Err(Error::Precondition(format!(
                "component {i} has multiplicative factors outside [0, 1]; normalize the model first"
            )));
        }

        let mut bit_of = vec![None; cmdp.components.len()];
        let mut bit_components = Vec::new();
        for (i, comp) in cmdp.components.iter().enumerate() {
            if comp.alpha != 0.0 {
                bit_of[i] = Some(bit_components.len());
                bit_components.push(i);
            }
        }
        let num_bits = bit_components.len();
        if num_bits > options.max_bits {
            return Err(Error::SizeLimit(format!(
                "{num_bits} survival bits exceed the limit of {}",
                options.max_bits
            )));
        }

        let (m, n, horizon) = (cmdp.num_states, cmdp.num_actions, cmdp.horizon);
        let num_aug_states = m << num_bits;
        let entries = (horizon as u128) * (num_aug_states as u128).pow(2) * (n as u128);
        if entries > options.max_kernel_entries as u128 {
            return Err(Error::SizeLimit(format!(
                "augmented kernel needs {entries} entries, limit is {}",
                options.max_kernel_entries
            )));
        }

        let mut aug = AugmentedMdp {
            base: cmdp.clone(),
            bit_of,
            bit_components,
            num_aug_states,
            kernels: Vec::with_capacity(horizon),
            stage_costs: Vec::with_capacity(horizon),
        };
        for t in 1..=horizon {
            let kernel = aug.assemble_kernel(t);
            aug.kernels.push(kernel);
        }
        for t in 0..horizon {
            let per_component = cmdp
                .components
                .iter()
                .map(|comp| {
                    let mut costs = vec![0.0; m * n];
                    for x in 0..m {
                        for a in 0..n {
                            costs[x * n + a] =
                                (0..m).map(|y| comp.r(t, x, a, y) * cmdp.q(x, a, y)).sum();
                        }
                    }
                    costs
                })
                .collect();
            aug.stage_costs.push(per_component);
        }
        Ok(aug)
    }

    fn assemble_kernel(&self, t: usize) -> Vec<f64> {
        let (m, n) = (self.base.num_states, self.base.num_actions);
        let s = self.num_aug_states;
        let mut kernel = vec![0.0; s * n * s];
        let mut factors = vec![0.0; self.num_bits()];
        for from in 0..s {
            let (x, mask) = self.decode(from);
            for a in 0..n {
                let row = &mut kernel[(from * n + a) * s..(from * n + a + 1) * s];
                for y in 0..m {
                    let q = self.base.q(x, a, y);
                    if q == 0.0 {
                        continue;
                    }
                    for (b, &i) in self.bit_components.iter().enumerate() {
                        factors[b] = self.base.components[i].f(t - 1, x, a, y);
                    }
                    // Only sub-masks of `mask` are reachable; cleared bits contribute 0^0 = 1.
                    let mut next = mask;
                    loop {
                        let mut p = q;
                        for (b, &f) in factors.iter().enumerate() {
                            if mask >> b & 1 == 1 {
                                p *= if next >> b & 1 == 1 { f } else { 1.0 - f };
                            }
                        }
                        row[self.encode(y, next)] = p;
                        if next == 0 {
                            break;
                        }
                        next = (next - 1) & mask;
                    }
                }
            }
        }
        kernel
    }

    pub fn base(&self) -> &Cmdp {
        &self.base
    }

    pub fn num_bits(&self) -> usize {
        self.bit_components.len()
    }

    pub fn num_aug_states(&self) -> usize {
        self.num_aug_states
    }

    pub fn num_states(&self) -> usize {
        self.base.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.base.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.base.horizon
    }

    pub fn num_components(&self) -> usize {
        self.base.components.len()
    }

    /// Survival bit carried by component `i`, if its weight is nonzero.
    pub fn bit_of(&self, component: usize) -> Option<usize> {
        self.bit_of.get(component).copied().flatten()
    }

    /// Component index owning each bit.
    pub fn bit_components(&self) -> &[usize] {
        &self.bit_components
    }

    pub fn all_ones(&self) -> usize {
        (1 << self.num_bits()) - 1
    }

    #[inline]
    pub fn encode(&self, x: usize, mask: usize) -> usize {
        (x << self.num_bits()) | mask
    }

    #[inline]
    pub fn decode(&self, state: usize) -> (usize, usize) {
        (state >> self.num_bits(), state & self.all_ones())
    }

    /// `(s, 1)`.
    pub fn initial_state(&self) -> usize {
        self.encode(self.base.initial_state, self.all_ones())
    }

    /// Transition probability into epoch `t` (`1..=T`); uses the factors of stage `t - 1`.
    #[inline]
    pub fn kernel(&self, t: usize, from: usize, a: usize, to: usize) -> f64 {
        self.kernel_row(t, from, a)[to]
    }

    pub fn kernel_row(&self, t: usize, from: usize, a: usize) -> &[f64] {
        let (s, n) = (self.num_aug_states, self.num_actions());
        let start = (from * n + a) * s;
        &self.kernels[t - 1][start..start + s]
    }

    /// Expected stage cost of component `i` at `(t, state, a)`, `t < T`.
    #[inline]
    pub fn stage_cost(&self, t: usize, component: usize, state: usize, a: usize) -> f64 {
        let x = state >> self.num_bits();
        self.stage_costs[t][component][x * self.num_actions() + a]
    }

    /// `alpha_i * z_bit(i)`, zero for components without a bit.
    pub fn terminal_cost(&self, component: usize, state: usize) -> f64 {
        match self.bit_of(component) {
            Some(b) if state >> b & 1 == 1 => self.base.components[component].alpha,
            _ => 0.0,
        }
    }

    /// Mass sent to original state `y`, summed over all successor masks.
    pub fn marginal_over_all_z(&self, t: usize, from: usize, a: usize, y: usize) -> f64 {
        let row = self.kernel_row(t, from, a);
        (0..=self.all_ones()).map(|mask| row[self.encode(y, mask)]).sum()
    }

    /// Mass sent to `y` with component `j`'s bit kept set. Requires that bit
    /// to be set in `from`.
    pub fn marginal_keep_bit(&self, t: usize, from: usize, a: usize, y: usize, j: usize) -> Result<f64> {
        let b = self.require_set_bit(from, j)?;
        let row = self.kernel_row(t, from, a);
        Ok((0..=self.all_ones())
            .filter(|mask| mask >> b & 1 == 1)
            .map(|mask| row[self.encode(y, mask)])
            .sum())
    }

    /// Complement of [`marginal_keep_bit`](Self::marginal_keep_bit).
    pub fn marginal_drop_bit(&self, t: usize, from: usize, a: usize, y: usize, j: usize) -> Result<f64> {
        let b = self.require_set_bit(from, j)?;
        let row = self.kernel_row(t, from, a);
        Ok((0..=self.all_ones())
            .filter(|mask| mask >> b & 1 == 0)
            .map(|mask| row[self.encode(y, mask)])
            .sum())
    }

    fn require_set_bit(&self, state: usize, component: usize) -> Result<usize> {
        let b = self.bit_of(component).ok_or_else(|| {
            Error::Precondition(format!("component {component} carries no survival bit"))
        })?;
        if state >> b & 1 == 0 {
            return Err(Error::Precondition(format!(
                "bit of component {component} is already cleared in state {state}"
            )));
        }
        Ok(b)
    }
}
