//! The bilinear program over augmented occupation measures.
//!
//! Variables are `w_t((x, z), a)` for `t < T` and terminal masses `w_T(x, z)`
//! laid out by [`Layout`]. The linear part is the usual flow polytope of the
//! augmented chain started at `(s, 1)` together with one cost row per
//! constraint component. The bilinear rows
//!
//! ```text
//! w_t(x, z, a) * sum_a' w_t(x, 1, a') = w_t(x, 1, a) * sum_a' w_t(x, z, a')
//! ```
//!
//! force the decision rule read at `(x, z)` to equal the one read at `(x, 1)`.
//! Fixing either the all-ones block `W1` or its complement `W2` turns them
//! into linear rows, which is what [`BlpInstance::fix_block`] exploits.

use std::fmt::Write as _;

use crate::augment::AugmentedMdp;
use crate::error::{Error, Result};
use crate::lp::LinearProgram;
use crate::occupancy::{Layout, OccupancyMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Initial,
    Flow { t: usize },
    Terminal,
}

/// A sparse linear equality `sum coef * w[col] = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct EqRow {
    pub kind: RowKind,
    pub state: usize,
    pub coefs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl EqRow {
    fn residual(&self, w: &[f64]) -> f64 {
        self.coefs.iter().map(|(c, v)| v * w[*c]).sum::<f64>() - self.rhs
    }
}

/// Identifies the bilinear row at time `t`, original state `x`, survival
/// mask `mask` (never all-ones) and action `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BilinearTriple {
    pub t: usize,
    pub x: usize,
    pub mask: usize,
    pub a: usize,
}

/// Which block is held fixed when reducing the bilinear program to an LP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    /// Hold `W2` fixed; optimize over `W1` and the terminal masses.
    FixSecond,
    /// Hold `W1` fixed; optimize over `W2` and the terminal masses.
    FixFirst,
}

#[derive(Debug, Clone, Copy)]
pub struct AssembleOptions {
    pub max_columns: usize,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        AssembleOptions { max_columns: 20_000 }
    }
}

#[derive(Debug, Clone)]
pub struct BlpInstance {
    layout: Layout,
    objective: Vec<f64>,
    costs: Vec<Vec<f64>>,
    bounds: Vec<f64>,
    eq_rows: Vec<EqRow>,
    bilinear: Vec<BilinearTriple>,
}

/// An LP over a subset of the program's columns.
#[derive(Debug, Clone)]
pub struct BlockLp {
    pub program: LinearProgram,
    /// Program column for each LP variable.
    pub columns: Vec<usize>,
}

impl BlockLp {
    /// `base` with the free columns overwritten by an LP solution.
    pub fn embed(&self, solution: &[f64], base: &OccupancyMeasure) -> OccupancyMeasure {
        let mut out = base.clone();
        let values = out.values_mut();
        for (&col, &v) in self.columns.iter().zip(solution) {
            values[col] = v;
        }
        out
    }

    /// The free-column values of `occ`, in LP variable order.
    pub fn restrict(&self, occ: &OccupancyMeasure) -> Vec<f64> {
        self.columns.iter().map(|&c| occ.values()[c]).collect()
    }
}

/// Row counts of an assembled instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintCount {
    pub initial: usize,
    pub flow: usize,
    pub terminal: usize,
    pub cost: usize,
    /// Rows actually generated (survival masks other than all-ones).
    pub bilinear: usize,
    /// Rows if the trivially satisfied all-ones mask were included.
    pub bilinear_all_masks: usize,
}

impl ConstraintCount {
    pub fn equalities(&self) -> usize {
        self.initial + self.flow + self.terminal
    }

    /// Rows the program actually carries (nonnegativity excluded).
    pub fn total(&self) -> usize {
        self.equalities() + self.cost + self.bilinear
    }

    /// Count under the tabulated convention: each equality as two
    /// inequalities, bilinear rows for every mask, nonnegativity excluded.
    pub fn tabulated(&self) -> usize {
        2 * self.equalities() + self.cost + self.bilinear_all_masks
    }
}

impl BlpInstance {
    pub fn assemble(aug: &AugmentedMdp) -> Result<Self> {
        Self::assemble_with(aug, &AssembleOptions::default())
    }

    pub fn assemble_with(aug: &AugmentedMdp, options: &AssembleOptions) -> Result<Self> {
        let layout = Layout::of(aug);
        let columns = layout.num_columns();
        if columns > options.max_columns {
            return Err(Error::SizeLimit(format!(
                "bilinear program needs {columns} columns, limit is {}",
                options.max_columns
            )));
        }
        let (s, n, horizon) = (layout.num_aug_states(), layout.num_actions, layout.horizon);

        let component_vector = |i: usize| {
            let mut c = vec![0.0; columns];
            for t in 0..horizon {
                for state in 0..s {
                    for a in 0..n {
                        c[layout.col(t, state, a)] = aug.stage_cost(t, i, state, a);
                    }
                }
            }
            for state in 0..s {
                c[layout.terminal_col(state)] = aug.terminal_cost(i, state);
            }
            c
        };
        let objective = component_vector(0);
        let costs: Vec<Vec<f64>> = (1..aug.num_components()).map(component_vector).collect();
        let bounds = aug.base().bounds();

        let mut eq_rows = Vec::with_capacity((horizon + 1) * s);
        let start = aug.initial_state();
        for state in 0..s {
            eq_rows.push(EqRow {
                kind: RowKind::Initial,
                state,
                coefs: (0..n).map(|a| (layout.col(0, state, a), 1.0)).collect(),
                rhs: if state == start { 1.0 } else { 0.0 },
            });
        }
        // inflow[t][to] = sum over (from, a) of kernel(t, from, a, to) w_{t-1}(from, a)
        for t in 1..=horizon {
            let mut inflow: Vec<Vec<(usize, f64)>> = vec![Vec::new(); s];
            for from in 0..s {
                for a in 0..n {
                    for (to, &q) in aug.kernel_row(t, from, a).iter().enumerate() {
                        if q != 0.0 {
                            inflow[to].push((layout.col(t - 1, from, a), -q));
                        }
                    }
                }
            }
            for (state, incoming) in inflow.into_iter().enumerate() {
                let (kind, own): (RowKind, Vec<(usize, f64)>) = if t < horizon {
                    (RowKind::Flow { t }, (0..n).map(|a| (layout.col(t, state, a), 1.0)).collect())
                } else {
                    (RowKind::Terminal, vec![(layout.terminal_col(state), 1.0)])
                };
                let mut coefs = own;
                coefs.extend(incoming);
                eq_rows.push(EqRow { kind, state, coefs, rhs: 0.0 });
            }
        }

        let mut bilinear = Vec::new();
        for t in 0..horizon {
            for x in 0..layout.num_states {
                for mask in 0..layout.all_ones() {
                    for a in 0..n {
                        bilinear.push(BilinearTriple { t, x, mask, a });
                    }
                }
            }
        }

        Ok(BlpInstance { layout, objective, costs, bounds, eq_rows, bilinear })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn objective_vector(&self) -> &[f64] {
        &self.objective
    }

    pub fn cost_vectors(&self) -> &[Vec<f64>] {
        &self.costs
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn eq_rows(&self) -> &[EqRow] {
        &self.eq_rows
    }

    pub fn bilinear_triples(&self) -> &[BilinearTriple] {
        &self.bilinear
    }

    pub fn variable_count(&self) -> usize {
        self.layout.num_columns()
    }

    pub fn constraint_count(&self) -> ConstraintCount {
        let count = |pred: fn(&RowKind) -> bool| self.eq_rows.iter().filter(|r| pred(&r.kind)).count();
        let l = self.layout;
        ConstraintCount {
            initial: count(|k| matches!(k, RowKind::Initial)),
            flow: count(|k| matches!(k, RowKind::Flow { .. })),
            terminal: count(|k| matches!(k, RowKind::Terminal)),
            cost: self.costs.len(),
            bilinear: self.bilinear.len(),
            bilinear_all_masks: l.horizon * l.num_aug_states() * l.num_actions,
        }
    }

    /// `B(W)`: the objective including the terminal term.
    pub fn objective(&self, occ: &OccupancyMeasure) -> f64 {
        dot(&self.objective, occ.values())
    }

    /// `C1(W)`: one value per constraint component.
    pub fn linear_costs(&self, occ: &OccupancyMeasure) -> Vec<f64> {
        self.costs.iter().map(|c| dot(c, occ.values())).collect()
    }

    /// `max_i (C1_i(W) - b_i)`, `None` when there are no constraints.
    pub fn max_cost_slack(&self, occ: &OccupancyMeasure) -> Option<f64> {
        self.linear_costs(occ)
            .iter()
            .zip(&self.bounds)
            .map(|(c, b)| c - b)
            .reduce(f64::max)
    }

    /// Whether `C1(W) <= b + tol` componentwise.
    pub fn costs_feasible(&self, occ: &OccupancyMeasure, tol: f64) -> bool {
        self.max_cost_slack(occ).is_none_or(|s| s <= tol)
    }

    /// `C2(W)` as the largest absolute violation over all bilinear rows.
    pub fn bilinear_residual(&self, occ: &OccupancyMeasure) -> f64 {
        let l = self.layout;
        let mut worst = 0.0_f64;
        let mut last: Option<(usize, usize, usize)> = None;
        let (mut ones_mass, mut mask_mass) = (0.0, 0.0);
        for tr in &self.bilinear {
            let ones = (tr.x << l.num_bits) | l.all_ones();
            let state = (tr.x << l.num_bits) | tr.mask;
            if last != Some((tr.t, tr.x, tr.mask)) {
                ones_mass = occ.state_mass(tr.t, ones);
                mask_mass = occ.state_mass(tr.t, state);
                last = Some((tr.t, tr.x, tr.mask));
            }
            let r = occ.w(tr.t, state, tr.a) * ones_mass - occ.w(tr.t, ones, tr.a) * mask_mass;
            worst = worst.max(r.abs());
        }
        worst
    }

    /// Largest absolute residual over the initial, flow and terminal rows.
    pub fn equality_residual(&self, occ: &OccupancyMeasure) -> f64 {
        self.eq_rows
            .iter()
            .fold(0.0_f64, |acc, row| acc.max(row.residual(occ.values()).abs()))
    }

    /// Most negative entry, as a nonnegative number.
    pub fn negativity(&self, occ: &OccupancyMeasure) -> f64 {
        occ.values().iter().fold(0.0_f64, |acc, v| acc.max(-v))
    }

    /// The linear relaxation over every column, bilinear rows dropped.
    /// Exact when there are no survival bits.
    pub fn relaxation(&self) -> BlockLp {
        let columns: Vec<usize> = (0..self.variable_count()).collect();
        let zeros = OccupancyMeasure::zeros(self.layout);
        self.reduced(&zeros, columns, None)
    }

    /// Substitutes the fixed block of `occ` into every row, producing an LP
    /// over the other block and the terminal masses.
    pub fn fix_block(&self, occ: &OccupancyMeasure, block: Block) -> BlockLp {
        let l = self.layout;
        let mut columns = Vec::new();
        for t in 0..l.horizon {
            for state in 0..l.num_aug_states() {
                let free = match block {
                    Block::FixSecond => l.in_first_block(state),
                    Block::FixFirst => !l.in_first_block(state),
                };
                if free {
                    columns.extend((0..l.num_actions).map(|a| l.col(t, state, a)));
                }
            }
        }
        columns.extend((0..l.num_aug_states()).map(|state| l.terminal_col(state)));
        self.reduced(occ, columns, Some(block))
    }

    fn reduced(&self, occ: &OccupancyMeasure, columns: Vec<usize>, block: Option<Block>) -> BlockLp {
        let l = self.layout;
        let mut position = vec![usize::MAX; self.variable_count()];
        for (j, &c) in columns.iter().enumerate() {
            position[c] = j;
        }
        let w = occ.values();
        let width = columns.len();
        let mut program = LinearProgram::new(columns.iter().map(|&c| self.objective[c]).collect());

        for row in &self.eq_rows {
            let mut dense = vec![0.0; width];
            let mut rhs = row.rhs;
            let mut any_free = false;
            for &(c, v) in &row.coefs {
                match position[c] {
                    usize::MAX => rhs -= v * w[c],
                    j => {
                        dense[j] += v;
                        any_free = true;
                    }
                }
            }
            if any_free {
                program.add_eq(dense, rhs);
            }
        }

        for (c, b) in self.costs.iter().zip(&self.bounds) {
            let mut dense = vec![0.0; width];
            let mut rhs = *b;
            for (col, &v) in c.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                match position[col] {
                    usize::MAX => rhs -= v * w[col],
                    j => dense[j] += v,
                }
            }
            program.add_le(dense, rhs);
        }

        if let Some(block) = block {
            let n = l.num_actions;
            for tr in &self.bilinear {
                let ones = (tr.x << l.num_bits) | l.all_ones();
                let state = (tr.x << l.num_bits) | tr.mask;
                let mut dense = vec![0.0; width];
                match block {
                    Block::FixSecond => {
                        let mask_mass = occ.state_mass(tr.t, state);
                        let fixed = occ.w(tr.t, state, tr.a);
                        for a in 0..n {
                            let coef = fixed - if a == tr.a { mask_mass } else { 0.0 };
                            dense[position[l.col(tr.t, ones, a)]] = coef;
                        }
                    }
                    Block::FixFirst => {
                        let ones_mass = occ.state_mass(tr.t, ones);
                        let fixed = occ.w(tr.t, ones, tr.a);
                        for a in 0..n {
                            let coef = if a == tr.a { ones_mass } else { 0.0 } - fixed;
                            dense[position[l.col(tr.t, state, a)]] = coef;
                        }
                    }
                }
                if dense.iter().any(|v| *v != 0.0) {
                    program.add_eq(dense, 0.0);
                }
            }
        }
        BlockLp { program, columns }
    }

    /// Plain-text dump: objective, equality rows, cost rows, bilinear rows.
    pub fn dump(&self) -> String {
        let l = self.layout;
        let name = |c: usize| {
            if c >= l.num_stage_columns() {
                format!("wT[{}]", c - l.num_stage_columns())
            } else {
                let a = c % l.num_actions;
                let state = (c / l.num_actions) % l.num_aug_states();
                let t = c / (l.num_actions * l.num_aug_states());
                format!("w[{t},{state},{a}]")
            }
        };
        let linear = |coefs: &mut dyn Iterator<Item = (usize, f64)>| {
            let terms: Vec<String> = coefs.map(|(c, v)| format!("{v:+e} {}", name(c))).collect();
            if terms.is_empty() { "0".to_string() } else { terms.join(" ") }
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# columns {} states {} actions {} horizon {} bits {}",
            self.variable_count(),
            l.num_states,
            l.num_actions,
            l.horizon,
            l.num_bits
        );
        let nz = |v: &[f64]| v.iter().copied().enumerate().filter(|(_, x)| *x != 0.0).collect::<Vec<_>>();
        let _ = writeln!(out, "minimize {}", linear(&mut nz(&self.objective).into_iter()));
        for row in &self.eq_rows {
            let _ = writeln!(
                out,
                "eq {:?} state {}: {} = {:e}",
                row.kind,
                row.state,
                linear(&mut row.coefs.iter().copied()),
                row.rhs
            );
        }
        for (i, (c, b)) in self.costs.iter().zip(&self.bounds).enumerate() {
            let _ = writeln!(out, "cost {}: {} <= {:e}", i + 1, linear(&mut nz(c).into_iter()), b);
        }
        for tr in &self.bilinear {
            let _ = writeln!(out, "bilinear t {} x {} mask {} a {}", tr.t, tr.x, tr.mask, tr.a);
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Variable count `4m(Tn + 1)` for one objective and one constraint, both
/// carrying a survival bit.
pub fn tabulated_variables(m: u128, n: u128, horizon: u32) -> u128 {
    4 * m * (horizon as u128 * n + 1)
}

/// Constraint count `4m(2 + 2T + Tn) + 1` for the same setting.
pub fn tabulated_constraints(m: u128, n: u128, horizon: u32) -> u128 {
    let t = horizon as u128;
    4 * m * (2 + 2 * t + t * n) + 1
}

/// `mn((mn)^T - 1)/(mn - 1)` variables of an LP over histories of running
/// products, i.e. `sum_{k=1..T} (mn)^k`.
pub fn path_augmented_variables(m: u128, n: u128, horizon: u32) -> u128 {
    (1..=horizon).map(|k| (m * n).pow(k)).sum()
}

/// `m + m((mn)^T - 1)/(mn - 1) + 1` constraints for the same LP.
pub fn path_augmented_constraints(m: u128, n: u128, horizon: u32) -> u128 {
    m + m * (0..horizon).map(|k| (m * n).pow(k)).sum::<u128>() + 1
}
