//! Dense two-phase primal simplex with Bland's rule.
//!
//! Solves `min c.x  s.t.  A x = b,  G x <= h,  x >= 0`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq_matrix: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub ineq_matrix: Vec<Vec<f64>>,
    pub ineq_rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        LinearProgram { objective, ..Default::default() }
    }

    pub fn num_variables(&self) -> usize {
        self.objective.len()
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.eq_matrix.push(row);
        self.eq_rhs.push(rhs);
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) {
        self.ineq_matrix.push(row);
        self.ineq_rhs.push(rhs);
    }

    fn check(&self) -> Result<()> {
        let n = self.num_variables();
        if self.eq_matrix.len() != self.eq_rhs.len() || self.ineq_matrix.len() != self.ineq_rhs.len() {
            return Err(Error::Dimension("row count differs from right-hand side length".into()));
        }
        for (kind, rows) in [("equality", &self.eq_matrix), ("inequality", &self.ineq_matrix)] {
            if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
                return Err(Error::Dimension(format!(
                    "{kind} row {i} has {} coefficients, expected {n}",
                    row.len()
                )));
            }
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self.eq_matrix.iter().flatten().all(|v| v.is_finite())
            && self.ineq_matrix.iter().flatten().all(|v| v.is_finite())
            && self.eq_rhs.iter().chain(&self.ineq_rhs).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("linear program data".into()));
        }
        Ok(())
    }

    /// `(max |A x - b|, max (G x - h)+, max (-x)+)`
    pub fn residuals(&self, x: &[f64]) -> (f64, f64, f64) {
        let dot = |row: &[f64]| row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
        let eq = self
            .eq_matrix
            .iter()
            .zip(&self.eq_rhs)
            .fold(0.0_f64, |acc, (row, b)| acc.max((dot(row) - b).abs()));
        let ineq = self
            .ineq_matrix
            .iter()
            .zip(&self.ineq_rhs)
            .fold(0.0_f64, |acc, (row, h)| acc.max(dot(row) - h));
        let neg = x.iter().fold(0.0_f64, |acc, v| acc.max(-v));
        (eq, ineq.max(0.0), neg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Meaningful only when `status == Optimal`.
    pub solution: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Smallest admissible pivot magnitude; also the reduced-cost threshold.
    pub pivot_tol: f64,
    /// Phase-1 optimum above which the program is declared infeasible.
    pub infeasibility_tol: f64,
    /// Pivot budget; `None` scales with the tableau size.
    pub max_pivots: Option<usize>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions { pivot_tol: 1e-9, infeasibility_tol: 1e-9, max_pivots: None }
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpOutcome> {
    solve_with(lp, &SimplexOptions::default())
}

pub fn solve_with(lp: &LinearProgram, options: &SimplexOptions) -> Result<LpOutcome> {
    lp.check()?;
    let mut tableau = Tableau::new(lp);
    let budget = options
        .max_pivots
        .unwrap_or(1000 + 50 * (tableau.rows + tableau.width));

    // Phase 1: minimize the sum of artificials.
    let mut phase_one = vec![0.0; tableau.width];
    for j in tableau.artificial_start..tableau.rhs_col() {
        phase_one[j] = 1.0;
    }
    tableau.set_costs(&phase_one);
    let mut pivots = 0;
    if tableau.iterate(tableau.rhs_col(), options, budget, &mut pivots)? == Step::Unbounded {
        // The phase-1 objective is bounded below by zero.
        unreachable!("phase-1 objective cannot be unbounded");
    }
    let infeasibility: f64 = (0..tableau.rows)
        .filter(|&r| tableau.basis[r] >= tableau.artificial_start)
        .map(|r| tableau.at(r, tableau.rhs_col()))
        .sum();
    if infeasibility > options.infeasibility_tol {
        return Ok(LpOutcome { status: LpStatus::Infeasible, solution: Vec::new(), objective: f64::NAN });
    }
    tableau.expel_artificials(options.pivot_tol);

    // Phase 2 over the structural and slack columns only.
    let mut costs = vec![0.0; tableau.width];
    costs[..lp.num_variables()].copy_from_slice(&lp.objective);
    tableau.set_costs(&costs);
    let status = match tableau.iterate(tableau.artificial_start, options, budget, &mut pivots)? {
        Step::Optimal => LpStatus::Optimal,
        Step::Unbounded => LpStatus::Unbounded,
    };
    if status == LpStatus::Unbounded {
        return Ok(LpOutcome { status, solution: Vec::new(), objective: f64::NEG_INFINITY });
    }

    let mut solution = vec![0.0; lp.num_variables()];
    for r in 0..tableau.rows {
        let j = tableau.basis[r];
        if j < solution.len() {
            solution[j] = tableau.at(r, tableau.rhs_col());
        }
    }
    let objective = solution.iter().zip(&lp.objective).map(|(x, c)| x * c).sum();
    debug_assert!({
        let (eq, ineq, neg) = lp.residuals(&solution);
        eq <= 1e-8 && ineq <= 1e-8 && neg <= 1e-10
    });
    Ok(LpOutcome { status, solution, objective })
}

#[derive(Debug, PartialEq, Eq)]
enum Step {
    Optimal,
    Unbounded,
}

/// Row-major tableau `[A | S | R | b]` with a separate reduced-cost row.
struct Tableau {
    rows: usize,
    width: usize,
    data: Vec<f64>,
    costs: Vec<f64>,
    basis: Vec<usize>,
    artificial_start: usize,
}

impl Tableau {
    fn new(lp: &LinearProgram) -> Self {
        let n = lp.num_variables();
        let (me, mi) = (lp.eq_matrix.len(), lp.ineq_matrix.len());
        // Inequality rows with h >= 0 start with their slack basic; every
        // other row needs an artificial.
        let needs_artificial: Vec<bool> = (0..me)
            .map(|_| true)
            .chain(lp.ineq_rhs.iter().map(|h| *h < 0.0))
            .collect();
        let num_artificial = needs_artificial.iter().filter(|b| **b).count();
        let rows = me + mi;
        let artificial_start = n + mi;
        let width = artificial_start + num_artificial + 1;
        let mut data = vec![0.0; rows * width];
        let mut basis = vec![0; rows];
        let mut next_artificial = artificial_start;
        for r in 0..rows {
            let (row, rhs) = if r < me {
                (&lp.eq_matrix[r], lp.eq_rhs[r])
            } else {
                (&lp.ineq_matrix[r - me], lp.ineq_rhs[r - me])
            };
            let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
            let line = &mut data[r * width..(r + 1) * width];
            for (dst, v) in line[..n].iter_mut().zip(row) {
                *dst = sign * v;
            }
            if r >= me {
                line[n + r - me] = sign;
            }
            line[width - 1] = sign * rhs;
            if needs_artificial[r] {
                line[next_artificial] = 1.0;
                basis[r] = next_artificial;
                next_artificial += 1;
            } else {
                basis[r] = n + r - me;
            }
        }
        Tableau { rows, width, data, costs: vec![0.0; width], basis, artificial_start }
    }

    #[inline]
    fn rhs_col(&self) -> usize {
        self.width - 1
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    /// Installs reduced costs `c_j - c_B B^-1 a_j` for the current basis.
    fn set_costs(&mut self, costs: &[f64]) {
        self.costs.copy_from_slice(costs);
        self.costs[self.width - 1] = 0.0;
        for r in 0..self.rows {
            let cb = costs[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            for j in 0..self.width {
                self.costs[j] -= cb * self.data[r * self.width + j];
            }
        }
    }

    /// Bland iterations with entering columns restricted to `0..allowed`.
    fn iterate(&mut self, allowed: usize, options: &SimplexOptions, budget: usize, pivots: &mut usize) -> Result<Step> {
        let tol = options.pivot_tol;
        loop {
            let Some(enter) = (0..allowed).find(|&j| self.costs[j] < -tol) else {
                return Ok(Step::Optimal);
            };
            let rhs = self.rhs_col();
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, enter);
                if a <= tol {
                    continue;
                }
                let ratio = self.at(r, rhs).max(0.0) / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((best, best_ratio)) => {
                        let tie = (ratio - best_ratio).abs() <= 1e-12 * (1.0 + best_ratio.abs());
                        if (!tie && ratio < best_ratio) || (tie && self.basis[r] < self.basis[best]) {
                            Some((r, ratio))
                        } else {
                            Some((best, best_ratio))
                        }
                    }
                };
            }
            let Some((leave, _)) = leave else {
                return Ok(Step::Unbounded);
            };
            *pivots += 1;
            if *pivots > budget {
                return Err(Error::CyclingLimit(budget));
            }
            self.pivot(leave, enter);
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width;
        let inv = 1.0 / self.data[row * w + col];
        for v in &mut self.data[row * w..(row + 1) * w] {
            *v *= inv;
        }
        self.data[row * w + col] = 1.0;
        let pivot_row: Vec<f64> = self.data[row * w..(row + 1) * w].to_vec();
        for r in 0..self.rows {
            if r == row {
                continue;
            }
            let factor = self.data[r * w + col];
            if factor == 0.0 {
                continue;
            }
            let line = &mut self.data[r * w..(r + 1) * w];
            for (v, p) in line.iter_mut().zip(&pivot_row) {
                *v -= factor * p;
            }
            line[col] = 0.0;
            // exact zeros keep degenerate ratio ties exact
            if line[w - 1].abs() < 1e-11 {
                line[w - 1] = 0.0;
            }
        }
        let factor = self.costs[col];
        if factor != 0.0 {
            for (v, p) in self.costs.iter_mut().zip(&pivot_row) {
                *v -= factor * p;
            }
            self.costs[col] = 0.0;
        }
        self.basis[row] = col;
    }

    /// Pivots zero-level artificials out of the basis; rows where that is
    /// impossible are linearly dependent and get dropped.
    fn expel_artificials(&mut self, tol: f64) {
        let mut r = 0;
        while r < self.rows {
            if self.basis[r] < self.artificial_start {
                r += 1;
                continue;
            }
            let replacement = (0..self.artificial_start)
                .filter(|&j| self.at(r, j).abs() > tol)
                .max_by(|&a, &b| self.at(r, a).abs().total_cmp(&self.at(r, b).abs()));
            match replacement {
                Some(j) => {
                    self.pivot(r, j);
                    r += 1;
                }
                None => {
                    let w = self.width;
                    self.data.drain(r * w..(r + 1) * w);
                    self.basis.remove(r);
                    self.rows -= 1;
                }
            }
        }
    }
}
