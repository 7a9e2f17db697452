//! Dense two-phase primal simplex.
//!
//! Sized for the path-formulated programs in this crate (hundreds of rows,
//! up to tens of thousands of columns). Dantzig pricing with a switch to
//! Bland's rule once a run of degenerate pivots is detected.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    /// `farkas` satisfies `Σ_i y_i A_ij ≤ 0` for every nonnegative variable
    /// (`= 0` for free ones), `y_i ≤ 0` on `≤` rows, `y_i ≥ 0` on `≥` rows and
    /// `Σ_i y_i b_i > 0`.
    #[error("linear program is infeasible (phase-one residual {residual:.3e})")]
    Infeasible { farkas: Vec<f64>, residual: f64 },
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration limit {0} reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row duals `y` with `c_j - Σ_i y_i A_ij ≥ 0` at a minimum.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

/// `minimize c·x` subject to linear rows, `x ≥ 0` unless marked free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    free: Vec<bool>,
    rows: Vec<Row>,
}

const PIVOT_EPS: f64 = 1e-9;
const COST_EPS: f64 = 1e-9;
const FEAS_EPS: f64 = 1e-8;

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram { objective: vec![0.0; num_vars], free: vec![false; num_vars], rows: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn set_objective(&mut self, var: usize, cost: f64) {
        self.objective[var] = cost;
    }

    pub fn set_free(&mut self, var: usize) {
        self.free[var] = true;
    }

    /// Adds a row and returns its index.
    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        self.rows.push(Row { coeffs, relation, rhs });
        self.rows.len() - 1
    }

    pub fn maximize(&self) -> Result<LpSolution, LpError> {
        let mut neg = self.clone();
        neg.objective.iter_mut().for_each(|c| *c = -*c);
        let mut sol = neg.minimize()?;
        sol.objective = -sol.objective;
        sol.duals.iter_mut().for_each(|y| *y = -*y);
        Ok(sol)
    }

    pub fn minimize(&self) -> Result<LpSolution, LpError> {
        Tableau::build(self).solve(self)
    }
}

struct Tableau {
    m: usize,
    cols: usize,
    /// row-major `m × (cols + 1)`, last column is the right-hand side
    data: Vec<f64>,
    basis: Vec<usize>,
    /// structural column range is `0..n_struct`
    n_struct: usize,
    art_start: usize,
    /// column holding `+e_i` in the normalised row i (slack or artificial)
    unit_col: Vec<usize>,
    /// +1 or -1: how row i was scaled to get a nonnegative rhs
    sign: Vec<f64>,
    /// mapping from original variable to (positive col, optional negative col)
    var_cols: Vec<(usize, Option<usize>)>,
    /// normalised right-hand side before perturbation
    b: Vec<f64>,
    bland: bool,
    iterations: usize,
    limit: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        let mut var_cols = Vec::with_capacity(lp.num_vars());
        let mut n_struct = 0;
        for &free in &lp.free {
            if free {
                var_cols.push((n_struct, Some(n_struct + 1)));
                n_struct += 2;
            } else {
                var_cols.push((n_struct, None));
                n_struct += 1;
            }
        }
        let sign: Vec<f64> = lp.rows.iter().map(|r| if r.rhs < 0.0 { -1.0 } else { 1.0 }).collect();
        let relation: Vec<Relation> = lp
            .rows
            .iter()
            .zip(&sign)
            .map(|(r, &s)| match (r.relation, s < 0.0) {
                (Relation::Le, true) => Relation::Ge,
                (Relation::Ge, true) => Relation::Le,
                (rel, _) => rel,
            })
            .collect();
        let n_slack = relation.iter().filter(|r| **r != Relation::Eq).count();
        let n_art = relation.iter().filter(|r| **r != Relation::Le).count();
        let art_start = n_struct + n_slack;
        let cols = art_start + n_art;
        let width = cols + 1;
        let mut data = vec![0.0; m * width];
        let mut basis = vec![0; m];
        let mut unit_col = vec![0; m];
        let (mut next_slack, mut next_art) = (n_struct, art_start);
        for (i, row) in lp.rows.iter().enumerate() {
            let base = i * width;
            for &(var, a) in &row.coeffs {
                let (p, n) = var_cols[var];
                data[base + p] += sign[i] * a;
                if let Some(n) = n {
                    data[base + n] -= sign[i] * a;
                }
            }
            data[base + cols] = sign[i] * row.rhs;
            match relation[i] {
                Relation::Le => {
                    data[base + next_slack] = 1.0;
                    basis[i] = next_slack;
                    unit_col[i] = next_slack;
                    next_slack += 1;
                }
                Relation::Ge => {
                    data[base + next_slack] = -1.0;
                    next_slack += 1;
                    data[base + next_art] = 1.0;
                    basis[i] = next_art;
                    unit_col[i] = next_art;
                    next_art += 1;
                }
                Relation::Eq => {
                    data[base + next_art] = 1.0;
                    basis[i] = next_art;
                    unit_col[i] = next_art;
                    next_art += 1;
                }
            }
        }
        // A small distinct shift of every right-hand side breaks the ties that
        // make degenerate programs stall; `solve` removes it at the end.
        let b: Vec<f64> = (0..m).map(|i| data[i * width + cols]).collect();
        for (i, bi) in b.iter().enumerate() {
            let spread = 1.0 + ((i * 7919) % 97) as f64 / 97.0;
            data[i * width + cols] += 1e-9 * (1.0 + bi.abs()) * spread;
        }
        let limit = 50 * (m + cols) + 10_000;
        Tableau {
            m,
            cols,
            data,
            basis,
            n_struct,
            art_start,
            unit_col,
            sign,
            var_cols,
            b,
            bland: false,
            iterations: 0,
            limit,
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.cols + 1) + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.data[i * (self.cols + 1) + self.cols]
    }

    fn reduced_costs(&self, cost: &[f64]) -> (Vec<f64>, f64) {
        let mut d = cost.to_vec();
        let mut value = 0.0;
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.data[i * (self.cols + 1)..(i + 1) * (self.cols + 1)];
            for j in 0..self.cols {
                d[j] -= cb * row[j];
            }
            value += cb * row[self.cols];
        }
        (d, value)
    }

    fn pivot(&mut self, r: usize, c: usize, d: &mut [f64], value: &mut f64) {
        let width = self.cols + 1;
        let p = self.at(r, c);
        {
            let row = &mut self.data[r * width..(r + 1) * width];
            for v in row.iter_mut() {
                *v /= p;
            }
            row[c] = 1.0;
        }
        let pivot_row: Vec<f64> = self.data[r * width..(r + 1) * width].to_vec();
        let nz: Vec<usize> = (0..width).filter(|&j| pivot_row[j] != 0.0).collect();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.data[i * width + c];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.data[i * width..(i + 1) * width];
            for &j in &nz {
                row[j] -= f * pivot_row[j];
            }
            row[c] = 0.0;
            if row[self.cols].abs() < 1e-13 {
                row[self.cols] = 0.0;
            }
        }
        let f = d[c];
        if f != 0.0 {
            for &j in &nz {
                if j < self.cols {
                    d[j] -= f * pivot_row[j];
                }
            }
            d[c] = 0.0;
            *value += f * pivot_row[self.cols];
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations on the given reduced costs; `allowed` bounds
    /// the entering columns. Stops early once the objective reaches `floor`,
    /// a known lower bound.
    fn iterate(&mut self, d: &mut [f64], value: &mut f64, allowed: usize, floor: Option<f64>) -> Result<(), LpError> {
        let mut stall = 0usize;
        loop {
            if floor.is_some_and(|f| *value <= f) {
                return Ok(());
            }
            if self.iterations >= self.limit {
                return Err(LpError::IterationLimit(self.limit));
            }
            let entering = if self.bland {
                (0..allowed).find(|&j| d[j] < -COST_EPS)
            } else {
                let mut best = None;
                let mut best_val = -COST_EPS;
                for (j, &dj) in d.iter().enumerate().take(allowed) {
                    if dj < best_val {
                        best_val = dj;
                        best = Some(j);
                    }
                }
                best
            };
            let Some(c) = entering else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, c);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(i) / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            let better = if ratio < lr - 1e-12 {
                                true
                            } else if ratio <= lr + 1e-12 {
                                if self.bland {
                                    self.basis[i] < self.basis[li]
                                } else {
                                    a > self.at(li, c)
                                }
                            } else {
                                false
                            };
                            if better {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, ratio)) = leave else { return Err(LpError::Unbounded) };
            if ratio.abs() < 1e-12 {
                stall += 1;
                if stall > 50 {
                    self.bland = true;
                }
            } else {
                stall = 0;
            }
            self.pivot(r, c, d, value);
            self.iterations += 1;
        }
    }

    fn duals(&self, cost: &[f64], d: &[f64]) -> Vec<f64> {
        (0..self.m).map(|i| self.sign[i] * (cost[self.unit_col[i]] - d[self.unit_col[i]])).collect()
    }

    fn solve(mut self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        // phase one
        let mut cost1 = vec![0.0; self.cols];
        for c in cost1.iter_mut().skip(self.art_start) {
            *c = 1.0;
        }
        if self.art_start < self.cols {
            let scale = 1.0 + (0..self.m).map(|i| self.rhs(i).abs()).fold(0.0, f64::max);
            let (mut d, mut value) = self.reduced_costs(&cost1);
            // the artificial sum is nonnegative, so zero is optimal
            self.iterate(&mut d, &mut value, self.cols, Some(1e-12 * scale))?;
            let residual: f64 = (0..self.m)
                .filter(|&i| self.basis[i] >= self.art_start)
                .map(|i| self.rhs(i))
                .sum();
            if residual > FEAS_EPS * scale {
                return Err(LpError::Infeasible { farkas: self.duals(&cost1, &d), residual });
            }
            // drive artificials out of the basis where possible
            for i in 0..self.m {
                if self.basis[i] < self.art_start {
                    continue;
                }
                let col = (0..self.art_start)
                    .filter(|&j| self.at(i, j).abs() > 1e-7)
                    .max_by(|&a, &b| self.at(i, a).abs().total_cmp(&self.at(i, b).abs()));
                if let Some(j) = col {
                    self.pivot(i, j, &mut d, &mut value);
                }
            }
        }
        // phase two
        let mut cost2 = vec![0.0; self.cols];
        for (var, &(p, n)) in self.var_cols.iter().enumerate() {
            cost2[p] = lp.objective[var];
            if let Some(n) = n {
                cost2[n] = -lp.objective[var];
            }
        }
        self.bland = false;
        let (mut d, mut value) = self.reduced_costs(&cost2);
        self.iterate(&mut d, &mut value, self.art_start, None)?;

        // basic values for the unperturbed right-hand side, B⁻¹b, when the
        // final basis stays feasible for it
        let scale = 1.0 + self.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let restored: Vec<f64> = (0..self.m)
            .map(|r| (0..self.m).map(|i| self.at(r, self.unit_col[i]) * self.b[i]).sum())
            .collect();
        let feasible = restored.iter().all(|&v| v >= -1e-7 * scale);
        let mut col_value = vec![0.0; self.cols];
        for i in 0..self.m {
            col_value[self.basis[i]] = if feasible { restored[i].max(0.0) } else { self.rhs(i).max(0.0) };
        }
        let x: Vec<f64> = self
            .var_cols
            .iter()
            .map(|&(p, n)| col_value[p] - n.map_or(0.0, |n| col_value[n]))
            .collect();
        let objective = lp.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
        let duals = self.duals(&cost2, &d);
        debug_assert!(self.n_struct <= self.art_start);
        Ok(LpSolution { x, objective, duals, iterations: self.iterations })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y; x ≤ 4; 2y ≤ 12; 3x + 2y ≤ 18 → (2, 6), 36
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, 3.0);
        lp.set_objective(1, 5.0);
        lp.add_row(vec![(0, 1.0)], Relation::Le, 4.0);
        lp.add_row(vec![(1, 2.0)], Relation::Le, 12.0);
        lp.add_row(vec![(0, 3.0), (1, 2.0)], Relation::Le, 18.0);
        let sol = lp.maximize().unwrap();
        assert!((sol.objective - 36.0).abs() < 1e-9);
        assert!((sol.x[0] - 2.0).abs() < 1e-9 && (sol.x[1] - 6.0).abs() < 1e-9);
        // duals of the textbook problem: (0, 1.5, 1)
        assert!((sol.duals[1] - 1.5).abs() < 1e-9 && (sol.duals[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_free_variables() {
        // min x - y, x + y = 2, y - x ≤ 1 with y free: x = 0.5, y = 1.5
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, 1.0);
        lp.set_objective(1, -1.0);
        lp.set_free(1);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 2.0);
        lp.add_row(vec![(0, -1.0), (1, 1.0)], Relation::Le, 1.0);
        let sol = lp.minimize().unwrap();
        assert!((sol.objective + 1.0).abs() < 1e-9, "{sol:?}");
    }

    #[test]
    fn infeasible_gives_farkas_ray() {
        // x + y ≥ 3, x ≤ 1, y ≤ 1
        let mut lp = LinearProgram::new(2);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Relation::Ge, 3.0);
        lp.add_row(vec![(0, 1.0)], Relation::Le, 1.0);
        lp.add_row(vec![(1, 1.0)], Relation::Le, 1.0);
        match lp.minimize() {
            Err(LpError::Infeasible { farkas, .. }) => {
                let y = farkas;
                assert!(y[0] >= 0.0 && y[1] <= 0.0 && y[2] <= 0.0);
                assert!(y[0] + y[1] <= 1e-12 && y[0] + y[2] <= 1e-12);
                assert!(3.0 * y[0] + y[1] + y[2] > 0.0);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::new(1);
        lp.set_objective(0, 1.0);
        lp.add_row(vec![(0, 1.0)], Relation::Ge, 1.0);
        assert_eq!(lp.maximize().unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn negative_rhs_rows_are_normalised() {
        // min x, -x ≤ -2 → x = 2
        let mut lp = LinearProgram::new(1);
        lp.set_objective(0, 1.0);
        lp.add_row(vec![(0, -1.0)], Relation::Le, -2.0);
        let sol = lp.minimize().unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-12);
        assert!((sol.duals[0] + 1.0).abs() < 1e-12);
    }
}
