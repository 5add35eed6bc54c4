//! Dense two-phase simplex kernel with dual extraction.
//!
//! Solves `min c'x` subject to equality and inequality rows over
//! non-negative variables. Every returned solution carries one dual value
//! per row, signed as the derivative of the optimal objective with respect
//! to that row's right-hand side, which is what the parametric capacity
//! analysis consumes.
//!
//! The final basis is refactorized against the original data (never the
//! pivoted tableau), so reported primal values, duals, and objective carry
//! only the rounding of two LU solves. A rebuild-and-continue loop guards
//! against tableau drift selecting a suboptimal basis.

use crate::error::{Error, Result};

/// Row sense of a linear constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

/// Handle returned by [`LpProblem::add_row`], used to query duals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowId(usize);

#[derive(Debug, Clone)]
struct LpRow {
    coeffs: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
}

/// A linear program `min c'x` with `x >= 0` and explicit rows.
///
/// Variable upper bounds are expressed as `Le` rows so that their duals are
/// reported like any other row.
#[derive(Debug, Clone)]
pub struct LpProblem {
    num_vars: usize,
    objective: Vec<f64>,
    rows: Vec<LpRow>,
}

/// Optimal solution with row duals and self-diagnostics.
#[derive(Debug, Clone)]
pub struct LpSolution {
    x: Vec<f64>,
    objective: f64,
    row_duals: Vec<f64>,
    max_primal_residual: f64,
    duality_gap: f64,
}

impl LpSolution {
    pub fn value(&self, var: usize) -> f64 {
        self.x[var]
    }

    pub fn primal(&self) -> &[f64] {
        &self.x
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    /// Derivative of the optimal objective with respect to the row's
    /// right-hand side (a subgradient at kinks of the value function).
    pub fn dual(&self, row: RowId) -> f64 {
        self.row_duals[row.0]
    }

    pub fn row_duals(&self) -> &[f64] {
        &self.row_duals
    }

    /// Largest absolute violation of the constraint rows by the primal.
    pub fn max_primal_residual(&self) -> f64 {
        self.max_primal_residual
    }

    /// Absolute difference between primal and dual objective values.
    pub fn duality_gap(&self) -> f64 {
        self.duality_gap
    }
}

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const MAX_REBUILDS: usize = 6;

impl LpProblem {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Sets the objective coefficient of one variable.
    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        assert!(var < self.num_vars, "objective variable out of range");
        self.objective[var] = coeff;
    }

    pub fn add_row<I>(&mut self, coeffs: I, relation: Relation, rhs: f64) -> RowId
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let coeffs: Vec<(usize, f64)> = coeffs
            .into_iter()
            .filter(|&(_, c)| c != 0.0)
            .collect();
        for &(var, coeff) in &coeffs {
            assert!(var < self.num_vars, "row variable out of range");
            assert!(coeff.is_finite(), "row coefficient must be finite");
        }
        assert!(rhs.is_finite(), "row rhs must be finite");
        self.rows.push(LpRow {
            coeffs,
            relation,
            rhs,
        });
        RowId(self.rows.len() - 1)
    }

    /// Solves the program. Infeasible and unbounded instances are reported
    /// as distinct errors; pivot-tolerance exhaustion surfaces as a
    /// numerical failure.
    pub fn solve(&self) -> Result<LpSolution> {
        StandardForm::build(self).solve()
    }
}

/// `min c'x  s.t.  A x = b, x >= 0` with `b >= 0`, slacks appended and
/// artificial columns implied as identity markers.
struct StandardForm {
    m: usize,
    /// Structural columns: user variables then slacks.
    n: usize,
    num_user: usize,
    /// Row-major m x n.
    a: Vec<f64>,
    b: Vec<f64>,
    cost: Vec<f64>,
    /// -1 where the user row was negated during normalization.
    row_sign: Vec<f64>,
    /// Rows that received a slack/surplus column start basic on it.
    initial_slack_basis: Vec<Option<usize>>,
}

/// Basis entry: a structural column `j < n`, or `n + row` for the
/// artificial of `row`.
type Basis = Vec<usize>;

struct Tableau {
    m: usize,
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    reduced: Vec<f64>,
    basis: Basis,
}

enum PivotOutcome {
    Optimal,
    Unbounded,
}

impl StandardForm {
    fn build(p: &LpProblem) -> Self {
        let m = p.rows.len();
        let num_user = p.num_vars;
        let num_slacks = p
            .rows
            .iter()
            .filter(|r| r.relation != Relation::Eq)
            .count();
        let n = num_user + num_slacks;

        let mut a = vec![0.0; m * n];
        let mut b = vec![0.0; m];
        let mut row_sign = vec![1.0; m];
        let mut initial_slack_basis = vec![None; m];
        let mut cost = vec![0.0; n];
        cost[..num_user].copy_from_slice(&p.objective);

        let mut next_slack = num_user;
        for (i, row) in p.rows.iter().enumerate() {
            let sign = if row.rhs < 0.0 { -1.0 } else { 1.0 };
            row_sign[i] = sign;
            b[i] = sign * row.rhs;
            for &(var, coeff) in &row.coeffs {
                a[i * n + var] += sign * coeff;
            }
            let relation = match (row.relation, sign < 0.0) {
                (Relation::Eq, _) => Relation::Eq,
                (Relation::Le, false) | (Relation::Ge, true) => Relation::Le,
                (Relation::Ge, false) | (Relation::Le, true) => Relation::Ge,
            };
            match relation {
                Relation::Eq => {}
                Relation::Le => {
                    a[i * n + next_slack] = 1.0;
                    initial_slack_basis[i] = Some(next_slack);
                    next_slack += 1;
                }
                Relation::Ge => {
                    a[i * n + next_slack] = -1.0;
                    next_slack += 1;
                }
            }
        }

        Self {
            m,
            n,
            num_user,
            a,
            b,
            cost,
            row_sign,
            initial_slack_basis,
        }
    }

    fn column(&self, col: usize, out: &mut [f64]) {
        if col >= self.n {
            // Artificial of row `col - n`.
            out.fill(0.0);
            out[col - self.n] = 1.0;
        } else {
            for i in 0..self.m {
                out[i] = self.a[i * self.n + col];
            }
        }
    }

    /// Phase-2 cost of a basis entry; artificials parked in redundant rows
    /// cost nothing.
    fn basis_cost(&self, entry: usize) -> f64 {
        if entry >= self.n {
            0.0
        } else {
            self.cost[entry]
        }
    }

    fn solve(self) -> Result<LpSolution> {
        if self.m == 0 {
            return self.trivial_unconstrained();
        }
        let basis = self.phase_one()?;
        self.phase_two(basis)
    }

    /// No rows: the optimum is x = 0 unless some cost is negative.
    fn trivial_unconstrained(self) -> Result<LpSolution> {
        if self.cost.iter().any(|&c| c < 0.0) {
            return Err(Error::Unbounded);
        }
        Ok(LpSolution {
            x: vec![0.0; self.num_user],
            objective: 0.0,
            row_duals: Vec::new(),
            max_primal_residual: 0.0,
            duality_gap: 0.0,
        })
    }

    fn phase_one(&self) -> Result<Basis> {
        let tableau_a = self.a.clone();
        let b = self.b.clone();
        let basis: Basis = (0..self.m)
            .map(|i| self.initial_slack_basis[i].unwrap_or(self.n + i))
            .collect();

        // Phase-1 reduced costs: -sum of artificial rows per column.
        let mut reduced = vec![0.0; self.n];
        for i in 0..self.m {
            if basis[i] >= self.n {
                for j in 0..self.n {
                    reduced[j] -= tableau_a[i * self.n + j];
                }
            }
        }

        let mut tableau = Tableau {
            m: self.m,
            n: self.n,
            a: tableau_a,
            b,
            reduced,
            basis,
        };
        match tableau.pivot_until_optimal(true)? {
            PivotOutcome::Optimal => {}
            PivotOutcome::Unbounded => {
                return Err(Error::NumericalFailure(
                    "phase one reported unbounded".into(),
                ))
            }
        }

        let scale = 1.0 + self.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let infeasibility = tableau.artificial_value();
        if infeasibility > 1e-8 * scale {
            return Err(Error::Infeasible(format!(
                "constraint system has no solution (residual {infeasibility:.3e})"
            )));
        }
        tableau.evict_artificials();
        Ok(tableau.basis)
    }

    fn phase_two(&self, mut basis: Basis) -> Result<LpSolution> {
        for _ in 0..MAX_REBUILDS {
            let mut tableau = self.rebuild_tableau(&basis)?;
            if !tableau.has_entering_candidate() {
                return self.extract_solution(&basis);
            }
            match tableau.pivot_until_optimal(false)? {
                PivotOutcome::Optimal => {
                    basis = tableau.basis;
                }
                PivotOutcome::Unbounded => return Err(Error::Unbounded),
            }
        }
        Err(Error::NumericalFailure(
            "basis failed to verify after repeated rebuilds".into(),
        ))
    }

    /// Fresh tableau for a basis, computed from original data via LU.
    fn rebuild_tableau(&self, basis: &Basis) -> Result<Tableau> {
        let lu = self.factorize_basis(basis)?;
        let mut col = vec![0.0; self.m];

        let mut a = vec![0.0; self.m * self.n];
        for j in 0..self.n {
            self.column(j, &mut col);
            let solved = lu.solve(&col);
            for i in 0..self.m {
                a[i * self.n + j] = solved[i];
            }
        }
        let b = lu.solve(&self.b);

        // Reduced costs from the dual vector.
        let c_basis: Vec<f64> = basis.iter().map(|&e| self.basis_cost(e)).collect();
        let y = lu.solve_transposed(&c_basis);
        let mut reduced = vec![0.0; self.n];
        for j in 0..self.n {
            self.column(j, &mut col);
            let dot: f64 = col.iter().zip(&y).map(|(a, y)| a * y).sum();
            reduced[j] = self.cost[j] - dot;
        }
        for &e in basis.iter() {
            if e < self.n {
                reduced[e] = 0.0;
            }
        }

        Ok(Tableau {
            m: self.m,
            n: self.n,
            a,
            b,
            reduced,
            basis: basis.clone(),
        })
    }

    fn factorize_basis(&self, basis: &Basis) -> Result<Lu> {
        let mut matrix = vec![0.0; self.m * self.m];
        let mut col = vec![0.0; self.m];
        for (k, &entry) in basis.iter().enumerate() {
            self.column(entry, &mut col);
            for i in 0..self.m {
                matrix[i * self.m + k] = col[i];
            }
        }
        Lu::factorize(self.m, matrix)
            .ok_or_else(|| Error::NumericalFailure("singular basis matrix".into()))
    }

    fn extract_solution(&self, basis: &Basis) -> Result<LpSolution> {
        let lu = self.factorize_basis(basis)?;
        let x_basis = lu.solve(&self.b);
        let c_basis: Vec<f64> = basis.iter().map(|&e| self.basis_cost(e)).collect();
        let y = lu.solve_transposed(&c_basis);

        let mut x_std = vec![0.0; self.n];
        for (i, &entry) in basis.iter().enumerate() {
            if entry < self.n {
                x_std[entry] = x_basis[i];
            } else if x_basis[i].abs() > 1e-7 {
                return Err(Error::NumericalFailure(
                    "artificial variable stuck at nonzero level".into(),
                ));
            }
        }
        for v in x_std.iter_mut() {
            if *v < 0.0 && *v > -1e-9 {
                *v = 0.0;
            }
        }

        // Self-check: primal residual and strong duality on original data.
        let mut max_residual = 0.0f64;
        for i in 0..self.m {
            let mut lhs = 0.0;
            for j in 0..self.n {
                lhs += self.a[i * self.n + j] * x_std[j];
            }
            max_residual = max_residual.max((lhs - self.b[i]).abs());
        }
        for &v in &x_std {
            max_residual = max_residual.max((-v).max(0.0));
        }

        let objective: f64 = x_std[..self.num_user]
            .iter()
            .zip(&self.cost[..self.num_user])
            .map(|(x, c)| x * c)
            .sum();
        let dual_objective: f64 = y.iter().zip(&self.b).map(|(y, b)| y * b).sum();
        let duality_gap = (objective - dual_objective).abs();

        let row_duals: Vec<f64> = (0..self.m).map(|i| self.row_sign[i] * y[i]).collect();

        Ok(LpSolution {
            x: x_std[..self.num_user].to_vec(),
            objective,
            row_duals,
            max_primal_residual: max_residual,
            duality_gap,
        })
    }
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    fn artificial_value(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.b)
            .filter(|(&e, _)| e >= self.n)
            .map(|(_, &v)| v.max(0.0))
            .sum()
    }

    fn has_entering_candidate(&self) -> bool {
        self.entering(false).is_some()
    }

    /// Most-negative reduced cost, or smallest index under Bland's rule.
    fn entering(&self, bland: bool) -> Option<usize> {
        if bland {
            (0..self.n).find(|&j| self.reduced[j] < -OPT_TOL && !self.is_basic(j))
        } else {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.n {
                let r = self.reduced[j];
                if r < -OPT_TOL && !self.is_basic(j) {
                    if best.map_or(true, |(_, b)| r < b) {
                        best = Some((j, r));
                    }
                }
            }
            best.map(|(j, _)| j)
        }
    }

    fn is_basic(&self, j: usize) -> bool {
        self.basis.contains(&j)
    }

    /// Ratio test: minimal `b_i / a_ij` over positive pivots. Ties go to the
    /// largest pivot element (or lowest basis index under Bland).
    fn leaving(&self, entering: usize, bland: bool) -> Option<usize> {
        let mut theta = f64::INFINITY;
        for i in 0..self.m {
            let pivot = self.at(i, entering);
            if pivot > PIVOT_TOL {
                theta = theta.min(self.b[i] / pivot);
            }
        }
        if theta.is_infinite() {
            return None;
        }
        let bound = theta + 1e-9 * (1.0 + theta.abs());
        let mut chosen: Option<usize> = None;
        for i in 0..self.m {
            let pivot = self.at(i, entering);
            if pivot > PIVOT_TOL && self.b[i] / pivot <= bound {
                chosen = match chosen {
                    None => Some(i),
                    Some(prev) => {
                        if bland {
                            if self.basis[i] < self.basis[prev] {
                                Some(i)
                            } else {
                                Some(prev)
                            }
                        } else if pivot.abs() > self.at(prev, entering).abs() {
                            Some(i)
                        } else {
                            Some(prev)
                        }
                    }
                };
            }
        }
        chosen
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let pivot = self.at(row, col);
        let inv = 1.0 / pivot;
        for j in 0..self.n {
            self.a[row * self.n + j] *= inv;
        }
        self.b[row] *= inv;
        self.a[row * self.n + col] = 1.0;

        for i in 0..self.m {
            if i == row {
                continue;
            }
            let factor = self.at(i, col);
            if factor == 0.0 {
                continue;
            }
            for j in 0..self.n {
                let v = self.at(row, j);
                self.a[i * self.n + j] -= factor * v;
            }
            self.a[i * self.n + col] = 0.0;
            self.b[i] -= factor * self.b[row];
            if self.b[i] < 0.0 && self.b[i] > -1e-11 {
                self.b[i] = 0.0;
            }
        }

        let factor = self.reduced[col];
        if factor != 0.0 {
            for j in 0..self.n {
                self.reduced[j] -= factor * self.at(row, j);
            }
            self.reduced[col] = 0.0;
        }

        self.basis[row] = col;
    }

    fn pivot_until_optimal(&mut self, phase_one: bool) -> Result<PivotOutcome> {
        let max_iterations = 2000 + 200 * (self.m + self.n);
        let stall_window = 100;
        let mut bland = false;
        let mut stall = 0usize;
        let mut last_objective = f64::INFINITY;

        for _ in 0..max_iterations {
            let Some(col) = self.entering(bland) else {
                return Ok(PivotOutcome::Optimal);
            };
            let Some(row) = self.leaving(col, bland) else {
                return Ok(PivotOutcome::Unbounded);
            };
            self.pivot(row, col);

            if !bland {
                let objective = if phase_one { self.artificial_value() } else { 0.0 };
                // Phase-2 stall detection uses degenerate step counting:
                // a zero step leaves b unchanged.
                let progress = if phase_one {
                    objective < last_objective - 1e-12
                } else {
                    self.b[row] > PIVOT_TOL
                };
                if progress {
                    stall = 0;
                    last_objective = objective;
                } else {
                    stall += 1;
                    if stall >= stall_window {
                        bland = true;
                    }
                }
            }
        }
        Err(Error::NumericalFailure(
            "simplex iteration limit exhausted".into(),
        ))
    }

    /// Pivots artificials out of the basis wherever a structural column has
    /// a usable entry; rows left behind are redundant and keep their
    /// artificial at level zero.
    fn evict_artificials(&mut self) {
        for i in 0..self.m {
            if self.basis[i] < self.n {
                continue;
            }
            let col = (0..self.n)
                .find(|&j| !self.is_basic(j) && self.at(i, j).abs() > 1e-7);
            if let Some(col) = col {
                self.pivot(i, col);
            }
        }
    }
}

/// Dense LU with partial pivoting.
struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    fn factorize(n: usize, mut a: Vec<f64>) -> Option<Self> {
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut max_val = 0.0;
            let mut max_row = k;
            for i in k..n {
                let v = a[i * n + k].abs();
                if v > max_val {
                    max_val = v;
                    max_row = i;
                }
            }
            if max_val < 1e-12 {
                return None;
            }
            if max_row != k {
                for j in 0..n {
                    a.swap(k * n + j, max_row * n + j);
                }
                perm.swap(k, max_row);
            }
            let pivot = a[k * n + k];
            for i in (k + 1)..n {
                let factor = a[i * n + k] / pivot;
                a[i * n + k] = factor;
                if factor != 0.0 {
                    for j in (k + 1)..n {
                        a[i * n + j] -= factor * a[k * n + j];
                    }
                }
            }
        }
        Some(Self { n, lu: a, perm })
    }

    /// Solves `A x = rhs`.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 1..n {
            let mut sum = x[i];
            for j in 0..i {
                sum -= self.lu[i * n + j] * x[j];
            }
            x[i] = sum;
        }
        for i in (0..n).rev() {
            let mut sum = x[i];
            for j in (i + 1)..n {
                sum -= self.lu[i * n + j] * x[j];
            }
            x[i] = sum / self.lu[i * n + i];
        }
        x
    }

    /// Solves `A' y = rhs` using the same factorization:
    /// `A = P⁻¹ L U  =>  A' y = rhs  <=>  U' z = rhs, L' w = z, y = P⁻¹' w`.
    fn solve_transposed(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = rhs.to_vec();
        for i in 0..n {
            let mut sum = z[i];
            for j in 0..i {
                sum -= self.lu[j * n + i] * z[j];
            }
            z[i] = sum / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let mut sum = z[i];
            for j in (i + 1)..n {
                sum -= self.lu[j * n + i] * z[j];
            }
            z[i] = sum;
        }
        let mut y = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            y[p] = z[k];
        }
        y
    }
}
