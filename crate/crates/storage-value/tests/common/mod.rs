//! Shared oracles for integration tests.
//!
//! Everything here is written independently of the library's solver path:
//! its own standard-form conversion, exhaustive basis enumeration, dual
//! certificates, and a separate construction of the dispatch constraint
//! matrix. Agreement between these oracles and the library is the point of
//! the tests, so nothing is reused from `src/`.

#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use storage_value::ScenarioData;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

/// A dense LP description for the oracle: `min c'x`, `x >= 0`.
#[derive(Debug, Clone)]
pub struct OracleLp {
    pub objective: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Sense, f64)>,
}

#[derive(Debug, Clone)]
pub struct OracleOptimum {
    pub x: Vec<f64>,
    pub objective: f64,
}

impl OracleLp {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Exhaustive enumeration over all bases of the standard form. Returns
    /// the best feasible basic solution, or `None` when no basis is
    /// feasible. Exponential; keep instances tiny.
    pub fn enumerate_optimum(&self) -> Option<OracleOptimum> {
        let n_user = self.num_vars();
        let m = self.rows.len();
        let n_slack = self.rows.iter().filter(|r| r.1 != Sense::Eq).count();
        let n = n_user + n_slack;

        // Standard form columns: user variables then one signed slack per
        // inequality.
        let mut columns = vec![vec![0.0; m]; n];
        let mut rhs = vec![0.0; m];
        let mut cost = vec![0.0; n];
        cost[..n_user].copy_from_slice(&self.objective);
        let mut slack = n_user;
        for (i, (coeffs, sense, b)) in self.rows.iter().enumerate() {
            rhs[i] = *b;
            for (j, &c) in coeffs.iter().enumerate() {
                columns[j][i] = c;
            }
            match sense {
                Sense::Eq => {}
                Sense::Le => {
                    columns[slack][i] = 1.0;
                    slack += 1;
                }
                Sense::Ge => {
                    columns[slack][i] = -1.0;
                    slack += 1;
                }
            }
        }

        let mut best: Option<OracleOptimum> = None;
        let mut combo: Vec<usize> = (0..m).collect();
        if m > n {
            return None;
        }
        loop {
            // Assemble and solve the basis system.
            let mut matrix = vec![0.0; m * m];
            for (k, &j) in combo.iter().enumerate() {
                for i in 0..m {
                    matrix[i * m + k] = columns[j][i];
                }
            }
            if let Some(xb) = dense_solve(m, matrix, &rhs) {
                if xb.iter().all(|&v| v >= -1e-9) {
                    let objective: f64 =
                        combo.iter().zip(&xb).map(|(&j, &v)| cost[j] * v).sum();
                    let better = best
                        .as_ref()
                        .map_or(true, |cur| objective < cur.objective - 1e-12);
                    if better {
                        let mut x = vec![0.0; n_user];
                        for (&j, &v) in combo.iter().zip(&xb) {
                            if j < n_user {
                                x[j] = v;
                            }
                        }
                        best = Some(OracleOptimum { x, objective });
                    }
                }
            }
            if !next_combination(&mut combo, n) {
                break;
            }
        }
        best
    }

    /// Verifies a claimed primal/dual pair as an optimality certificate:
    /// primal feasibility, dual feasibility with the right sign per row
    /// sense, and a closed duality gap.
    pub fn check_certificate(&self, x: &[f64], duals: &[f64], tol: f64) -> Result<(), String> {
        let n = self.num_vars();
        assert_eq!(x.len(), n);
        assert_eq!(duals.len(), self.rows.len());

        for (j, &v) in x.iter().enumerate() {
            if v < -tol {
                return Err(format!("x[{j}] = {v} negative"));
            }
        }
        for (i, (coeffs, sense, b)) in self.rows.iter().enumerate() {
            let lhs: f64 = coeffs.iter().zip(x).map(|(c, v)| c * v).sum();
            let violation = match sense {
                Sense::Eq => (lhs - b).abs(),
                Sense::Le => (lhs - b).max(0.0),
                Sense::Ge => (b - lhs).max(0.0),
            };
            if violation > tol {
                return Err(format!("row {i} violated by {violation}"));
            }
            let y = duals[i];
            let sign_ok = match sense {
                Sense::Eq => true,
                Sense::Le => y <= tol,
                Sense::Ge => y >= -tol,
            };
            if !sign_ok {
                return Err(format!("dual {i} has wrong sign: {y}"));
            }
        }
        // Dual feasibility: A' y <= c componentwise.
        for j in 0..n {
            let lhs: f64 = self
                .rows
                .iter()
                .zip(duals)
                .map(|((coeffs, _, _), y)| coeffs[j] * y)
                .sum();
            if lhs > self.objective[j] + tol {
                return Err(format!(
                    "dual infeasible at column {j}: {lhs} > {}",
                    self.objective[j]
                ));
            }
        }
        let primal: f64 = self.objective.iter().zip(x).map(|(c, v)| c * v).sum();
        let dual: f64 = self.rows.iter().zip(duals).map(|((_, _, b), y)| b * y).sum();
        if (primal - dual).abs() > tol * (1.0 + primal.abs()) {
            return Err(format!("duality gap {}", (primal - dual).abs()));
        }
        Ok(())
    }
}

fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Gaussian elimination with partial pivoting; `None` on singularity.
fn dense_solve(n: usize, mut a: Vec<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let mut x = b.to_vec();
    for k in 0..n {
        let mut max_row = k;
        let mut max_val = a[k * n + k].abs();
        for i in k + 1..n {
            let v = a[i * n + k].abs();
            if v > max_val {
                max_val = v;
                max_row = i;
            }
        }
        if max_val < 1e-10 {
            return None;
        }
        if max_row != k {
            for j in 0..n {
                a.swap(k * n + j, max_row * n + j);
            }
            x.swap(k, max_row);
        }
        for i in k + 1..n {
            let f = a[i * n + k] / a[k * n + k];
            if f != 0.0 {
                for j in k..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
                x[i] -= f * x[k];
            }
        }
    }
    for i in (0..n).rev() {
        let mut sum = x[i];
        for j in i + 1..n {
            sum -= a[i * n + j] * x[j];
        }
        x[i] = sum / a[i * n + i];
    }
    Some(x)
}

/// Independent construction of the dispatch LP from raw series, mirroring
/// the model definition rather than the library's builder. Used to feed the
/// enumeration oracle.
pub fn oracle_dispatch_lp(
    price: &[f64],
    demand: &[f64],
    renewable: &[f64],
    alpha: f64,
    beta: f64,
    delta: f64,
    floor_mode: bool,
) -> OracleLp {
    let horizon = price.len();
    let n = 6 * horizon;
    let g = |t: usize| t;
    let a = |t: usize| horizon + t;
    let b = |t: usize| 2 * horizon + t;
    let rd = |t: usize| 3 * horizon + t;
    let rs = |t: usize| 4 * horizon + t;
    let x = |t: usize| 5 * horizon + t - 1; // t in 1..=T

    let mut objective = vec![0.0; n];
    for t in 0..horizon {
        objective[g(t)] = price[t];
        objective[a(t)] = price[t];
    }
    let mut rows = Vec::new();
    for t in 0..horizon {
        let mut row = vec![0.0; n];
        row[g(t)] = 1.0;
        row[b(t)] = 1.0;
        row[rd(t)] = 1.0;
        rows.push((row, Sense::Eq, demand[t]));
    }
    let mut row = vec![0.0; n];
    for t in 0..horizon {
        row[rd(t)] = 1.0;
        row[rs(t)] = 1.0;
    }
    let target = alpha * demand.iter().sum::<f64>();
    rows.push((row, if floor_mode { Sense::Ge } else { Sense::Eq }, target));
    for t in 1..=horizon {
        let mut row = vec![0.0; n];
        row[x(t)] = 1.0;
        if t > 1 {
            row[x(t - 1)] = -1.0;
        }
        row[a(t - 1)] = -1.0;
        row[rs(t - 1)] = -1.0;
        row[b(t - 1)] = 1.0;
        rows.push((row, Sense::Eq, 0.0));
    }
    let mut row = vec![0.0; n];
    row[x(horizon)] = 1.0;
    rows.push((row, Sense::Eq, 0.0));
    for t in 0..horizon {
        let mut row = vec![0.0; n];
        row[rd(t)] = 1.0;
        row[rs(t)] = 1.0;
        rows.push((row, Sense::Le, renewable[t]));
    }
    for t in 1..=horizon {
        let mut row = vec![0.0; n];
        row[x(t)] = 1.0;
        rows.push((row, Sense::Le, beta - delta));
    }
    OracleLp { objective, rows }
}

/// Grid search over storage trajectories for instances with no renewables
/// and no portfolio requirement. With the state path fixed, charging buys
/// from the grid and discharging serves demand, so the cost is determined.
/// Returns the best cost on the grid; exact to within
/// `step * T * max|price|` of the true optimum.
pub fn grid_oracle_no_renewables(
    price: &[f64],
    demand: &[f64],
    beta: f64,
    step: f64,
) -> Option<f64> {
    let horizon = price.len();
    assert!(horizon >= 1 && horizon <= 3, "grid oracle is for tiny horizons");
    let levels: Vec<f64> = {
        let k = (beta / step).round() as usize;
        (0..=k).map(|i| (i as f64) * step).collect()
    };
    let cost_of_path = |path: &[f64]| -> Option<f64> {
        let mut cost = 0.0;
        let mut prev = 0.0;
        for t in 0..horizon {
            let next = if t + 1 == horizon { 0.0 } else { path[t] };
            let flow = next - prev;
            let (charge, discharge) = if flow >= 0.0 { (flow, 0.0) } else { (0.0, -flow) };
            if discharge > demand[t] + 1e-12 {
                return None;
            }
            cost += price[t] * (demand[t] - discharge + charge);
            prev = next;
        }
        Some(cost)
    };
    let mut best: Option<f64> = None;
    match horizon {
        1 => best = cost_of_path(&[]),
        2 => {
            for &x1 in &levels {
                if let Some(c) = cost_of_path(&[x1]) {
                    best = Some(best.map_or(c, |b: f64| b.min(c)));
                }
            }
        }
        3 => {
            for &x1 in &levels {
                for &x2 in &levels {
                    if let Some(c) = cost_of_path(&[x1, x2]) {
                        best = Some(best.map_or(c, |b: f64| b.min(c)));
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    best
}

/// Random acceptance instance: 24 periods, prices in [-10, 60] with at
/// least one negative, demand and renewables in [0, 100].
pub fn random_instance(seed: u64) -> ScenarioData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = 24;
    let mut price: Vec<f64> = (0..horizon).map(|_| rng.random_range(-10.0..60.0)).collect();
    if !price.iter().any(|&p| p < 0.0) {
        let idx = rng.random_range(0..horizon);
        price[idx] = -rng.random_range(0.1..10.0);
    }
    let demand: Vec<f64> = (0..horizon).map(|_| rng.random_range(0.0..100.0)).collect();
    let renewable: Vec<f64> = (0..horizon).map(|_| rng.random_range(0.0..100.0)).collect();
    ScenarioData::new(price, demand, renewable).unwrap()
}

/// Fraction of demand that renewables can cover without storage.
pub fn direct_deliverable_fraction(s: &ScenarioData) -> f64 {
    let deliverable: f64 = s
        .renewable_forecast()
        .iter()
        .zip(s.demand_forecast())
        .map(|(&r, &d)| r.min(d))
        .sum();
    deliverable / s.total_demand_forecast()
}

/// Fraction of demand that renewables can cover with unlimited storage.
pub fn structural_fraction(s: &ScenarioData) -> f64 {
    (s.total_renewable_forecast() / s.total_demand_forecast()).min(1.0)
}
