//! Storage dispatch under a renewable portfolio standard.
//!
//! Builds and solves the minimal-cost dispatch linear program for one
//! scenario: grid purchases serve demand directly or charge storage,
//! renewable generation serves demand or charges storage (with curtailment
//! allowed), and the state of charge starts and ends empty. A reserved
//! headroom is subtracted from the usable capacity. The dual price of the
//! capacity constraints is reported because the capacity curve construction
//! consumes it as a subgradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LpProblem, Relation, RowId};
use crate::timeseries::ScenarioData;

/// Whether the portfolio-standard constraint is a floor (`>=`) or binds
/// with equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RpsMode {
    #[default]
    Floor,
    Equality,
}

/// Scenario plus the dispatch parameters that do not depend on capacity.
///
/// A template is turned into a concrete problem with [`at_capacity`], or
/// queried for the smallest capacity that admits a feasible dispatch.
///
/// [`at_capacity`]: DispatchTemplate::at_capacity
#[derive(Debug, Clone, Copy)]
pub struct DispatchTemplate<'a> {
    scenario: &'a ScenarioData,
    alpha: f64,
    delta: f64,
    rps_mode: RpsMode,
}

impl<'a> DispatchTemplate<'a> {
    pub fn new(scenario: &'a ScenarioData, alpha: f64, delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        if !delta.is_finite() || delta < 0.0 {
            return Err(Error::InvalidProblem(format!(
                "reserved capacity must be non-negative, got {delta}"
            )));
        }
        Ok(Self {
            scenario,
            alpha,
            delta,
            rps_mode: RpsMode::Floor,
        })
    }

    pub fn with_rps_mode(mut self, mode: RpsMode) -> Self {
        self.rps_mode = mode;
        self
    }

    pub fn scenario(&self) -> &'a ScenarioData {
        self.scenario
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn rps_mode(&self) -> RpsMode {
        self.rps_mode
    }

    /// Fixes the storage capacity, validating `beta >= delta >= 0`.
    pub fn at_capacity(self, beta: f64) -> Result<DispatchProblem<'a>> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidProblem(format!(
                "capacity must be non-negative, got {beta}"
            )));
        }
        if self.delta > beta {
            return Err(Error::InvalidProblem(format!(
                "delta exceeds capacity: delta {} > beta {}",
                self.delta, beta
            )));
        }
        Ok(DispatchProblem {
            template: self,
            beta,
        })
    }

    /// Smallest capacity for which the dispatch is feasible, found by
    /// minimizing an auxiliary bound on every state-of-charge value.
    ///
    /// Returns [`Error::StructurallyInfeasible`] when no capacity suffices
    /// (the required renewable delivery exceeds what is available).
    pub fn min_feasible_capacity(&self) -> Result<f64> {
        let scenario = self.scenario;
        let horizon = scenario.horizon();
        let layout = VarLayout::new(horizon);
        // One extra variable: the bound being minimized.
        let bound_var = layout.total;
        let mut lp = LpProblem::new(layout.total + 1);
        lp.set_objective(bound_var, 1.0);
        add_flow_rows(&mut lp, &layout, scenario, self.alpha, self.rps_mode);
        for t in 1..=horizon {
            lp.add_row(
                [(layout.soc(t), 1.0), (bound_var, -1.0)],
                Relation::Le,
                0.0,
            );
        }
        match lp.solve() {
            Ok(solution) => Ok(self.delta + solution.value(bound_var).max(0.0)),
            Err(Error::Infeasible(_)) => Err(Error::StructurallyInfeasible),
            Err(e) => Err(e),
        }
    }

    /// Convenience: solve the dispatch at the given capacity.
    pub fn solve_at(&self, beta: f64) -> Result<DispatchSolution> {
        self.at_capacity(beta)?.solve()
    }
}

/// A dispatch problem with every parameter fixed.
#[derive(Debug, Clone, Copy)]
pub struct DispatchProblem<'a> {
    template: DispatchTemplate<'a>,
    beta: f64,
}

/// Optimal dispatch: decision vectors, state-of-charge path, cost, and the
/// capacity dual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispatchSolution {
    /// Grid purchases serving demand, per period.
    #[serde(rename = "g")]
    pub grid_purchase: Vec<f64>,
    /// Grid purchases charging storage, per period.
    #[serde(rename = "a")]
    pub grid_charge: Vec<f64>,
    /// Storage discharge serving demand, per period.
    #[serde(rename = "b")]
    pub discharge: Vec<f64>,
    /// Renewable generation serving demand, per period.
    #[serde(rename = "r_d")]
    pub renewable_to_demand: Vec<f64>,
    /// Renewable generation charging storage, per period.
    #[serde(rename = "r_s")]
    pub renewable_to_storage: Vec<f64>,
    /// State of charge, `T + 1` values starting and ending at zero.
    #[serde(rename = "x")]
    pub soc: Vec<f64>,
    /// Total cost of grid energy.
    pub objective: f64,
    /// Sum over periods of the dual multipliers of the capacity
    /// constraints: the derivative of optimal cost with respect to
    /// capacity. Non-positive.
    pub capacity_dual: f64,
    pub status: String,
    /// Kernel self-diagnostics; not part of the wire format.
    #[serde(skip)]
    pub diagnostics: SolveDiagnostics,
}

/// Residuals reported by the kernel for the returned basis.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolveDiagnostics {
    pub max_primal_residual: f64,
    pub duality_gap: f64,
}

impl<'a> DispatchProblem<'a> {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn template(&self) -> &DispatchTemplate<'a> {
        &self.template
    }

    /// Solves the dispatch LP to optimality.
    pub fn solve(&self) -> Result<DispatchSolution> {
        let scenario = self.template.scenario;
        let horizon = scenario.horizon();
        let layout = VarLayout::new(horizon);
        let mut lp = LpProblem::new(layout.total);

        let price = scenario.price();
        for t in 0..horizon {
            lp.set_objective(layout.grid_purchase(t), price[t]);
            lp.set_objective(layout.grid_charge(t), price[t]);
        }

        add_flow_rows(&mut lp, &layout, scenario, self.template.alpha, self.template.rps_mode);

        let headroom = self.beta - self.template.delta;
        let capacity_rows: Vec<RowId> = (1..=horizon)
            .map(|t| lp.add_row([(layout.soc(t), 1.0)], Relation::Le, headroom))
            .collect();

        let solution = lp.solve()?;

        let collect = |base: fn(&VarLayout, usize) -> usize| -> Vec<f64> {
            (0..horizon)
                .map(|t| clamp_tiny(solution.value(base(&layout, t))))
                .collect()
        };
        let mut soc = Vec::with_capacity(horizon + 1);
        soc.push(0.0);
        for t in 1..=horizon {
            soc.push(clamp_tiny(solution.value(layout.soc(t))));
        }

        let capacity_dual = capacity_rows
            .iter()
            .map(|&row| solution.dual(row))
            .sum::<f64>()
            .min(0.0);

        Ok(DispatchSolution {
            grid_purchase: collect(VarLayout::grid_purchase),
            grid_charge: collect(VarLayout::grid_charge),
            discharge: collect(VarLayout::discharge),
            renewable_to_demand: collect(VarLayout::renewable_to_demand),
            renewable_to_storage: collect(VarLayout::renewable_to_storage),
            soc,
            objective: solution.objective(),
            capacity_dual,
            status: "optimal".into(),
            diagnostics: SolveDiagnostics {
                max_primal_residual: solution.max_primal_residual(),
                duality_gap: solution.duality_gap(),
            },
        })
    }

    /// Solves and returns `(objective, capacity dual)` only.
    pub fn solve_value(&self) -> Result<(f64, f64)> {
        let solution = self.solve()?;
        Ok((solution.objective, solution.capacity_dual))
    }
}

impl DispatchSolution {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dispatch solution serializes")
    }
}

fn clamp_tiny(v: f64) -> f64 {
    if v.abs() < 1e-11 {
        0.0
    } else {
        v
    }
}

/// Column layout of the dispatch LP: five decision series plus the
/// state-of-charge series `x_1 .. x_T`.
struct VarLayout {
    horizon: usize,
    total: usize,
}

impl VarLayout {
    fn new(horizon: usize) -> Self {
        Self {
            horizon,
            total: 6 * horizon,
        }
    }

    fn grid_purchase(&self, t: usize) -> usize {
        t
    }

    fn grid_charge(&self, t: usize) -> usize {
        self.horizon + t
    }

    fn discharge(&self, t: usize) -> usize {
        2 * self.horizon + t
    }

    fn renewable_to_demand(&self, t: usize) -> usize {
        3 * self.horizon + t
    }

    fn renewable_to_storage(&self, t: usize) -> usize {
        4 * self.horizon + t
    }

    /// State of charge after period `t`, for `t` in `1..=T`.
    fn soc(&self, t: usize) -> usize {
        debug_assert!((1..=self.horizon).contains(&t));
        5 * self.horizon + (t - 1)
    }
}

/// Rows shared by the dispatch LP and the minimal-capacity LP: balance,
/// portfolio standard, state-of-charge recursion with empty start and end,
/// and renewable availability.
fn add_flow_rows(
    lp: &mut LpProblem,
    layout: &VarLayout,
    scenario: &ScenarioData,
    alpha: f64,
    rps_mode: RpsMode,
) {
    let horizon = layout.horizon;
    let demand = scenario.demand_forecast();
    let renewable = scenario.renewable_forecast();

    for t in 0..horizon {
        lp.add_row(
            [
                (layout.grid_purchase(t), 1.0),
                (layout.discharge(t), 1.0),
                (layout.renewable_to_demand(t), 1.0),
            ],
            Relation::Eq,
            demand[t],
        );
    }

    let rps_target = alpha * scenario.total_demand_forecast();
    let rps_coeffs: Vec<(usize, f64)> = (0..horizon)
        .flat_map(|t| {
            [
                (layout.renewable_to_demand(t), 1.0),
                (layout.renewable_to_storage(t), 1.0),
            ]
        })
        .collect();
    let relation = match rps_mode {
        RpsMode::Floor => Relation::Ge,
        RpsMode::Equality => Relation::Eq,
    };
    lp.add_row(rps_coeffs, relation, rps_target);

    for t in 1..=horizon {
        let mut coeffs = vec![
            (layout.soc(t), 1.0),
            (layout.grid_charge(t - 1), -1.0),
            (layout.renewable_to_storage(t - 1), -1.0),
            (layout.discharge(t - 1), 1.0),
        ];
        if t > 1 {
            coeffs.push((layout.soc(t - 1), -1.0));
        }
        lp.add_row(coeffs, Relation::Eq, 0.0);
    }
    lp.add_row([(layout.soc(horizon), 1.0)], Relation::Eq, 0.0);

    for t in 0..horizon {
        lp.add_row(
            [
                (layout.renewable_to_demand(t), 1.0),
                (layout.renewable_to_storage(t), 1.0),
            ],
            Relation::Le,
            renewable[t],
        );
    }
}
