//! Storage value metrics on top of capacity curves: cost saving, lost
//! opportunity costs, budget inversion, and percentile aggregation across
//! scenarios.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispatch::{DispatchTemplate, RpsMode};
use crate::error::{Error, Result};
use crate::parametric::{fbs, FbsConfig, PiecewiseLinearCurve};
use crate::timeseries::ScenarioData;

/// Which value function a report carries. The grid column is a capacity
/// for cost saving, a portfolio-standard level for the standard's lost
/// opportunity cost, and a reserve size for the risk-limiting one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    CostSaving,
    LocRps,
    LocRl,
}

impl ReportKind {
    pub fn grid_column(&self) -> &'static str {
        match self {
            ReportKind::CostSaving => "beta_mwh",
            ReportKind::LocRps => "alpha",
            ReportKind::LocRl => "delta_mwh",
        }
    }
}

/// Evaluations of a value function on a grid, optionally with empirical
/// percentile bands across scenarios.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueReport {
    pub kind: ReportKind,
    pub grid: Vec<f64>,
    /// Single-scenario values, or the pointwise median band (lower-nearest
    /// convention) when percentile bands are present.
    pub values: Vec<f64>,
    /// `(percentile, per-grid-point values)` in ascending percentile.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percentile_bands: Option<Vec<(f64, Vec<f64>)>>,
    /// Scenarios excluded at some grid points, with the reason.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

impl ValueReport {
    /// CSV layout: the grid column plus one column per percentile, or a
    /// single value column.
    pub fn write_csv<W: Write>(&self, writer: W, fmt: impl Fn(f64) -> String) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        match &self.percentile_bands {
            Some(bands) => {
                let mut header = vec![self.kind.grid_column().to_string()];
                header.extend(bands.iter().map(|(p, _)| format!("p{p}")));
                w.write_record(&header)?;
                for (i, &g) in self.grid.iter().enumerate() {
                    let mut record = vec![fmt(g)];
                    record.extend(bands.iter().map(|(_, values)| fmt(values[i])));
                    w.write_record(&record)?;
                }
            }
            None => {
                w.write_record([self.kind.grid_column(), "value"])?;
                for (&g, &v) in self.grid.iter().zip(&self.values) {
                    w.write_record([fmt(g), fmt(v)])?;
                }
            }
        }
        w.flush().map_err(|e| Error::Io {
            path: "<writer>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Cost saving from capacity `beta` relative to the curve's left endpoint.
///
/// When the curve starts at zero capacity this is the saving relative to
/// having no storage; when the left endpoint was feasibility-adjusted the
/// saving is anchored there instead. Always non-positive.
pub fn cost_saving(curve: &PiecewiseLinearCurve, beta: f64) -> Result<f64> {
    let anchor_value = curve.evaluate(curve.interval().0)?;
    Ok(curve.evaluate(beta)? - anchor_value)
}

/// Lost opportunity cost of the portfolio standard: the cost saving the
/// storage would have achieved unconstrained, minus what it achieves under
/// the standard.
pub fn loc_rps(
    curve_unconstrained: &PiecewiseLinearCurve,
    curve_constrained: &PiecewiseLinearCurve,
    beta: f64,
) -> Result<f64> {
    if curve_unconstrained.alpha() != 0.0 {
        return Err(Error::InvalidProblem(format!(
            "the unconstrained curve must be built at alpha 0, got {}",
            curve_unconstrained.alpha()
        )));
    }
    if curve_unconstrained.delta() != curve_constrained.delta() {
        return Err(Error::InvalidProblem(
            "curves were built with different reserves".into(),
        ));
    }
    Ok(cost_saving(curve_unconstrained, beta)? - cost_saving(curve_constrained, beta)?)
}

/// Lost opportunity cost of reserving `delta` out of capacity `beta`: the
/// cost increase from shrinking usable capacity to `beta - delta`. The
/// curve must have been built with no reserve baked in. Non-negative.
pub fn loc_rl(curve: &PiecewiseLinearCurve, beta: f64, delta: f64) -> Result<f64> {
    if curve.delta() != 0.0 {
        return Err(Error::InvalidProblem(
            "the capacity curve must be built with zero reserve".into(),
        ));
    }
    if delta < 0.0 || delta > beta {
        return Err(Error::InvalidProblem(format!(
            "reserve must lie in [0, beta]: delta {delta}, beta {beta}"
        )));
    }
    Ok(curve.evaluate(beta - delta)? - curve.evaluate(beta)?)
}

/// Smallest capacity whose cost does not exceed the budget, exploiting the
/// curve's monotonicity. Errors when the budget undercuts the curve's
/// minimum.
pub fn invert_capacity(curve: &PiecewiseLinearCurve, budget: f64) -> Result<f64> {
    let bps = curve.breakpoints();
    let minimum = bps.last().unwrap().1;
    if budget < minimum - 1e-12 * (1.0 + minimum.abs()) {
        return Err(Error::BudgetInfeasible { budget, minimum });
    }
    if bps[0].1 <= budget {
        return Ok(bps[0].0);
    }
    for (i, window) in bps.windows(2).enumerate() {
        let (b0, v0) = window[0];
        let (_, v1) = window[1];
        if v1 <= budget {
            let slope = curve.slopes()[i];
            if slope >= 0.0 || v0 <= budget {
                return Ok(b0.max(curve.interval().0));
            }
            return Ok(b0 + (budget - v0) / slope);
        }
    }
    Ok(bps.last().unwrap().0)
}

/// Lower-nearest order statistic: the smallest sample whose rank covers
/// `percentile`% of the sorted data.
pub fn percentile_lower(sorted: &[f64], percentile: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((n as f64) * percentile / 100.0 - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Per-scenario cost-saving curves aggregated into empirical percentile
/// bands on a shared capacity grid.
///
/// Scenarios that are infeasible at a grid point (their feasible capacity
/// starts above it) are excluded from that point's sample with a warning;
/// structurally infeasible scenarios are excluded entirely.
pub fn percentile_bands(
    scenarios: &[ScenarioData],
    alpha: f64,
    delta: f64,
    rps_mode: RpsMode,
    beta_grid: &[f64],
    percentiles: &[f64],
    fbs_config: &FbsConfig,
) -> Result<ValueReport> {
    if scenarios.is_empty() {
        return Err(Error::InvalidProblem("no scenarios supplied".into()));
    }
    if beta_grid.is_empty() {
        return Err(Error::InvalidProblem("empty capacity grid".into()));
    }
    for pair in beta_grid.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidProblem(
                "capacity grid must be strictly increasing".into(),
            ));
        }
    }
    for &p in percentiles {
        if !(0.0 < p && p < 100.0) {
            return Err(Error::RiskOutOfRange {
                q: p,
                range: "(0, 100)",
            });
        }
    }
    let mut percentiles = percentiles.to_vec();
    percentiles.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let beta_max = *beta_grid.last().unwrap();

    // Per scenario: its anchor and the cost-saving values on the grid
    // (None where infeasible).
    let per_scenario: Vec<Result<(f64, Vec<Option<f64>>)>> = scenarios
        .par_iter()
        .map(|scenario| {
            let template = DispatchTemplate::new(scenario, alpha, delta)?.with_rps_mode(rps_mode);
            let anchor = template.min_feasible_capacity()?.max(delta);
            let feasible_at = |beta: f64| beta >= anchor - 1e-9 * (1.0 + anchor.abs());
            if !feasible_at(beta_max) {
                return Ok((anchor, vec![None; beta_grid.len()]));
            }
            if beta_max - anchor <= 1e-9 {
                // Degenerate interval: the grid ends at the anchor, where
                // the saving is zero by definition.
                return Ok((
                    anchor,
                    beta_grid
                        .iter()
                        .map(|&b| feasible_at(b).then_some(0.0))
                        .collect(),
                ));
            }
            let result = fbs(&template, anchor, beta_max, alpha, delta, fbs_config)?;
            let anchor_cost = result.curve.evaluate(anchor)?;
            let values = beta_grid
                .iter()
                .map(|&beta| {
                    if !feasible_at(beta) {
                        None
                    } else {
                        result
                            .curve
                            .evaluate(beta.max(anchor))
                            .ok()
                            .map(|v| v - anchor_cost)
                    }
                })
                .collect();
            Ok((anchor, values))
        })
        .collect();

    let mut warnings = Vec::new();
    let mut curves: Vec<Vec<Option<f64>>> = Vec::with_capacity(scenarios.len());
    for (index, outcome) in per_scenario.into_iter().enumerate() {
        match outcome {
            Ok((anchor, values)) => {
                let missing = values.iter().filter(|v| v.is_none()).count();
                if missing > 0 {
                    warnings.push(format!(
                        "scenario {index}: infeasible below capacity {anchor:.6}; excluded at {missing} grid point(s)"
                    ));
                }
                curves.push(values);
            }
            Err(Error::StructurallyInfeasible) => {
                warnings.push(format!(
                    "scenario {index}: structurally infeasible at alpha {alpha}; excluded"
                ));
                curves.push(vec![None; beta_grid.len()]);
            }
            Err(e) => return Err(e),
        }
    }

    let mut bands: Vec<(f64, Vec<f64>)> = percentiles
        .iter()
        .map(|&p| (p, Vec::with_capacity(beta_grid.len())))
        .collect();
    let mut medians = Vec::with_capacity(beta_grid.len());

    for point in 0..beta_grid.len() {
        let mut sample: Vec<f64> = curves.iter().filter_map(|c| c[point]).collect();
        if sample.is_empty() {
            return Err(Error::Infeasible(format!(
                "no scenario is feasible at capacity {}",
                beta_grid[point]
            )));
        }
        sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (p, band) in bands.iter_mut() {
            band.push(percentile_lower(&sample, *p));
        }
        medians.push(percentile_lower(&sample, 50.0));
    }

    Ok(ValueReport {
        kind: ReportKind::CostSaving,
        grid: beta_grid.to_vec(),
        values: medians,
        percentile_bands: Some(bands),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_curve() -> PiecewiseLinearCurve {
        PiecewiseLinearCurve::from_breakpoints(
            vec![(0.0, 6.0), (1.0, 5.0), (2.0, 5.0)],
            0.0,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn cost_saving_on_hand_curve() {
        let c = hand_curve();
        assert_eq!(cost_saving(&c, 1.0).unwrap(), -1.0);
        assert_eq!(cost_saving(&c, 0.0).unwrap(), 0.0);
        assert_eq!(cost_saving(&c, 2.0).unwrap(), -1.0);
    }

    #[test]
    fn loc_rps_identity_when_unconstrained() {
        let c = hand_curve();
        assert_eq!(loc_rps(&c, &c, 1.5).unwrap(), 0.0);
    }

    #[test]
    fn loc_rps_validates_inputs() {
        let c0 = hand_curve();
        let c1 = PiecewiseLinearCurve::from_breakpoints(
            vec![(0.0, 7.0), (2.0, 6.0)],
            0.5,
            0.0,
        )
        .unwrap();
        assert!(loc_rps(&c1, &c0, 1.0).is_err());
        assert!(loc_rps(&c0, &c1, 1.0).is_ok());
    }

    #[test]
    fn loc_rl_on_hand_curve() {
        let c = hand_curve();
        assert_eq!(loc_rl(&c, 2.0, 0.0).unwrap(), 0.0);
        assert_eq!(loc_rl(&c, 2.0, 1.0).unwrap(), 0.0);
        assert_eq!(loc_rl(&c, 1.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn loc_rl_validates_reserve() {
        let c = hand_curve();
        assert!(loc_rl(&c, 1.0, 1.5).is_err());
        assert!(loc_rl(&c, 1.0, -0.5).is_err());
        let with_delta = PiecewiseLinearCurve::from_breakpoints(
            vec![(0.0, 6.0), (1.0, 5.0)],
            0.0,
            0.5,
        )
        .unwrap();
        assert!(loc_rl(&with_delta, 1.0, 0.5).is_err());
    }

    #[test]
    fn invert_on_hand_curve() {
        let c = hand_curve();
        assert_eq!(invert_capacity(&c, 5.0).unwrap(), 1.0);
        assert_eq!(invert_capacity(&c, 6.0).unwrap(), 0.0);
        assert!(matches!(
            invert_capacity(&c, 4.0),
            Err(Error::BudgetInfeasible { .. })
        ));
    }

    #[test]
    fn invert_interpolates_within_segments() {
        let c = hand_curve();
        let beta = invert_capacity(&c, 5.5).unwrap();
        assert!((beta - 0.5).abs() < 1e-12);
    }

    #[test]
    fn percentile_convention_is_lower_nearest() {
        assert_eq!(percentile_lower(&[-3.0, -1.0], 50.0), -3.0);
        assert_eq!(percentile_lower(&[-3.0, -1.0], 75.0), -1.0);
        assert_eq!(percentile_lower(&[1.0, 2.0, 3.0], 50.0), 2.0);
        assert_eq!(percentile_lower(&[1.0], 99.0), 1.0);
    }

    #[test]
    fn single_scenario_bands_degenerate_to_curve() {
        let scenario = crate::timeseries::ScenarioData::new(
            vec![3.0, 1.0, 2.0],
            vec![1.0, 1.0, 1.0],
            vec![0.0, 0.0, 0.0],
        )
        .unwrap();
        let report = percentile_bands(
            &[scenario],
            0.0,
            0.0,
            RpsMode::Floor,
            &[0.0, 0.5, 1.0, 2.0],
            &[10.0, 50.0, 90.0],
            &FbsConfig::default(),
        )
        .unwrap();
        let bands = report.percentile_bands.as_ref().unwrap();
        let expected = [0.0, -0.5, -1.0, -1.0];
        for (_, band) in bands {
            for (v, e) in band.iter().zip(expected) {
                assert!((v - e).abs() < 1e-9, "band {band:?}");
            }
        }
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn csv_layout_single_and_bands() {
        let report = ValueReport {
            kind: ReportKind::CostSaving,
            grid: vec![0.0, 1.0],
            values: vec![0.0, -1.0],
            percentile_bands: None,
            warnings: Vec::new(),
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf, |v| format!("{v}")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("beta_mwh,value\n"));

        let report = ValueReport {
            percentile_bands: Some(vec![(5.0, vec![0.0, -2.0]), (95.0, vec![0.0, -0.5])]),
            ..report
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf, |v| format!("{v}")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("beta_mwh,p5,p95\n"), "{text}");
    }
}
