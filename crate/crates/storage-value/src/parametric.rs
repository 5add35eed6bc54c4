//! Exact minimal-cost-versus-capacity curves.
//!
//! The optimal dispatch cost, viewed as a function of storage capacity, is
//! continuous, piecewise linear, convex and non-increasing. This module
//! reconstructs it exactly on an interval by recursive tangent
//! intersection: solve at both endpoints, intersect the two tangent lines
//! given by the capacity duals, and either confirm the intersection as a
//! breakpoint or split there and recurse. Linear segments are certified by
//! matching endpoint slopes, so the number of solves stays proportional to
//! the number of breakpoints.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dispatch::DispatchTemplate;
use crate::error::{Error, Result};

/// A convex piecewise-linear cost-versus-capacity function on an interval.
///
/// Breakpoints include both interval endpoints; `slopes[i]` applies between
/// `breakpoints[i]` and `breakpoints[i + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearCurve {
    breakpoints: Vec<(f64, f64)>,
    slopes: Vec<f64>,
    alpha: f64,
    delta: f64,
}

impl PiecewiseLinearCurve {
    /// Builds a curve from breakpoints; segment slopes are derived from the
    /// breakpoint values, so the curve is internally consistent by
    /// construction.
    pub fn from_breakpoints(
        breakpoints: Vec<(f64, f64)>,
        alpha: f64,
        delta: f64,
    ) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidProblem(
                "a curve needs at least two breakpoints".into(),
            ));
        }
        for &(beta, value) in &breakpoints {
            if !beta.is_finite() || !value.is_finite() {
                return Err(Error::InvalidProblem("non-finite breakpoint".into()));
            }
        }
        for pair in breakpoints.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::InvalidProblem(
                    "breakpoints must be strictly increasing in beta".into(),
                ));
            }
        }
        let slopes = breakpoints
            .windows(2)
            .map(|p| (p[1].1 - p[0].1) / (p[1].0 - p[0].0))
            .collect();
        Ok(Self {
            breakpoints,
            slopes,
            alpha,
            delta,
        })
    }

    /// Builds a curve with explicit slopes, bypassing the consistency
    /// derivation. Intended for verification tooling that needs to
    /// construct deliberately inconsistent curves.
    pub fn from_parts(
        breakpoints: Vec<(f64, f64)>,
        slopes: Vec<f64>,
        alpha: f64,
        delta: f64,
    ) -> Result<Self> {
        let derived = Self::from_breakpoints(breakpoints, alpha, delta)?;
        if slopes.len() != derived.slopes.len() {
            return Err(Error::InvalidProblem(format!(
                "expected {} slopes, got {}",
                derived.slopes.len(),
                slopes.len()
            )));
        }
        Ok(Self { slopes, ..derived })
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Covered capacity interval `[lo, hi]`.
    pub fn interval(&self) -> (f64, f64) {
        (
            self.breakpoints[0].0,
            self.breakpoints[self.breakpoints.len() - 1].0,
        )
    }

    /// Linear interpolation on the containing segment; exact at
    /// breakpoints. Queries outside the covered interval (beyond a small
    /// absolute-plus-relative guard) are rejected.
    pub fn evaluate(&self, beta: f64) -> Result<f64> {
        let (lo, hi) = self.interval();
        let edge_tol = 1e-9 * (1.0 + (hi - lo).abs());
        if beta < lo - edge_tol || beta > hi + edge_tol {
            return Err(Error::OutsideInterval { beta, lo, hi });
        }
        let beta = beta.clamp(lo, hi);
        // Last segment whose start is <= beta.
        let seg = match self
            .breakpoints
            .partition_point(|&(b, _)| b <= beta)
        {
            0 => 0,
            k if k >= self.breakpoints.len() => self.breakpoints.len() - 2,
            k => k - 1,
        };
        let (b0, v0) = self.breakpoints[seg];
        if beta == b0 {
            return Ok(v0);
        }
        Ok(v0 + self.slopes[seg] * (beta - b0))
    }

    /// True when slopes are non-positive and non-decreasing within
    /// `tolerance`, i.e. the curve is non-increasing and convex.
    pub fn is_convex_nonincreasing(&self, tolerance: f64) -> bool {
        let scale = 1.0 + self.slopes.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        self.slopes.iter().all(|&s| s <= tolerance * scale)
            && self
                .slopes
                .windows(2)
                .all(|p| p[1] >= p[0] - tolerance * scale)
    }

    /// Writes `beta_mwh,cost` breakpoint rows.
    pub fn write_breakpoints_csv<W: Write>(
        &self,
        writer: W,
        fmt: impl Fn(f64) -> String,
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["beta_mwh", "cost"])?;
        for &(beta, value) in &self.breakpoints {
            w.write_record([fmt(beta), fmt(value)])?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<writer>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Anything that can report optimal cost and a capacity subgradient at a
/// given capacity. The dispatch template is the production implementation;
/// tests substitute closed-form convex functions.
pub trait CapacityCostFunction {
    /// Returns `(optimal cost, d cost / d capacity)` at `beta`. The slope
    /// may be any subgradient at kinks.
    fn cost_and_slope(&self, beta: f64) -> Result<(f64, f64)>;
}

impl CapacityCostFunction for DispatchTemplate<'_> {
    fn cost_and_slope(&self, beta: f64) -> Result<(f64, f64)> {
        self.at_capacity(beta)?.solve_value()
    }
}

/// Tolerances and guards for the curve construction.
#[derive(Debug, Clone)]
pub struct FbsConfig {
    /// Relative tolerance for treating endpoint slopes as equal.
    pub slope_tolerance: f64,
    /// Relative tolerance for accepting a tangent intersection as lying on
    /// the curve.
    pub value_tolerance: f64,
    /// Breakpoints closer than this (in capacity units) are merged.
    pub merge_tolerance: f64,
    /// Hard cap on recursion depth; exceeding it indicates mis-set
    /// tolerances and fails loudly.
    pub max_depth: usize,
}

impl Default for FbsConfig {
    fn default() -> Self {
        Self {
            slope_tolerance: 1e-7,
            value_tolerance: 1e-6,
            merge_tolerance: 1e-9,
            max_depth: 64,
        }
    }
}

/// Outcome of a curve construction.
#[derive(Debug, Clone)]
pub struct FbsResult {
    pub curve: PiecewiseLinearCurve,
    /// Number of underlying optimizations performed.
    pub lp_solves: usize,
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    beta: f64,
    cost: f64,
    slope: f64,
}

/// Constructs the exact cost-versus-capacity curve of `f` on
/// `[beta_lo, beta_hi]` by recursive tangent intersection.
///
/// The lower endpoint must be feasible; pick it with
/// [`DispatchTemplate::min_feasible_capacity`] when in doubt.
pub fn fbs<F: CapacityCostFunction>(
    f: &F,
    beta_lo: f64,
    beta_hi: f64,
    alpha: f64,
    delta: f64,
    config: &FbsConfig,
) -> Result<FbsResult> {
    if !(beta_lo.is_finite() && beta_hi.is_finite()) || beta_lo >= beta_hi {
        return Err(Error::InvalidProblem(format!(
            "invalid capacity interval [{beta_lo}, {beta_hi}]"
        )));
    }
    let mut solves = 0usize;
    let mut probe = |beta: f64| -> Result<Sample> {
        solves += 1;
        let (cost, slope) = f.cost_and_slope(beta)?;
        Ok(Sample { beta, cost, slope })
    };

    let lo = probe(beta_lo)?;
    let hi = probe(beta_hi)?;
    let mut samples = Vec::new();
    split_interval(&mut probe, lo, hi, 0, config, &mut samples)?;
    samples.push(hi);

    let breakpoints = coalesce(samples, config);
    let curve = PiecewiseLinearCurve::from_breakpoints(breakpoints, alpha, delta)?;
    Ok(FbsResult {
        curve,
        lp_solves: solves,
    })
}

/// Emits the left endpoint of every resolved segment into `out` (the
/// caller appends the final right endpoint once).
fn split_interval<P: FnMut(f64) -> Result<Sample>>(
    probe: &mut P,
    lo: Sample,
    hi: Sample,
    depth: usize,
    config: &FbsConfig,
    out: &mut Vec<Sample>,
) -> Result<()> {
    if depth > config.max_depth {
        return Err(Error::DepthExceeded(config.max_depth));
    }
    let slope_tol = config.slope_tolerance * (1.0 + lo.slope.abs().max(hi.slope.abs()));
    if (lo.slope - hi.slope).abs() <= slope_tol || hi.beta - lo.beta <= config.merge_tolerance {
        out.push(lo);
        return Ok(());
    }

    // Intersection (z, c_z) of the two endpoint tangent lines.
    let z = (lo.cost - hi.cost + hi.slope * hi.beta - lo.slope * lo.beta)
        / (hi.slope - lo.slope);
    let tangent_value = lo.cost + lo.slope * (z - lo.beta);

    // An intersection collapsing onto an endpoint means that endpoint's
    // tangent is the chord: the interval is one segment. This also absorbs
    // one-sided duals reported exactly at a kink.
    if z <= lo.beta + config.merge_tolerance || z >= hi.beta - config.merge_tolerance {
        out.push(lo);
        return Ok(());
    }

    let mid = probe(z)?;

    // Tangents of a convex function may never exceed it.
    if tangent_value > mid.cost + 1e-7 * (1.0 + mid.cost.abs()) {
        return Err(Error::NumericalFailure(format!(
            "tangent intersection above the curve at beta {z}: {tangent_value} > {}",
            mid.cost
        )));
    }

    let value_tol = config.value_tolerance * (1.0 + mid.cost.abs());
    if mid.cost - tangent_value <= value_tol {
        // z is a breakpoint: the tangents are exact on both sides.
        out.push(lo);
        out.push(mid);
        return Ok(());
    }

    split_interval(probe, lo, mid, depth + 1, config, out)?;
    split_interval(probe, mid, hi, depth + 1, config, out)
}

/// Deduplicates near-coincident samples and drops collinear interior
/// points, keeping the exact solver costs as breakpoint values.
fn coalesce(samples: Vec<Sample>, config: &FbsConfig) -> Vec<(f64, f64)> {
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(samples.len());
    for s in samples {
        if let Some(&(last_beta, _)) = points.last() {
            if s.beta - last_beta <= config.merge_tolerance {
                continue;
            }
        }
        points.push((s.beta, s.cost));
    }

    // Remove interior points whose adjacent chord slopes agree.
    let mut merged = true;
    while merged && points.len() > 2 {
        merged = false;
        let mut keep: Vec<(f64, f64)> = vec![points[0]];
        let mut i = 1;
        while i < points.len() - 1 {
            let (b0, v0) = *keep.last().unwrap();
            let (b1, v1) = points[i];
            let (b2, v2) = points[i + 1];
            let left = (v1 - v0) / (b1 - b0);
            let right = (v2 - v1) / (b2 - b1);
            let tol = config.slope_tolerance * (1.0 + left.abs().max(right.abs()));
            if (left - right).abs() <= tol {
                merged = true;
            } else {
                keep.push(points[i]);
            }
            i += 1;
        }
        keep.push(*points.last().unwrap());
        points = keep;
    }
    points
}

/// Deviation report from re-solving on a dense capacity grid.
#[derive(Debug, Clone, Serialize)]
pub struct CurveVerification {
    pub samples: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub worst_beta: f64,
    /// Betas where the underlying solve failed, if any.
    pub failures: Vec<String>,
}

/// Cross-checks a curve against `n_samples` direct optimizations evenly
/// spaced over its interval. Relative error is measured against
/// `max(1, |cost|)`.
pub fn verify_curve<F: CapacityCostFunction + Sync>(
    f: &F,
    curve: &PiecewiseLinearCurve,
    n_samples: usize,
) -> Result<CurveVerification> {
    use rayon::prelude::*;

    if n_samples < 2 {
        return Err(Error::InvalidProblem(
            "verification needs at least two samples".into(),
        ));
    }
    let (lo, hi) = curve.interval();
    let step = (hi - lo) / (n_samples - 1) as f64;
    let betas: Vec<f64> = (0..n_samples)
        .map(|i| (lo + step * i as f64).min(hi))
        .collect();

    let outcomes: Vec<(f64, std::result::Result<(f64, f64), String>)> = betas
        .par_iter()
        .map(|&beta| {
            let direct = f.cost_and_slope(beta).map_err(|e| e.to_string());
            let both = direct.and_then(|(cost, _)| {
                curve
                    .evaluate(beta)
                    .map(|interp| (cost, interp))
                    .map_err(|e| e.to_string())
            });
            (beta, both)
        })
        .collect();

    let mut report = CurveVerification {
        samples: n_samples,
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        worst_beta: lo,
        failures: Vec::new(),
    };
    for (beta, outcome) in outcomes {
        match outcome {
            Ok((direct, interp)) => {
                let abs = (direct - interp).abs();
                let rel = abs / direct.abs().max(1.0);
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst_beta = beta;
                }
                report.max_abs_error = report.max_abs_error.max(abs);
            }
            Err(message) => report.failures.push(format!("beta {beta}: {message}")),
        }
    }
    Ok(report)
}
