//! Reserve sizing: maps a risk-limiting requirement `Q` to the smallest
//! storage headroom that covers the renewable forecast error with
//! probability at least `Q`%.
//!
//! Two routes are provided: the empirical quantile of the pooled error
//! samples, and the closed-form quantile of a maximum-likelihood Laplace
//! fit. Both convexify the chance constraint by fixing the reserve ahead of
//! dispatch.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::ErrorSampleSet;

/// Location/scale parameters of a Laplace (double exponential) law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceParams {
    pub location: f64,
    pub scale: f64,
}

impl LaplaceParams {
    pub fn new(location: f64, scale: f64) -> Result<Self> {
        if !location.is_finite() || !scale.is_finite() || scale <= 0.0 {
            return Err(Error::DegenerateScale);
        }
        Ok(Self { location, scale })
    }
}

/// Which quantile route produced a reserve curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReserveMethod {
    Empirical,
    Laplace,
}

impl std::fmt::Display for ReserveMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReserveMethod::Empirical => write!(f, "empirical"),
            ReserveMethod::Laplace => write!(f, "laplace"),
        }
    }
}

/// Reserve requirement evaluated on a ladder of risk levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReserveCurve {
    pub method: ReserveMethod,
    /// `(Q in percent, reserve in MWh)` pairs in ascending `Q`.
    pub evaluations: Vec<(f64, f64)>,
}

impl ReserveCurve {
    /// Writes `Q_percent,delta_mwh,method` rows.
    pub fn write_csv<W: Write>(&self, writer: W, fmt: impl Fn(f64) -> String) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["Q_percent", "delta_mwh", "method"])?;
        for &(q, delta) in &self.evaluations {
            w.write_record([fmt(q), fmt(delta), self.method.to_string()])?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<writer>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Smallest sample value covering at least `Q`% of the empirical error
/// distribution, scaled back to MWh in relative mode.
///
/// The convention is the lowest order statistic achieving coverage, with no
/// interpolation: the exact minimizer of the chance constraint over the
/// empirical law.
pub fn delta_empirical(samples: &ErrorSampleSet, risk_percent: f64) -> Result<f64> {
    if !(risk_percent > 0.0 && risk_percent <= 100.0) {
        return Err(Error::RiskOutOfRange {
            q: risk_percent,
            range: "(0, 100]",
        });
    }
    let mut sorted: Vec<f64> = samples.samples().to_vec();
    if sorted.is_empty() {
        return Err(Error::InvalidSamples);
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    // Smallest k with k/n >= Q/100. The 1e-9 slack keeps exact rational
    // boundaries (e.g. Q=80, n=5) from rounding up in floating point.
    let k = ((n as f64) * risk_percent / 100.0 - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[k.min(n) - 1] * samples.scale_factor())
}

/// Maximum-likelihood Laplace fit: location is the sample median, scale the
/// mean absolute deviation from it.
pub fn fit_laplace(samples: &ErrorSampleSet) -> Result<LaplaceParams> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { need: 2, got: n });
    }
    let mut sorted: Vec<f64> = samples.samples().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let location = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let scale = sorted.iter().map(|v| (v - location).abs()).sum::<f64>() / n as f64;
    if scale == 0.0 {
        return Err(Error::DegenerateScale);
    }
    LaplaceParams::new(location, scale)
}

/// Closed-form Laplace quantile at `q = Q/100`, in the units of the fitted
/// samples. Callers working in relative mode scale by the reference
/// capacity (see [`build_reserve_curve`]).
pub fn delta_laplace(params: &LaplaceParams, risk_percent: f64) -> Result<f64> {
    if !(risk_percent > 0.0 && risk_percent < 100.0) {
        return Err(Error::RiskOutOfRange {
            q: risk_percent,
            range: "(0, 100)",
        });
    }
    let q = risk_percent / 100.0;
    let quantile = if q < 0.5 {
        params.location + params.scale * (2.0 * q).ln()
    } else {
        params.location - params.scale * (2.0 * (1.0 - q)).ln()
    };
    Ok(quantile)
}

/// Evaluates the reserve requirement on a ladder of risk levels with the
/// chosen method. Evaluations are returned in ascending `Q` and are
/// non-decreasing by quantile monotonicity.
pub fn build_reserve_curve(
    samples: &ErrorSampleSet,
    method: ReserveMethod,
    risk_levels: &[f64],
) -> Result<ReserveCurve> {
    if risk_levels.is_empty() {
        return Err(Error::InvalidConfig("risk level list is empty".into()));
    }
    let mut levels = risk_levels.to_vec();
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let evaluations = match method {
        ReserveMethod::Empirical => levels
            .iter()
            .map(|&q| Ok((q, delta_empirical(samples, q)?)))
            .collect::<Result<Vec<_>>>()?,
        ReserveMethod::Laplace => {
            let params = fit_laplace(samples)?;
            levels
                .iter()
                .map(|&q| Ok((q, delta_laplace(&params, q)? * samples.scale_factor())))
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(ReserveCurve {
        method,
        evaluations,
    })
}
