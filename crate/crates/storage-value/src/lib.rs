//! Quantifying the value of energy storage under a renewable portfolio
//! standard.
//!
//! The library solves a risk-limited storage-dispatch linear program,
//! constructs the exact piecewise-linear minimal-cost-versus-capacity
//! function by parametric analysis, and evaluates cost-saving and
//! lost-opportunity-cost metrics on top of it.
//!
//! Pipeline, end to end:
//!
//! 1. [`timeseries`] loads or synthesizes hourly scenarios and pools
//!    renewable forecast errors.
//! 2. [`reserve`] turns a risk requirement `Q` into the smallest reserved
//!    headroom that covers the forecast error with probability `Q`%,
//!    empirically or through a fitted Laplace law.
//! 3. [`dispatch`] solves the minimal-cost dispatch for a fixed capacity
//!    and reserve, exposing the capacity dual.
//! 4. [`parametric`] assembles exact cost-versus-capacity curves from few
//!    dispatch solves.
//! 5. [`analysis`] evaluates storage value metrics and aggregates them
//!    across scenarios.
//!
//! All computations are pure functions over immutable inputs and safe to
//! run concurrently.

pub mod analysis;
pub mod dispatch;
pub mod error;
pub mod lp;
pub mod parametric;
pub mod reserve;
pub mod timeseries;

pub use analysis::{
    cost_saving, invert_capacity, loc_rl, loc_rps, percentile_bands, ReportKind, ValueReport,
};
pub use dispatch::{
    DispatchProblem, DispatchSolution, DispatchTemplate, RpsMode, SolveDiagnostics,
};
pub use error::{Error, Result};
pub use parametric::{
    fbs, verify_curve, CapacityCostFunction, CurveVerification, FbsConfig, FbsResult,
    PiecewiseLinearCurve,
};
pub use reserve::{
    build_reserve_curve, delta_empirical, delta_laplace, fit_laplace, LaplaceParams,
    ReserveCurve, ReserveMethod,
};
pub use timeseries::{
    extract_errors, load_scenario, read_scenario, synthesize_scenario, ColumnMap,
    ErrorSampleSet, ErrorScaling, GeneratorConfig, ScenarioData,
};
