//! Hourly scenario data: CSV ingestion, validation, and synthesis.
//!
//! A scenario is a fixed horizon of real-time prices, demand forecasts and
//! renewable-generation forecasts, optionally accompanied by realized
//! (actual) demand and renewable series. Prices may be negative; demand and
//! renewable quantities may not.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Column names used when reading or writing scenario CSV files.
#[derive(Debug, Clone)]
pub struct ColumnMap {
    pub timestamp: String,
    pub price: String,
    pub demand_forecast: String,
    pub renewable_forecast: String,
    pub demand_actual: String,
    pub renewable_actual: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            price: "price".into(),
            demand_forecast: "demand_forecast".into(),
            renewable_forecast: "renewable_forecast".into(),
            demand_actual: "demand_actual".into(),
            renewable_actual: "renewable_actual".into(),
        }
    }
}

/// One planning scenario over `T` periods.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioData {
    timestamps: Vec<String>,
    price: Vec<f64>,
    demand_forecast: Vec<f64>,
    renewable_forecast: Vec<f64>,
    demand_actual: Option<Vec<f64>>,
    renewable_actual: Option<Vec<f64>>,
}

impl ScenarioData {
    /// Builds a scenario from the three mandatory series. Timestamps default
    /// to the period index.
    pub fn new(
        price: Vec<f64>,
        demand_forecast: Vec<f64>,
        renewable_forecast: Vec<f64>,
    ) -> Result<Self> {
        let horizon = price.len();
        if horizon == 0 {
            return Err(Error::EmptyHorizon);
        }
        check_series("price", &price, horizon, false)?;
        check_series("demand_forecast", &demand_forecast, horizon, true)?;
        check_series("renewable_forecast", &renewable_forecast, horizon, true)?;
        let timestamps = (0..horizon).map(|t| t.to_string()).collect();
        Ok(Self {
            timestamps,
            price,
            demand_forecast,
            renewable_forecast,
            demand_actual: None,
            renewable_actual: None,
        })
    }

    pub fn with_timestamps(mut self, timestamps: Vec<String>) -> Result<Self> {
        if timestamps.len() != self.horizon() {
            return Err(Error::LengthMismatch {
                series: "timestamp".into(),
                expected: self.horizon(),
                got: timestamps.len(),
            });
        }
        check_timestamps(&timestamps)?;
        self.timestamps = timestamps;
        Ok(self)
    }

    pub fn with_demand_actual(mut self, demand: Vec<f64>) -> Result<Self> {
        check_series("demand_actual", &demand, self.horizon(), true)?;
        self.demand_actual = Some(demand);
        Ok(self)
    }

    pub fn with_renewable_actual(mut self, renewable: Vec<f64>) -> Result<Self> {
        check_series("renewable_actual", &renewable, self.horizon(), true)?;
        self.renewable_actual = Some(renewable);
        Ok(self)
    }

    /// Number of periods `T`.
    pub fn horizon(&self) -> usize {
        self.price.len()
    }

    pub fn timestamps(&self) -> &[String] {
        &self.timestamps
    }

    pub fn price(&self) -> &[f64] {
        &self.price
    }

    pub fn demand_forecast(&self) -> &[f64] {
        &self.demand_forecast
    }

    pub fn renewable_forecast(&self) -> &[f64] {
        &self.renewable_forecast
    }

    pub fn demand_actual(&self) -> Option<&[f64]> {
        self.demand_actual.as_deref()
    }

    pub fn renewable_actual(&self) -> Option<&[f64]> {
        self.renewable_actual.as_deref()
    }

    pub fn total_demand_forecast(&self) -> f64 {
        self.demand_forecast.iter().sum()
    }

    pub fn total_renewable_forecast(&self) -> f64 {
        self.renewable_forecast.iter().sum()
    }

    /// Writes the scenario as CSV with the given column names. Absent
    /// optional series are omitted. Values are printed with the shortest
    /// representation that parses back to the same float, so a
    /// load → write → load cycle reproduces the scenario exactly.
    pub fn write_csv<W: Write>(&self, writer: W, columns: &ColumnMap) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![
            columns.timestamp.as_str(),
            columns.price.as_str(),
            columns.demand_forecast.as_str(),
            columns.renewable_forecast.as_str(),
        ];
        if self.demand_actual.is_some() {
            header.push(columns.demand_actual.as_str());
        }
        if self.renewable_actual.is_some() {
            header.push(columns.renewable_actual.as_str());
        }
        w.write_record(&header)?;
        for t in 0..self.horizon() {
            let mut record = vec![
                self.timestamps[t].clone(),
                self.price[t].to_string(),
                self.demand_forecast[t].to_string(),
                self.renewable_forecast[t].to_string(),
            ];
            if let Some(d) = &self.demand_actual {
                record.push(d[t].to_string());
            }
            if let Some(r) = &self.renewable_actual {
                record.push(r[t].to_string());
            }
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<writer>".into(),
            source: e,
        })?;
        Ok(())
    }

    pub fn save_csv<P: AsRef<Path>>(&self, path: P, columns: &ColumnMap) -> Result<()> {
        let file = File::create(path.as_ref()).map_err(|e| Error::Io {
            path: path.as_ref().to_path_buf(),
            source: e,
        })?;
        self.write_csv(file, columns)
    }
}

fn check_series(name: &str, values: &[f64], expected: usize, non_negative: bool) -> Result<()> {
    if values.len() != expected {
        return Err(Error::LengthMismatch {
            series: name.into(),
            expected,
            got: values.len(),
        });
    }
    for (row, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                column: name.into(),
                row,
            });
        }
        if non_negative && v < 0.0 {
            return Err(Error::NegativeValue {
                column: name.into(),
                row,
                value: v,
            });
        }
    }
    Ok(())
}

/// Timestamps are only checked for strict increase; their resolution is the
/// caller's concern. If every stamp parses as a number the comparison is
/// numeric, otherwise lexicographic (which matches ISO-8601 ordering).
fn check_timestamps(timestamps: &[String]) -> Result<()> {
    let numeric: Option<Vec<f64>> = timestamps.iter().map(|s| s.trim().parse().ok()).collect();
    match numeric {
        Some(values) => {
            for (row, pair) in values.windows(2).enumerate() {
                if pair[1] <= pair[0] {
                    return Err(Error::NonMonotonicTimestamps { row: row + 1 });
                }
            }
        }
        None => {
            for (row, pair) in timestamps.windows(2).enumerate() {
                if pair[1] <= pair[0] {
                    return Err(Error::NonMonotonicTimestamps { row: row + 1 });
                }
            }
        }
    }
    Ok(())
}

/// Loads a scenario from a CSV file.
pub fn load_scenario<P: AsRef<Path>>(path: P, columns: &ColumnMap) -> Result<ScenarioData> {
    let file = File::open(path.as_ref()).map_err(|e| Error::Io {
        path: path.as_ref().to_path_buf(),
        source: e,
    })?;
    read_scenario(file, columns)
}

/// Reads a scenario from any CSV source.
pub fn read_scenario<R: Read>(reader: R, columns: &ColumnMap) -> Result<ScenarioData> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);

    let ts_idx = find(&columns.timestamp).ok_or_else(|| Error::MissingColumn(columns.timestamp.clone()))?;
    let price_idx = find(&columns.price).ok_or_else(|| Error::MissingColumn(columns.price.clone()))?;
    let df_idx = find(&columns.demand_forecast)
        .ok_or_else(|| Error::MissingColumn(columns.demand_forecast.clone()))?;
    let rf_idx = find(&columns.renewable_forecast)
        .ok_or_else(|| Error::MissingColumn(columns.renewable_forecast.clone()))?;
    let da_idx = find(&columns.demand_actual);
    let ra_idx = find(&columns.renewable_actual);

    let mut timestamps = Vec::new();
    let mut price = Vec::new();
    let mut demand_forecast = Vec::new();
    let mut renewable_forecast = Vec::new();
    let mut demand_actual = Vec::new();
    let mut renewable_actual = Vec::new();

    let parse = |field: &str, column: &str, row: usize| -> Result<f64> {
        field.trim().parse::<f64>().map_err(|_| Error::NonNumeric {
            column: column.into(),
            row,
            value: field.into(),
        })
    };

    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let get = |idx: usize, column: &str| -> Result<&str> {
            record.get(idx).ok_or_else(|| Error::LengthMismatch {
                series: column.into(),
                expected: headers.len(),
                got: record.len(),
            })
        };
        timestamps.push(get(ts_idx, &columns.timestamp)?.to_string());
        price.push(parse(get(price_idx, &columns.price)?, &columns.price, row)?);
        demand_forecast.push(parse(
            get(df_idx, &columns.demand_forecast)?,
            &columns.demand_forecast,
            row,
        )?);
        renewable_forecast.push(parse(
            get(rf_idx, &columns.renewable_forecast)?,
            &columns.renewable_forecast,
            row,
        )?);
        if let Some(idx) = da_idx {
            demand_actual.push(parse(get(idx, &columns.demand_actual)?, &columns.demand_actual, row)?);
        }
        if let Some(idx) = ra_idx {
            renewable_actual.push(parse(
                get(idx, &columns.renewable_actual)?,
                &columns.renewable_actual,
                row,
            )?);
        }
    }

    let mut scenario = ScenarioData::new(price, demand_forecast, renewable_forecast)?
        .with_timestamps(timestamps)?;
    if da_idx.is_some() {
        scenario = scenario.with_demand_actual(demand_actual)?;
    }
    if ra_idx.is_some() {
        scenario = scenario.with_renewable_actual(renewable_actual)?;
    }
    Ok(scenario)
}

/// How forecast-error samples are expressed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorScaling {
    /// Samples in MWh.
    Absolute,
    /// Samples divided by a fixed reference capacity; quantiles are scaled
    /// back to MWh by the same factor.
    Relative { reference_capacity: f64 },
}

/// Pooled forecast-error samples `e = forecast − actual`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSampleSet {
    samples: Vec<f64>,
    scaling: ErrorScaling,
}

impl ErrorSampleSet {
    pub fn new(samples: Vec<f64>, scaling: ErrorScaling) -> Result<Self> {
        if samples.is_empty() || samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSamples);
        }
        if let ErrorScaling::Relative { reference_capacity } = scaling {
            if !(reference_capacity > 0.0) || !reference_capacity.is_finite() {
                return Err(Error::InvalidReferenceCapacity(reference_capacity));
            }
        }
        Ok(Self { samples, scaling })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn scaling(&self) -> ErrorScaling {
        self.scaling
    }

    /// Factor converting sample-space quantiles back to MWh.
    pub fn scale_factor(&self) -> f64 {
        match self.scaling {
            ErrorScaling::Absolute => 1.0,
            ErrorScaling::Relative { reference_capacity } => reference_capacity,
        }
    }
}

/// Extracts renewable forecast-error samples from a scenario.
///
/// Demand prediction is taken as perfect, so the pooled error is
/// `e_t = renewable_forecast_t − renewable_actual_t`, divided by the
/// reference capacity in relative mode.
pub fn extract_errors(scenario: &ScenarioData, scaling: ErrorScaling) -> Result<ErrorSampleSet> {
    let actual = scenario.renewable_actual().ok_or(Error::MissingActuals)?;
    let scale = match scaling {
        ErrorScaling::Absolute => 1.0,
        ErrorScaling::Relative { reference_capacity } => {
            if !(reference_capacity > 0.0) || !reference_capacity.is_finite() {
                return Err(Error::InvalidReferenceCapacity(reference_capacity));
            }
            reference_capacity
        }
    };
    let samples = scenario
        .renewable_forecast()
        .iter()
        .zip(actual)
        .map(|(f, a)| (f - a) / scale)
        .collect();
    ErrorSampleSet::new(samples, scaling)
}

/// Knobs for the synthetic scenario generator.
#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub price_mean: f64,
    pub price_daily_swing: f64,
    pub price_noise: f64,
    /// Probability that a period's price is redrawn uniformly from
    /// `[negative_price_floor, 0)`.
    pub negative_price_probability: f64,
    pub negative_price_floor: f64,
    pub demand_base: f64,
    pub demand_daily_swing: f64,
    pub demand_noise: f64,
    pub renewable_capacity: f64,
    /// Laplace scale of the renewable forecast error; zero means perfect
    /// forecasts.
    pub forecast_error_scale: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            price_mean: 30.0,
            price_daily_swing: 12.0,
            price_noise: 5.0,
            negative_price_probability: 0.05,
            negative_price_floor: -10.0,
            demand_base: 50.0,
            demand_daily_swing: 18.0,
            demand_noise: 2.0,
            renewable_capacity: 40.0,
            forecast_error_scale: 4.0,
        }
    }
}

impl GeneratorConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.negative_price_probability) {
            return Err(Error::InvalidConfig(format!(
                "negative_price_probability must lie in [0, 1], got {}",
                self.negative_price_probability
            )));
        }
        if self.negative_price_floor >= 0.0 {
            return Err(Error::InvalidConfig(
                "negative_price_floor must be negative".into(),
            ));
        }
        for (name, v) in [
            ("price_noise", self.price_noise),
            ("demand_base", self.demand_base),
            ("demand_daily_swing", self.demand_daily_swing),
            ("demand_noise", self.demand_noise),
            ("renewable_capacity", self.renewable_capacity),
            ("forecast_error_scale", self.forecast_error_scale),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be non-negative and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Generates a deterministic synthetic scenario with daily demand and price
/// shapes, a smoothed renewable profile, and Laplace forecast errors.
/// Actual series are always populated.
pub fn synthesize_scenario(
    seed: u64,
    horizon: usize,
    config: &GeneratorConfig,
) -> Result<ScenarioData> {
    if horizon == 0 {
        return Err(Error::EmptyHorizon);
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut price = Vec::with_capacity(horizon);
    let mut demand_forecast = Vec::with_capacity(horizon);
    let mut renewable_forecast = Vec::with_capacity(horizon);
    let mut renewable_actual = Vec::with_capacity(horizon);

    // Renewable availability follows a clamped random walk in [0, 1].
    let mut availability: f64 = rng.random_range(0.1..0.9);

    for t in 0..horizon {
        let hour = (t % 24) as f64;
        // Demand peaks in the evening, troughs at night.
        let phase = (hour - 18.0) / 24.0 * std::f64::consts::TAU;
        let demand = (self_noise(&mut rng, config.demand_noise)
            + config.demand_base
            + config.demand_daily_swing * phase.cos())
        .max(0.0);
        demand_forecast.push(demand);

        availability = (availability + rng.random_range(-0.12..0.12)).clamp(0.0, 1.0);
        let forecast = config.renewable_capacity * availability;
        renewable_forecast.push(forecast);
        let error = laplace_sample(&mut rng, config.forecast_error_scale);
        renewable_actual.push((forecast - error).max(0.0));

        let mut p = config.price_mean
            + config.price_daily_swing * phase.cos()
            + self_noise(&mut rng, config.price_noise);
        if rng.random::<f64>() < config.negative_price_probability {
            p = rng.random_range(config.negative_price_floor..0.0);
        }
        price.push(p);
    }

    let demand_actual = demand_forecast.clone();
    ScenarioData::new(price, demand_forecast, renewable_forecast)?
        .with_demand_actual(demand_actual)?
        .with_renewable_actual(renewable_actual)
}

fn self_noise(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    if scale == 0.0 {
        0.0
    } else {
        rng.random_range(-scale..scale)
    }
}

/// Inverse-CDF draw from Laplace(0, scale).
fn laplace_sample(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_csv() -> &'static str {
        "timestamp,price,demand_forecast,renewable_forecast,demand_actual,renewable_actual\n\
         2019-01-01T00:00,10.5,100,40,99,38\n\
         2019-01-01T01:00,-5.0,90,45,91,47\n\
         2019-01-01T02:00,12.25,95,42,95,40\n"
    }

    #[test]
    fn loads_full_csv() {
        let s = read_scenario(sample_csv().as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(s.horizon(), 3);
        assert_eq!(s.price(), &[10.5, -5.0, 12.25]);
        assert!(s.demand_actual().is_some());
        assert!(s.renewable_actual().is_some());
    }

    #[test]
    fn negative_price_is_legal() {
        let s = read_scenario(sample_csv().as_bytes(), &ColumnMap::default()).unwrap();
        assert!(s.price().iter().any(|&p| p < 0.0));
    }

    #[test]
    fn missing_column_is_reported() {
        let csv = "timestamp,price,demand_forecast\n0,1,2\n";
        let err = read_scenario(csv.as_bytes(), &ColumnMap::default()).unwrap_err();
        match err {
            Error::MissingColumn(c) => assert_eq!(c, "renewable_forecast"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_is_reported() {
        let csv = "timestamp,price,demand_forecast,renewable_forecast\n0,abc,2,3\n";
        let err = read_scenario(csv.as_bytes(), &ColumnMap::default()).unwrap_err();
        assert!(matches!(err, Error::NonNumeric { ref column, .. } if column == "price"));
    }

    #[test]
    fn negative_demand_rejected() {
        let csv = "timestamp,price,demand_forecast,renewable_forecast\n0,1,-2,3\n";
        let err = read_scenario(csv.as_bytes(), &ColumnMap::default()).unwrap_err();
        assert!(matches!(err, Error::NegativeValue { ref column, .. } if column == "demand_forecast"));
    }

    #[test]
    fn timestamps_must_increase() {
        let csv = "timestamp,price,demand_forecast,renewable_forecast\n5,1,2,3\n5,1,2,3\n";
        let err = read_scenario(csv.as_bytes(), &ColumnMap::default()).unwrap_err();
        assert!(matches!(err, Error::NonMonotonicTimestamps { row: 1 }));
    }

    #[test]
    fn numeric_timestamps_compare_numerically() {
        // "10" < "9" lexicographically but not numerically.
        let csv = "timestamp,price,demand_forecast,renewable_forecast\n9,1,2,3\n10,1,2,3\n";
        assert!(read_scenario(csv.as_bytes(), &ColumnMap::default()).is_ok());
    }

    #[test]
    fn round_trips_exactly() {
        let columns = ColumnMap::default();
        let first = read_scenario(sample_csv().as_bytes(), &columns).unwrap();
        let mut buf = Vec::new();
        first.write_csv(&mut buf, &columns).unwrap();
        let second = read_scenario(buf.as_slice(), &columns).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn extract_errors_absolute() {
        let s = ScenarioData::new(vec![1.0, 1.0], vec![1.0, 1.0], vec![2.0, 3.0])
            .unwrap()
            .with_renewable_actual(vec![1.0, 3.0])
            .unwrap();
        let e = extract_errors(&s, ErrorScaling::Absolute).unwrap();
        assert_eq!(e.samples(), &[1.0, 0.0]);
    }

    #[test]
    fn extract_errors_perfect_forecast_is_zero() {
        let s = ScenarioData::new(vec![1.0], vec![1.0], vec![5.0])
            .unwrap()
            .with_renewable_actual(vec![5.0])
            .unwrap();
        let e = extract_errors(&s, ErrorScaling::Absolute).unwrap();
        assert!(e.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn extract_errors_relative() {
        let s = ScenarioData::new(vec![1.0], vec![1.0], vec![10.0])
            .unwrap()
            .with_renewable_actual(vec![6.0])
            .unwrap();
        let e = extract_errors(
            &s,
            ErrorScaling::Relative {
                reference_capacity: 100.0,
            },
        )
        .unwrap();
        assert_eq!(e.samples(), &[0.04]);
    }

    #[test]
    fn extract_errors_requires_actuals() {
        let s = ScenarioData::new(vec![1.0], vec![1.0], vec![1.0]).unwrap();
        assert!(matches!(
            extract_errors(&s, ErrorScaling::Absolute),
            Err(Error::MissingActuals)
        ));
    }

    #[test]
    fn extract_errors_rejects_zero_reference() {
        let s = ScenarioData::new(vec![1.0], vec![1.0], vec![1.0])
            .unwrap()
            .with_renewable_actual(vec![1.0])
            .unwrap();
        assert!(matches!(
            extract_errors(
                &s,
                ErrorScaling::Relative {
                    reference_capacity: 0.0
                }
            ),
            Err(Error::InvalidReferenceCapacity(_))
        ));
    }

    #[test]
    fn synthesis_is_deterministic() {
        let cfg = GeneratorConfig::default();
        let a = synthesize_scenario(1, 24, &cfg).unwrap();
        let b = synthesize_scenario(1, 24, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synthesis_is_seed_sensitive() {
        let cfg = GeneratorConfig::default();
        let a = synthesize_scenario(1, 24, &cfg).unwrap();
        let b = synthesize_scenario(2, 24, &cfg).unwrap();
        assert_ne!(a.price(), b.price());
    }

    #[test]
    fn synthesis_rejects_empty_horizon() {
        assert!(matches!(
            synthesize_scenario(1, 0, &GeneratorConfig::default()),
            Err(Error::EmptyHorizon)
        ));
    }

    #[test]
    fn negative_price_probability_produces_negative_prices() {
        let cfg = GeneratorConfig {
            negative_price_probability: 0.1,
            ..GeneratorConfig::default()
        };
        let s = synthesize_scenario(7, 1000, &cfg).unwrap();
        let negatives = s.price().iter().filter(|&&p| p < 0.0).count();
        // Binomial(1000, 0.1): essentially impossible to see none.
        assert!(negatives > 0, "expected some negative prices");
        assert!(s.demand_forecast().iter().all(|&d| d >= 0.0));
        assert!(s.renewable_actual().unwrap().iter().all(|&r| r >= 0.0));
    }
}
