//! Technical indicators and the per-day feature matrix built from them.
//!
//! Each indicator implements [`Indicator`] and is registered by name in
//! an [`IndicatorRegistry`]; feature sets are lists of [`IndicatorSpec`]
//! written as `name:window[:key=value...]`.

mod builtin;
mod window;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use builtin::{
    AdditionDelivery, Cci, Impetus, Macd, MovingAverage, Rsi, StochasticD, StochasticK,
    WeightedMovingAverage, WilliamsR,
};

use crate::error::{Error, Result};
use crate::market_data::{BarRule, BarStatus, OhlcvBar, PriceSeries};
use crate::registry::Registry;

/// Fallback for `addition_delivery` on a bar with high == low.
pub const FLAT_BAR_ADDITION_DELIVERY: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSpec {
    pub name: String,
    pub window: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

impl IndicatorSpec {
    pub fn new(name: &str, window: usize) -> Self {
        Self {
            name: name.to_string(),
            window,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    /// `<indicator>_<window>`, the feature-matrix column header.
    pub fn column_name(&self) -> String {
        format!("{}_{}", self.name, self.window)
    }

    pub(crate) fn check_window(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Parameter(format!("{}: window must be >= 1", self.name)));
        }
        Ok(())
    }

    pub(crate) fn int_param(&self, key: &str, default: usize) -> Result<usize> {
        match self.params.get(key) {
            None => Ok(default),
            Some(&v) if v >= 1.0 && v.fract() == 0.0 => Ok(v as usize),
            Some(v) => Err(Error::Parameter(format!(
                "{}: `{key}` must be a positive integer, got {v}",
                self.name
            ))),
        }
    }
}

impl fmt::Display for IndicatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.name, self.window)?;
        for (k, v) in &self.params {
            write!(f, ":{k}={v}")?;
        }
        Ok(())
    }
}

impl FromStr for IndicatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let name = parts.next().filter(|n| !n.is_empty());
        let window = parts.next().and_then(|w| w.trim().parse::<usize>().ok());
        let (Some(name), Some(window)) = (name, window) else {
            return Err(Error::Config(format!(
                "indicator `{s}` is not of the form name:window[:key=value]"
            )));
        };
        let mut spec = IndicatorSpec::new(name.trim(), window);
        for kv in parts {
            let (k, v) = kv
                .split_once('=')
                .and_then(|(k, v)| Some((k.trim(), v.trim().parse::<f64>().ok()?)))
                .ok_or_else(|| Error::Config(format!("bad indicator parameter `{kv}` in `{s}`")))?;
            spec.params.insert(k.to_string(), v);
        }
        Ok(spec)
    }
}

/// Parses a comma-separated list of indicator specs.
pub fn parse_spec_list(s: &str) -> Result<Vec<IndicatorSpec>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// The default ten-indicator input set.
pub fn default_specs() -> Vec<IndicatorSpec> {
    vec![
        IndicatorSpec::new("sma", 30),
        IndicatorSpec::new("wma", 10),
        IndicatorSpec::new("impetus", 4),
        IndicatorSpec::new("ad", 1),
        IndicatorSpec::new("stoch_k", 14),
        IndicatorSpec::new("stoch_d", 14).with_param("smooth", 3.0),
        IndicatorSpec::new("rsi", 14),
        IndicatorSpec::new("macd", 26).with_param("fast", 12.0),
        IndicatorSpec::new("williams_r", 14),
        IndicatorSpec::new("cci", 20),
    ]
}

/// Incremental evaluation, one bar at a time.
pub trait IndicatorStream: Send {
    /// Feeds the next bar; returns the value once enough history exists.
    fn push(&mut self, bar: &OhlcvBar) -> Option<f64>;
}

pub trait Indicator: Send + Sync {
    fn spec(&self) -> &IndicatorSpec;

    /// Number of leading bars for which no value is defined.
    fn lookback(&self) -> usize;

    /// Whole-series evaluation; `None` for the first `lookback()` bars.
    fn batch(&self, bars: &[OhlcvBar]) -> Vec<Option<f64>>;

    fn stream(&self) -> Box<dyn IndicatorStream>;

    fn column_name(&self) -> String {
        self.spec().column_name()
    }
}

pub type IndicatorRegistry = Registry<IndicatorSpec, Box<dyn Indicator>>;

fn boxed<I: Indicator + 'static>(r: Result<I>) -> Result<Box<dyn Indicator>> {
    r.map(|i| Box::new(i) as Box<dyn Indicator>)
}

/// Registry holding the ten built-in indicators.
pub fn builtin_registry() -> IndicatorRegistry {
    let mut reg = IndicatorRegistry::new("indicator");
    reg.register("sma", |s| boxed(MovingAverage::new(s.clone())))
        .register("wma", |s| boxed(WeightedMovingAverage::new(s.clone())))
        .register("impetus", |s| boxed(Impetus::new(s.clone())))
        .register("ad", |s| boxed(AdditionDelivery::new(s.clone())))
        .register("stoch_k", |s| boxed(StochasticK::new(s.clone())))
        .register("stoch_d", |s| boxed(StochasticD::new(s.clone())))
        .register("rsi", |s| boxed(Rsi::new(s.clone())))
        .register("macd", |s| boxed(Macd::new(s.clone())))
        .register("williams_r", |s| boxed(WilliamsR::new(s.clone())))
        .register("cci", |s| boxed(Cci::new(s.clone())));
    reg
}

/// Arithmetic mean of each run of `window` consecutive closes. Output `k`
/// corresponds to input index `k + window - 1`.
pub fn moving_average(closes: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || closes.len() < window {
        return Err(Error::Parameter(format!(
            "moving average window {window} needs 1 <= window <= {}",
            closes.len()
        )));
    }
    Ok(closes.windows(window).map(window::mean).collect())
}

/// `closes[t] - closes[t - n]` for every `t >= n`.
pub fn impetus(closes: &[f64], n: usize) -> Result<Vec<f64>> {
    if n == 0 || n >= closes.len() {
        return Err(Error::Parameter(format!(
            "impetus lookback {n} needs 1 <= n < {}",
            closes.len()
        )));
    }
    Ok(closes.windows(n + 1).map(|w| w[n] - w[0]).collect())
}

/// `(high - close) / (high - low) * 100`.
pub fn addition_delivery(bar: &OhlcvBar) -> Result<f64> {
    let range = bar.high - bar.low;
    if range <= 0.0 {
        return Err(Error::DegenerateRange(bar.high));
    }
    Ok((bar.high - bar.close) / range * 100.0)
}

pub(crate) fn addition_delivery_or_fallback(bar: &OhlcvBar) -> f64 {
    addition_delivery(bar).unwrap_or_else(|_| {
        log::warn!(
            "{}: flat bar (high = low = {}), addition/delivery set to {}",
            bar.date,
            bar.high,
            FLAT_BAR_ADDITION_DELIVERY
        );
        FLAT_BAR_ADDITION_DELIVERY
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedBar {
    pub date: NaiveDate,
    pub rule: BarRule,
}

/// Per-day indicator vectors. Rows exist only for days where every
/// indicator is defined.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<IndicatorSpec>,
    pub values: Vec<Vec<f64>>,
    /// Leading valid bars dropped for lack of lookback.
    pub warmup: usize,
    /// Flagged bars left out before any indicator was computed.
    pub skipped: Vec<SkippedBar>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(IndicatorSpec::column_name).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }

    /// CSV with an ISO-8601 `date` column then one column per indicator.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(self.column_names());
        w.write_record(&header)?;
        for (date, row) in self.dates.iter().zip(&self.values) {
            let mut rec = vec![date.format("%Y-%m-%d").to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

pub fn compute_feature_matrix(series: &PriceSeries, specs: &[IndicatorSpec]) -> Result<FeatureMatrix> {
    compute_feature_matrix_with(&builtin_registry(), series, specs)
}

/// Builds the matrix over the series' VALID bars. Columns are computed
/// independently (in parallel) and joined on the common defined range.
pub fn compute_feature_matrix_with(
    registry: &IndicatorRegistry,
    series: &PriceSeries,
    specs: &[IndicatorSpec],
) -> Result<FeatureMatrix> {
    if specs.is_empty() {
        return Err(Error::Parameter("at least one indicator is required".into()));
    }
    let indicators = specs
        .iter()
        .map(|s| registry.build(&s.name, s))
        .collect::<Result<Vec<_>>>()?;
    let warmup = indicators.iter().map(|i| i.lookback()).max().unwrap_or(0);

    let skipped = series
        .bars()
        .iter()
        .zip(series.flags())
        .filter_map(|(b, s)| match s {
            BarStatus::Valid => None,
            BarStatus::Flagged(rule) => Some(SkippedBar {
                date: b.date,
                rule: *rule,
            }),
        })
        .collect();
    let bars = series.valid_bars();
    if bars.len() < warmup + 1 {
        return Err(Error::InsufficientHistory {
            required: warmup + 1,
            available: bars.len(),
        });
    }

    let columns: Vec<Vec<Option<f64>>> = indicators.par_iter().map(|ind| ind.batch(&bars)).collect();
    let mut values = Vec::with_capacity(bars.len() - warmup);
    for t in warmup..bars.len() {
        let row = columns
            .iter()
            .zip(&indicators)
            .map(|(col, ind)| match col[t] {
                Some(v) if v.is_finite() => Ok(v),
                other => Err(Error::Parameter(format!(
                    "{} undefined on {} ({other:?})",
                    ind.column_name(),
                    bars[t].date
                ))),
            })
            .collect::<Result<Vec<f64>>>()?;
        values.push(row);
    }

    Ok(FeatureMatrix {
        dates: bars[warmup..].iter().map(|b| b.date).collect(),
        columns: specs.to_vec(),
        values,
        warmup,
        skipped,
    })
}
