//! Seeded synthetic price series: log-price = drift + sinusoid + noise.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::market_data::{OhlcvBar, PriceSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendParams {
    pub n_bars: usize,
    pub start: NaiveDate,
    pub base_price: f64,
    /// Log-price drift per bar.
    pub drift: f64,
    /// Amplitude of the log-price sinusoid.
    pub amplitude: f64,
    /// Sinusoid period in bars.
    pub period: f64,
    /// Standard deviation of the i.i.d. log-price noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for TrendParams {
    fn default() -> Self {
        Self {
            n_bars: 2000,
            start: NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date"),
            base_price: 100.0,
            drift: 0.0004,
            amplitude: 0.08,
            period: 40.0,
            noise: 0.006,
            seed: 20_170_101,
        }
    }
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Weekday-only bars. Prices are rounded to 4 decimals with the high
/// rounded up and the low rounded down so every bar stays valid.
pub fn trending_series(params: &TrendParams) -> Result<PriceSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let level = Normal::new(0.0, params.noise).expect("finite noise");
    let intraday = Normal::new(0.0, params.noise * 0.5).expect("finite noise");
    let volume = Normal::<f64>::new(0.0, 0.3).expect("finite sd");

    let mut bars = Vec::with_capacity(params.n_bars);
    let mut date = params.start;
    let mut prev_close: Option<f64> = None;
    for t in 0..params.n_bars {
        while matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
            date = date.succ_opt().expect("date in range");
        }
        let tf = t as f64;
        let log_price = params.base_price.ln()
            + params.drift * tf
            + params.amplitude * (std::f64::consts::TAU * tf / params.period).sin()
            + level.sample(&mut rng);
        let close = round4(log_price.exp());
        let open = round4(prev_close.unwrap_or(close) * intraday.sample(&mut rng).exp());
        let high = (open.max(close) * intraday.sample(&mut rng).abs().exp() * 1e4).ceil() / 1e4;
        let low = (open.min(close) * (-intraday.sample(&mut rng).abs()).exp() * 1e4).floor() / 1e4;
        let vol = (1.0e6 * volume.sample(&mut rng).exp()).round() as i64 + rng.random_range(0..1000);
        bars.push(OhlcvBar {
            date,
            open,
            high,
            low,
            close,
            volume: vol,
            adj_close: Some(close),
        });
        prev_close = Some(close);
        date = date.succ_opt().expect("date in range");
    }
    PriceSeries::new("SYNTH", bars)
}
