//! Pure window functions shared by the batch and streaming paths. Every
//! function takes exactly the lookback slice it needs, oldest first.

use crate::market_data::OhlcvBar;

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Linearly weighted mean; the newest value carries weight `len`.
pub(crate) fn weighted_mean(values: &[f64]) -> f64 {
    let n = values.len();
    let num: f64 = values
        .iter()
        .enumerate()
        .map(|(i, v)| (i + 1) as f64 * v)
        .sum();
    num / (n * (n + 1) / 2) as f64
}

fn high_low(bars: &[OhlcvBar]) -> (f64, f64) {
    bars.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(h, l), b| {
        (h.max(b.high), l.min(b.low))
    })
}

/// Stochastic %K over the window; a flat window saturates at 50.
pub(crate) fn stochastic_k(bars: &[OhlcvBar]) -> f64 {
    let (hh, ll) = high_low(bars);
    let close = bars[bars.len() - 1].close;
    if hh > ll {
        (close - ll) / (hh - ll) * 100.0
    } else {
        50.0
    }
}

/// Williams %R in [-100, 0]; a flat window maps to -50.
pub(crate) fn williams_r(bars: &[OhlcvBar]) -> f64 {
    let (hh, ll) = high_low(bars);
    let close = bars[bars.len() - 1].close;
    if hh > ll {
        (hh - close) / (hh - ll) * -100.0
    } else {
        -50.0
    }
}

pub(crate) fn typical_price(bar: &OhlcvBar) -> f64 {
    (bar.high + bar.low + bar.close) / 3.0
}

/// Commodity channel index with the usual 0.015 constant. Zero mean
/// deviation gives 0.
pub(crate) fn cci(bars: &[OhlcvBar]) -> f64 {
    let tp: Vec<f64> = bars.iter().map(typical_price).collect();
    let avg = mean(&tp);
    let dev = tp.iter().map(|v| (v - avg).abs()).sum::<f64>() / tp.len() as f64;
    if dev > 0.0 {
        (tp[tp.len() - 1] - avg) / (0.015 * dev)
    } else {
        0.0
    }
}

/// RSI from Wilder averages; no losses saturates at 100.
pub(crate) fn rsi_from_averages(avg_gain: f64, avg_loss: f64) -> f64 {
    if avg_loss <= 0.0 {
        100.0
    } else {
        100.0 - 100.0 / (1.0 + avg_gain / avg_loss)
    }
}
