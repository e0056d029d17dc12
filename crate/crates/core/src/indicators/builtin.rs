//! The ten built-in indicators.

use std::collections::VecDeque;

use super::window;
use super::{addition_delivery_or_fallback, Indicator, IndicatorSpec, IndicatorStream};
use crate::error::{Error, Result};
use crate::market_data::OhlcvBar;

/// Keeps the most recent `cap` bars.
#[derive(Debug, Clone)]
struct History {
    cap: usize,
    bars: VecDeque<OhlcvBar>,
}

impl History {
    fn new(cap: usize) -> Self {
        Self {
            cap,
            bars: VecDeque::with_capacity(cap + 1),
        }
    }

    fn push(&mut self, bar: &OhlcvBar) -> bool {
        self.bars.push_back(*bar);
        if self.bars.len() > self.cap {
            self.bars.pop_front();
        }
        self.bars.len() == self.cap
    }

    fn slice(&mut self) -> &[OhlcvBar] {
        self.bars.make_contiguous()
    }
}

/// A windowed indicator with no state beyond the last `window` bars.
struct WindowStream {
    history: History,
    eval: fn(&[OhlcvBar]) -> f64,
}

impl IndicatorStream for WindowStream {
    fn push(&mut self, bar: &OhlcvBar) -> Option<f64> {
        if self.history.push(bar) {
            Some((self.eval)(self.history.slice()))
        } else {
            None
        }
    }
}

fn batch_windowed(bars: &[OhlcvBar], window: usize, eval: fn(&[OhlcvBar]) -> f64) -> Vec<Option<f64>> {
    (0..bars.len())
        .map(|t| (t + 1 >= window).then(|| eval(&bars[t + 1 - window..=t])))
        .collect()
}

fn sma_eval(bars: &[OhlcvBar]) -> f64 {
    window::mean(&bars.iter().map(|b| b.close).collect::<Vec<_>>())
}

fn wma_eval(bars: &[OhlcvBar]) -> f64 {
    window::weighted_mean(&bars.iter().map(|b| b.close).collect::<Vec<_>>())
}

fn impetus_eval(bars: &[OhlcvBar]) -> f64 {
    bars[bars.len() - 1].close - bars[0].close
}

fn ad_eval(bars: &[OhlcvBar]) -> f64 {
    addition_delivery_or_fallback(&bars[bars.len() - 1])
}

macro_rules! windowed_indicator {
    ($(#[$meta:meta])* $name:ident, $eval:expr, |$w:ident| $span:expr) => {
        $(#[$meta])*
        #[derive(Debug, Clone)]
        pub struct $name {
            spec: IndicatorSpec,
        }

        impl $name {
            pub fn new(spec: IndicatorSpec) -> Result<Self> {
                spec.check_window()?;
                Ok(Self { spec })
            }

            fn span(&self) -> usize {
                let $w = self.spec.window;
                $span
            }
        }

        impl Indicator for $name {
            fn spec(&self) -> &IndicatorSpec {
                &self.spec
            }

            fn lookback(&self) -> usize {
                self.span() - 1
            }

            fn batch(&self, bars: &[OhlcvBar]) -> Vec<Option<f64>> {
                batch_windowed(bars, self.span(), $eval)
            }

            fn stream(&self) -> Box<dyn IndicatorStream> {
                Box::new(WindowStream {
                    history: History::new(self.span()),
                    eval: $eval,
                })
            }
        }
    };
}

windowed_indicator!(
    /// Simple moving average of the last `window` closes.
    MovingAverage, sma_eval, |w| w
);
windowed_indicator!(
    /// Linearly weighted moving average of the last `window` closes.
    WeightedMovingAverage, wma_eval, |w| w
);
windowed_indicator!(
    /// `close[t] - close[t - window]`.
    Impetus, impetus_eval, |w| w + 1
);
windowed_indicator!(
    /// Position of the close inside the day's range, 0 at the high and 100
    /// at the low.
    AdditionDelivery, ad_eval, |_w| 1
);
windowed_indicator!(StochasticK, window::stochastic_k, |w| w);
windowed_indicator!(WilliamsR, window::williams_r, |w| w);
windowed_indicator!(Cci, window::cci, |w| w);

/// %D: a `smooth`-day average of %K (default 3).
#[derive(Debug, Clone)]
pub struct StochasticD {
    spec: IndicatorSpec,
    smooth: usize,
}

impl StochasticD {
    pub fn new(spec: IndicatorSpec) -> Result<Self> {
        spec.check_window()?;
        let smooth = spec.int_param("smooth", 3)?;
        Ok(Self { spec, smooth })
    }
}

struct StochasticDStream {
    history: History,
    ks: VecDeque<f64>,
    smooth: usize,
}

impl IndicatorStream for StochasticDStream {
    fn push(&mut self, bar: &OhlcvBar) -> Option<f64> {
        if !self.history.push(bar) {
            return None;
        }
        self.ks.push_back(window::stochastic_k(self.history.slice()));
        if self.ks.len() > self.smooth {
            self.ks.pop_front();
        }
        (self.ks.len() == self.smooth).then(|| window::mean(self.ks.make_contiguous()))
    }
}

impl Indicator for StochasticD {
    fn spec(&self) -> &IndicatorSpec {
        &self.spec
    }

    fn lookback(&self) -> usize {
        self.spec.window - 1 + self.smooth - 1
    }

    fn batch(&self, bars: &[OhlcvBar]) -> Vec<Option<f64>> {
        let k = batch_windowed(bars, self.spec.window, window::stochastic_k);
        let first = self.lookback();
        (0..bars.len())
            .map(|t| {
                (t >= first).then(|| {
                    let ks: Vec<f64> = k[t + 1 - self.smooth..=t]
                        .iter()
                        .map(|v| v.expect("defined past %K lookback"))
                        .collect();
                    window::mean(&ks)
                })
            })
            .collect()
    }

    fn stream(&self) -> Box<dyn IndicatorStream> {
        Box::new(StochasticDStream {
            history: History::new(self.spec.window),
            ks: VecDeque::with_capacity(self.smooth + 1),
            smooth: self.smooth,
        })
    }
}

/// Wilder's relative strength index.
#[derive(Debug, Clone)]
pub struct Rsi {
    spec: IndicatorSpec,
}

impl Rsi {
    pub fn new(spec: IndicatorSpec) -> Result<Self> {
        spec.check_window()?;
        Ok(Self { spec })
    }
}

#[derive(Default)]
struct RsiStream {
    window: usize,
    prev_close: Option<f64>,
    seen: usize,
    gain_sum: f64,
    loss_sum: f64,
    avg: Option<(f64, f64)>,
}

impl IndicatorStream for RsiStream {
    fn push(&mut self, bar: &OhlcvBar) -> Option<f64> {
        let prev = self.prev_close.replace(bar.close)?;
        let change = bar.close - prev;
        let (gain, loss) = (change.max(0.0), (-change).max(0.0));
        let w = self.window as f64;
        match self.avg {
            Some((g, l)) => {
                let next = ((g * (w - 1.0) + gain) / w, (l * (w - 1.0) + loss) / w);
                self.avg = Some(next);
            }
            None => {
                self.seen += 1;
                self.gain_sum += gain;
                self.loss_sum += loss;
                if self.seen < self.window {
                    return None;
                }
                self.avg = Some((self.gain_sum / w, self.loss_sum / w));
            }
        }
        self.avg.map(|(g, l)| window::rsi_from_averages(g, l))
    }
}

impl Indicator for Rsi {
    fn spec(&self) -> &IndicatorSpec {
        &self.spec
    }

    fn lookback(&self) -> usize {
        self.spec.window
    }

    fn batch(&self, bars: &[OhlcvBar]) -> Vec<Option<f64>> {
        let w = self.spec.window;
        let mut out = vec![None; bars.len()];
        if bars.len() <= w {
            return out;
        }
        let changes: Vec<f64> = bars.windows(2).map(|p| p[1].close - p[0].close).collect();
        let mut gain_sum = 0.0;
        let mut loss_sum = 0.0;
        for c in &changes[..w] {
            gain_sum += c.max(0.0);
            loss_sum += (-c).max(0.0);
        }
        let wf = w as f64;
        let (mut g, mut l) = (gain_sum / wf, loss_sum / wf);
        out[w] = Some(window::rsi_from_averages(g, l));
        for t in w + 1..bars.len() {
            let c = changes[t - 1];
            g = (g * (wf - 1.0) + c.max(0.0)) / wf;
            l = (l * (wf - 1.0) + (-c).max(0.0)) / wf;
            out[t] = Some(window::rsi_from_averages(g, l));
        }
        out
    }

    fn stream(&self) -> Box<dyn IndicatorStream> {
        Box::new(RsiStream {
            window: self.spec.window,
            ..Default::default()
        })
    }
}

/// MACD line: EMA(fast) - EMA(slow) of closes. `window` is the slow span;
/// `fast` defaults to 12. Each EMA is seeded with the simple mean of its
/// first span.
#[derive(Debug, Clone)]
pub struct Macd {
    spec: IndicatorSpec,
    fast: usize,
}

impl Macd {
    pub fn new(spec: IndicatorSpec) -> Result<Self> {
        spec.check_window()?;
        let fast = spec.int_param("fast", 12)?;
        if fast >= spec.window {
            return Err(Error::Parameter(format!(
                "macd fast span {fast} must be shorter than slow span {}",
                spec.window
            )));
        }
        Ok(Self { spec, fast })
    }
}

#[derive(Debug, Clone)]
struct Ema {
    span: usize,
    alpha: f64,
    seed: Vec<f64>,
    value: Option<f64>,
}

impl Ema {
    fn new(span: usize) -> Self {
        Self {
            span,
            alpha: 2.0 / (span as f64 + 1.0),
            seed: Vec::with_capacity(span),
            value: None,
        }
    }

    fn push(&mut self, x: f64) -> Option<f64> {
        self.value = match self.value {
            Some(prev) => Some(prev + self.alpha * (x - prev)),
            None => {
                self.seed.push(x);
                (self.seed.len() == self.span).then(|| window::mean(&self.seed))
            }
        };
        self.value
    }
}

struct MacdStream {
    fast: Ema,
    slow: Ema,
}

impl IndicatorStream for MacdStream {
    fn push(&mut self, bar: &OhlcvBar) -> Option<f64> {
        let f = self.fast.push(bar.close);
        let s = self.slow.push(bar.close);
        Some(f? - s?)
    }
}

fn ema_series(closes: &[f64], span: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; closes.len()];
    if closes.len() < span {
        return out;
    }
    let alpha = 2.0 / (span as f64 + 1.0);
    let mut value = window::mean(&closes[..span]);
    out[span - 1] = Some(value);
    for t in span..closes.len() {
        value += alpha * (closes[t] - value);
        out[t] = Some(value);
    }
    out
}

impl Indicator for Macd {
    fn spec(&self) -> &IndicatorSpec {
        &self.spec
    }

    fn lookback(&self) -> usize {
        self.spec.window - 1
    }

    fn batch(&self, bars: &[OhlcvBar]) -> Vec<Option<f64>> {
        let closes: Vec<f64> = bars.iter().map(|b| b.close).collect();
        let fast = ema_series(&closes, self.fast);
        let slow = ema_series(&closes, self.spec.window);
        fast.iter().zip(&slow).map(|(f, s)| Some((*f)? - (*s)?)).collect()
    }

    fn stream(&self) -> Box<dyn IndicatorStream> {
        Box::new(MacdStream {
            fast: Ema::new(self.fast),
            slow: Ema::new(self.spec.window),
        })
    }
}
