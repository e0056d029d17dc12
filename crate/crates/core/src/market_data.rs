//! Daily OHLCV bars: CSV ingestion, ordering, and sanity validation.
//!
//! Bars that break a price inequality are kept and flagged rather than
//! dropped, so downstream stages can skip them and say so.

use std::fmt;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DATE_FORMAT: &str = "%d-%m-%Y";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhlcvBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: i64,
    pub adj_close: Option<f64>,
}

impl OhlcvBar {
    /// The first rule this bar breaks, if any.
    pub fn violation(&self) -> Option<BarRule> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0)
            || self.adj_close.is_some_and(|p| !p.is_finite() || p <= 0.0)
        {
            return Some(BarRule::NonPositivePrice);
        }
        if self.volume < 0 {
            return Some(BarRule::NegativeVolume);
        }
        if self.high < self.low {
            return Some(BarRule::HighBelowLow);
        }
        if self.open < self.low {
            return Some(BarRule::OpenBelowLow);
        }
        if self.open > self.high {
            return Some(BarRule::OpenAboveHigh);
        }
        if self.close < self.low {
            return Some(BarRule::CloseBelowLow);
        }
        if self.close > self.high {
            return Some(BarRule::CloseAboveHigh);
        }
        None
    }

    pub fn is_valid(&self) -> bool {
        self.violation().is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BarRule {
    #[serde(rename = "nonpositive price")]
    NonPositivePrice,
    #[serde(rename = "negative volume")]
    NegativeVolume,
    #[serde(rename = "high < low")]
    HighBelowLow,
    #[serde(rename = "open < low")]
    OpenBelowLow,
    #[serde(rename = "open > high")]
    OpenAboveHigh,
    #[serde(rename = "close < low")]
    CloseBelowLow,
    #[serde(rename = "close > high")]
    CloseAboveHigh,
}

impl fmt::Display for BarRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BarRule::NonPositivePrice => "nonpositive price",
            BarRule::NegativeVolume => "negative volume",
            BarRule::HighBelowLow => "high < low",
            BarRule::OpenBelowLow => "open < low",
            BarRule::OpenAboveHigh => "open > high",
            BarRule::CloseBelowLow => "close < low",
            BarRule::CloseAboveHigh => "close > high",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BarStatus {
    Valid,
    Flagged(BarRule),
}

impl BarStatus {
    pub fn is_valid(self) -> bool {
        self == BarStatus::Valid
    }
}

/// An immutable, date-ordered series of daily bars.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    symbol: String,
    bars: Vec<OhlcvBar>,
    flags: Vec<BarStatus>,
}

impl PriceSeries {
    /// Sorts `bars` by date and rejects duplicates.
    pub fn new(symbol: impl Into<String>, mut bars: Vec<OhlcvBar>) -> Result<Self> {
        bars.sort_by_key(|b| b.date);
        if let Some(w) = bars.windows(2).find(|w| w[0].date == w[1].date) {
            return Err(Error::DuplicateDate(w[0].date));
        }
        let flags = bars
            .iter()
            .map(|b| match b.violation() {
                None => BarStatus::Valid,
                Some(rule) => BarStatus::Flagged(rule),
            })
            .collect();
        Ok(Self {
            symbol: symbol.into(),
            bars,
            flags,
        })
    }

    pub fn with_symbol(mut self, symbol: impl Into<String>) -> Self {
        self.symbol = symbol.into();
        self
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn bars(&self) -> &[OhlcvBar] {
        &self.bars
    }

    pub fn flags(&self) -> &[BarStatus] {
        &self.flags
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    /// Bars whose status is VALID, in date order.
    pub fn valid_bars(&self) -> Vec<OhlcvBar> {
        self.bars
            .iter()
            .zip(&self.flags)
            .filter(|(_, s)| s.is_valid())
            .map(|(b, _)| *b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedRow {
    /// Index into the date-ordered bar list.
    pub row: usize,
    pub date: NaiveDate,
    pub rule: BarRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub total_rows: usize,
    pub valid: usize,
    pub flagged: Vec<FlaggedRow>,
}

impl ValidationReport {
    /// One JSON object per flagged row.
    pub fn write_json_lines<W: Write>(&self, mut out: W) -> Result<()> {
        for row in &self.flagged {
            serde_json::to_writer(&mut out, row)?;
            out.write_all(b"\n")
                .map_err(|e| Error::io("<json lines>", e))?;
        }
        Ok(())
    }
}

pub fn validate_series(series: &PriceSeries) -> ValidationReport {
    let flagged: Vec<FlaggedRow> = series
        .bars
        .iter()
        .enumerate()
        .filter_map(|(row, bar)| {
            bar.violation().map(|rule| FlaggedRow {
                row,
                date: bar.date,
                rule,
            })
        })
        .collect();
    ValidationReport {
        total_rows: series.len(),
        valid: series.len() - flagged.len(),
        flagged,
    }
}

#[derive(Debug, Clone, Copy)]
struct Columns {
    date: usize,
    open: usize,
    high: usize,
    low: usize,
    close: usize,
    volume: usize,
    adj_close: Option<usize>,
}

impl Columns {
    fn locate(headers: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name))
        };
        let need = |name: &str| {
            find(name).ok_or_else(|| Error::Parse {
                row: 1,
                message: format!("missing column `{name}`"),
            })
        };
        Ok(Self {
            date: need("Date")?,
            open: need("Open")?,
            high: need("High")?,
            low: need("Low")?,
            close: need("Close")?,
            volume: need("Volume")?,
            adj_close: find("Adj Close"),
        })
    }
}

fn parse_price(field: &str, name: &str, row: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        row,
        message: format!("{name} `{field}` is not a number"),
    })
}

fn parse_volume(field: &str, row: usize) -> Result<i64> {
    let field = field.trim();
    if let Ok(v) = field.parse::<i64>() {
        return Ok(v);
    }
    match field.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() < 9.0e18 => Ok(v as i64),
        _ => Err(Error::Parse {
            row,
            message: format!("volume `{field}` is not an integer"),
        }),
    }
}

/// Parses a `Date,Open,High,Low,Close,Volume[,Adj Close]` CSV. Rows may be
/// in any order; the result is sorted ascending by date. Error row numbers
/// are file line numbers (the header is line 1).
pub fn parse_ohlcv_csv<R: Read>(source: R, date_format: &str) -> Result<PriceSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);
    let cols = Columns::locate(reader.headers()?)?;

    let mut bars = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let get = |idx: usize, name: &str| {
            record.get(idx).ok_or_else(|| Error::Parse {
                row,
                message: format!("missing {name} field"),
            })
        };
        let date_text = get(cols.date, "date")?;
        let date = NaiveDate::parse_from_str(date_text, date_format).map_err(|e| Error::Parse {
            row,
            message: format!("date `{date_text}` does not match `{date_format}`: {e}"),
        })?;
        let adj_close = match cols.adj_close.and_then(|i| record.get(i)) {
            Some(f) if !f.trim().is_empty() => Some(parse_price(f, "adj close", row)?),
            _ => None,
        };
        bars.push(OhlcvBar {
            date,
            open: parse_price(get(cols.open, "open")?, "open", row)?,
            high: parse_price(get(cols.high, "high")?, "high", row)?,
            low: parse_price(get(cols.low, "low")?, "low", row)?,
            close: parse_price(get(cols.close, "close")?, "close", row)?,
            volume: parse_volume(get(cols.volume, "volume")?, row)?,
            adj_close,
        });
    }
    PriceSeries::new("", bars)
}

/// Writes the series in the same layout `parse_ohlcv_csv` reads. The
/// `Adj Close` column is emitted only when some bar carries it.
pub fn write_ohlcv_csv<W: Write>(series: &PriceSeries, out: W, date_format: &str) -> Result<()> {
    let with_adj = series.bars.iter().any(|b| b.adj_close.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["Date", "Open", "High", "Low", "Close", "Volume"];
    if with_adj {
        header.push("Adj Close");
    }
    w.write_record(&header)?;
    for b in &series.bars {
        let mut rec = vec![
            b.date.format(date_format).to_string(),
            b.open.to_string(),
            b.high.to_string(),
            b.low.to_string(),
            b.close.to_string(),
            b.volume.to_string(),
        ];
        if with_adj {
            rec.push(b.adj_close.map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
