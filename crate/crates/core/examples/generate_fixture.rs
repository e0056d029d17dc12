//! Writes the bundled synthetic trending series.
//!
//!     cargo run -p fsvm-trend --example generate_fixture -- fixtures/synthetic_trend.csv

use std::fs::File;
use std::io::BufWriter;

use fsvm_trend::market_data::{write_ohlcv_csv, DEFAULT_DATE_FORMAT};
use fsvm_trend::synthetic::{trending_series, TrendParams};

fn main() -> fsvm_trend::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "fixtures/synthetic_trend.csv".into());
    let series = trending_series(&TrendParams::default())?;
    let file = File::create(&path).map_err(|e| fsvm_trend::Error::io(&path, e))?;
    write_ohlcv_csv(&series, BufWriter::new(file), DEFAULT_DATE_FORMAT)?;
    eprintln!("wrote {} bars to {path}", series.len());
    Ok(())
}
