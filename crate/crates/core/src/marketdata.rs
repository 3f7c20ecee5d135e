//! Daily closing-price tables: loading, alignment, period splits, synthetic
//! fixtures and simple returns.
//!
//! Two CSV layouts are accepted:
//!
//! * wide: `date,<ticker1>,...,<tickerD>` with one row per date (canonical),
//! * long: `date,ticker,close` with one row per quote.
//!
//! Dates are ISO-8601 (`YYYY-MM-DD`). Supply split- and dividend-adjusted
//! closes; the trading model has no notion of corporate actions.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{component_rng, STREAM_SYNTHETIC};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).map_err(|e| Error::parse(format!("date `{s}`"), e))
}

/// Dense, date-aligned matrix of closing prices (dates x tickers).
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    // row-major, dates.len() rows of tickers.len() prices
    prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = tickers.len();
        if d == 0 {
            return Err(Error::InvalidSeries("no tickers".into()));
        }
        if dates.is_empty() {
            return Err(Error::InvalidSeries("no dates".into()));
        }
        if rows.len() != dates.len() {
            return Err(Error::DimensionMismatch {
                context: "price rows",
                expected: dates.len(),
                got: rows.len(),
            });
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSeries(format!(
                "dates not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        let mut prices = Vec::with_capacity(d * rows.len());
        for (date, row) in dates.iter().zip(&rows) {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "price row width",
                    expected: d,
                    got: row.len(),
                });
            }
            for (ticker, &p) in tickers.iter().zip(row) {
                if !p.is_finite() {
                    return Err(Error::NonFinite("price"));
                }
                if p <= 0.0 {
                    return Err(Error::NonPositivePrice {
                        date: *date,
                        ticker: ticker.clone(),
                        price: p,
                    });
                }
            }
            prices.extend_from_slice(row);
        }
        Ok(Self {
            dates,
            tickers,
            prices,
        })
    }

    /// Number of dates.
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Number of tickers.
    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn date(&self, t: usize) -> NaiveDate {
        self.dates[t]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let d = self.n_assets();
        &self.prices[t * d..(t + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.prices.chunks_exact(self.n_assets())
    }

    pub fn first_date(&self) -> NaiveDate {
        self.dates[0]
    }

    pub fn last_date(&self) -> NaiveDate {
        self.dates[self.dates.len() - 1]
    }

    /// Sub-series over the half-open row range `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidParameter(format!(
                "slice {start}..{end} of a {}-date series",
                self.len()
            )));
        }
        let d = self.n_assets();
        Ok(Self {
            dates: self.dates[start..end].to_vec(),
            tickers: self.tickers.clone(),
            prices: self.prices[start * d..end * d].to_vec(),
        })
    }

    /// Appends `later` after `self`. Tickers must match and dates must keep increasing.
    pub fn concat(&self, later: &PriceSeries) -> Result<Self> {
        if self.tickers != later.tickers {
            return Err(Error::InvalidSeries("cannot concatenate series with different tickers".into()));
        }
        if self.last_date() >= later.first_date() {
            return Err(Error::InvalidSeries(format!(
                "cannot concatenate: {} is not before {}",
                self.last_date(),
                later.first_date()
            )));
        }
        let mut dates = self.dates.clone();
        dates.extend_from_slice(&later.dates);
        let mut prices = self.prices.clone();
        prices.extend_from_slice(&later.prices);
        Ok(Self {
            dates,
            tickers: self.tickers.clone(),
            prices,
        })
    }

    /// Writes the canonical wide CSV. Prices use the shortest representation
    /// that parses back to the same `f64`.
    pub fn write_wide_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.tickers.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (date, row) in self.dates.iter().zip(self.rows()) {
            let mut rec = vec![date.format(DATE_FORMAT).to_string()];
            rec.extend(row.iter().map(|p| p.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_wide_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_wide_csv(std::io::BufWriter::new(file))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::parse("csv", e)
}

/// A loaded table plus the number of dates discarded during alignment.
#[derive(Debug, Clone)]
pub struct LoadedPrices {
    pub series: PriceSeries,
    pub dropped_dates: usize,
}

pub fn load_price_table(path: impl AsRef<Path>, universe: Option<&[String]>) -> Result<LoadedPrices> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_price_table(file, universe)
}

/// Parses a wide or long price table and aligns it into a dense series.
///
/// Any date lacking a quote for one of the selected tickers is dropped and
/// counted in [`LoadedPrices::dropped_dates`].
pub fn read_price_table<R: Read>(reader: R, universe: Option<&[String]>) -> Result<LoadedPrices> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|s| s.to_string())
        .collect();
    if header.first().map(|s| s.to_ascii_lowercase()) != Some("date".into()) {
        return Err(Error::parse("price table header", "first column must be `date`"));
    }

    // date -> ticker -> price
    let mut quotes: BTreeMap<NaiveDate, HashMap<String, f64>> = BTreeMap::new();
    let mut seen_order: Vec<String> = Vec::new();
    let is_long = header.len() == 3
        && header[1].eq_ignore_ascii_case("ticker")
        && header[2].eq_ignore_ascii_case("close");

    if is_long {
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != 3 {
                return Err(Error::parse("long-format row", format!("expected 3 fields, got {}", rec.len())));
            }
            let date = parse_date(&rec[0])?;
            let ticker = rec[1].to_string();
            let price = parse_price(&rec[2])?;
            if !seen_order.contains(&ticker) {
                seen_order.push(ticker.clone());
            }
            if quotes.entry(date).or_default().insert(ticker.clone(), price).is_some() {
                return Err(Error::parse("long-format table", format!("duplicate quote for {ticker} on {date}")));
            }
        }
    } else {
        seen_order = header[1..].to_vec();
        if seen_order.is_empty() {
            return Err(Error::parse("wide-format header", "no ticker columns"));
        }
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != header.len() {
                return Err(Error::parse(
                    "wide-format row",
                    format!("expected {} fields, got {}", header.len(), rec.len()),
                ));
            }
            let date = parse_date(&rec[0])?;
            let mut row = HashMap::new();
            for (ticker, cell) in seen_order.iter().zip(rec.iter().skip(1)) {
                if cell.is_empty() {
                    continue;
                }
                row.insert(ticker.clone(), parse_price(cell)?);
            }
            if quotes.insert(date, row).is_some() {
                return Err(Error::parse("wide-format table", format!("duplicate date {date}")));
            }
        }
    }

    let tickers: Vec<String> = match universe {
        Some(u) => {
            for t in u {
                if !seen_order.contains(t) {
                    return Err(Error::MissingTicker(t.clone()));
                }
            }
            u.to_vec()
        }
        None => seen_order,
    };

    let mut dates = Vec::new();
    let mut rows = Vec::new();
    let mut dropped = 0;
    for (date, row) in &quotes {
        let aligned: Option<Vec<f64>> = tickers.iter().map(|t| row.get(t).copied()).collect();
        match aligned {
            Some(prices) => {
                for (t, &p) in tickers.iter().zip(&prices) {
                    if p <= 0.0 {
                        return Err(Error::NonPositivePrice {
                            date: *date,
                            ticker: t.clone(),
                            price: p,
                        });
                    }
                }
                dates.push(*date);
                rows.push(prices);
            }
            None => dropped += 1,
        }
    }
    if dates.len() < 2 {
        return Err(Error::TooFewDates {
            needed: 2,
            have: dates.len(),
        });
    }
    Ok(LoadedPrices {
        series: PriceSeries::new(dates, tickers, rows)?,
        dropped_dates: dropped,
    })
}

fn parse_price(cell: &str) -> Result<f64> {
    let p: f64 = cell
        .trim()
        .parse()
        .map_err(|e| Error::parse(format!("price `{cell}`"), e))?;
    if !p.is_finite() {
        return Err(Error::parse(format!("price `{cell}`"), "not finite"));
    }
    Ok(p)
}

/// Train / validation / trade periods, contiguous and in that order.
#[derive(Debug, Clone)]
pub struct PeriodSplit {
    pub train: PriceSeries,
    pub validation: PriceSeries,
    pub trade: PriceSeries,
}

/// Splits a series at two boundary dates. A boundary date belongs to the
/// earlier period.
pub fn split_periods(series: &PriceSeries, train_end: NaiveDate, validation_end: NaiveDate) -> Result<PeriodSplit> {
    if train_end >= validation_end {
        return Err(Error::InvalidParameter(format!(
            "train_end {train_end} must precede validation_end {validation_end}"
        )));
    }
    for b in [train_end, validation_end] {
        if b < series.first_date() || b > series.last_date() {
            return Err(Error::BoundaryOutOfRange(b));
        }
    }
    let dates = series.dates();
    let train_len = dates.partition_point(|d| *d <= train_end);
    let val_len = dates.partition_point(|d| *d <= validation_end) - train_len;
    let trade_len = series.len() - train_len - val_len;
    for (period, len) in [("train", train_len), ("validation", val_len), ("trade", trade_len)] {
        if len < 2 {
            return Err(Error::EmptyPeriod { period, len });
        }
    }
    Ok(PeriodSplit {
        train: series.slice(0, train_len)?,
        validation: series.slice(train_len, train_len + val_len)?,
        trade: series.slice(train_len + val_len, series.len())?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// `price[t] = p0 * (1 + drift)^t`
    Trend,
    /// Log-normal steps with mean growth `drift` per day.
    RandomWalk,
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trend" => Ok(Self::Trend),
            "random-walk" | "gbm" => Ok(Self::RandomWalk),
            other => Err(Error::Config(format!("unknown generator `{other}` (trend | random-walk)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickerParams {
    pub p0: f64,
    /// Expected simple return per day.
    pub drift: f64,
    /// Daily log-return volatility (ignored by the trend generator).
    pub volatility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kind: GeneratorKind,
    pub days: usize,
    pub start: NaiveDate,
    pub params: Vec<TickerParams>,
}

/// Generates a reproducible synthetic market on consecutive weekdays.
///
/// The random walk multiplies each day by `(1 + drift) * exp(vol * z - vol^2 / 2)`
/// with `z` standard normal, so zero volatility reproduces the trend exactly.
pub fn synthetic_series(spec: &SyntheticSpec, seed: u64) -> Result<PriceSeries> {
    if spec.days < 2 {
        return Err(Error::InvalidParameter(format!("days must be >= 2, got {}", spec.days)));
    }
    if spec.params.is_empty() {
        return Err(Error::InvalidParameter("need at least one ticker".into()));
    }
    for (i, p) in spec.params.iter().enumerate() {
        if !(p.p0 > 0.0 && p.p0.is_finite()) {
            return Err(Error::InvalidParameter(format!("ticker {i}: p0 must be positive, got {}", p.p0)));
        }
        if !(p.drift > -1.0 && p.drift.is_finite()) {
            return Err(Error::InvalidParameter(format!("ticker {i}: drift must exceed -1, got {}", p.drift)));
        }
        if !(p.volatility >= 0.0 && p.volatility.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "ticker {i}: volatility must be >= 0, got {}",
                p.volatility
            )));
        }
    }
    let d = spec.params.len();
    let width = (d.max(2) as f64).log10().ceil() as usize;
    let tickers: Vec<String> = (0..d).map(|i| format!("SYN{:0width$}", i + 1)).collect();
    let dates = weekdays_from(spec.start, spec.days);

    let mut rows = Vec::with_capacity(spec.days);
    match spec.kind {
        GeneratorKind::Trend => {
            for t in 0..spec.days {
                rows.push(
                    spec.params
                        .iter()
                        .map(|p| p.p0 * (1.0 + p.drift).powi(t as i32))
                        .collect(),
                );
            }
        }
        GeneratorKind::RandomWalk => {
            let mut rng = component_rng(seed, STREAM_SYNTHETIC);
            let mut current: Vec<f64> = spec.params.iter().map(|p| p.p0).collect();
            rows.push(current.clone());
            for _ in 1..spec.days {
                for (price, p) in current.iter_mut().zip(&spec.params) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let shock = (p.volatility * z - 0.5 * p.volatility * p.volatility).exp();
                    *price *= (1.0 + p.drift) * shock;
                }
                rows.push(current.clone());
            }
        }
    }
    PriceSeries::new(dates, tickers, rows)
}

fn weekdays_from(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    start
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(n)
        .collect()
}

/// Simple daily returns, `(T-1) x D`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    n_assets: usize,
    data: Vec<f64>,
}

impl ReturnMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_assets = rows.first().map_or(0, |r| r.len());
        if n_assets == 0 {
            return Err(Error::InvalidParameter("empty return matrix".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * n_assets);
        for r in &rows {
            if r.len() != n_assets {
                return Err(Error::DimensionMismatch {
                    context: "return row width",
                    expected: n_assets,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { n_assets, data })
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.n_assets
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_assets..(i + 1) * self.n_assets]
    }
}

pub fn daily_returns(series: &PriceSeries) -> Result<ReturnMatrix> {
    if series.len() < 2 {
        return Err(Error::TooFewDates {
            needed: 2,
            have: series.len(),
        });
    }
    let d = series.n_assets();
    let mut data = Vec::with_capacity((series.len() - 1) * d);
    for t in 0..series.len() - 1 {
        let (now, next) = (series.row(t), series.row(t + 1));
        data.extend(now.iter().zip(next).map(|(p0, p1)| p1 / p0 - 1.0));
    }
    Ok(ReturnMatrix { n_assets: d, data })
}
