//! Backtest performance metrics: final value, annualized return, annualized
//! standard deviation of daily returns, and the Sharpe ratio.
//!
//! Conventions: geometric annualization over 252 trading days, zero
//! risk-free rate. A curve with no return dispersion has no Sharpe ratio;
//! it is reported as `None` (JSON `null`), never as an infinity.

use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::DATE_FORMAT;

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

/// Annualized standard deviations at or below this are treated as zero.
pub const DEGENERATE_STD: f64 = 1e-12;

/// Dated portfolio values.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueCurve {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl ValueCurve {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("empty value curve".into()));
        }
        if dates.len() != values.len() {
            return Err(Error::DimensionMismatch {
                context: "value curve dates",
                expected: values.len(),
                got: dates.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("value curve"));
        }
        Ok(Self { dates, values })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "date,value")?;
        for (d, v) in self.dates.iter().zip(&self.values) {
            writeln!(w, "{},{}", d.format(DATE_FORMAT), v)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn simple_returns(values: &[f64]) -> impl Iterator<Item = f64> + '_ {
    values.windows(2).map(|w| w[1] / w[0] - 1.0)
}

/// `(V_T / V_0)^(periods_per_year / (T - 1)) - 1`
pub fn annualized_return(values: &[f64], periods_per_year: f64) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Insufficient(format!(
            "annualized return needs 2 values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter("annualized return needs positive values".into()));
    }
    let steps = (values.len() - 1) as f64;
    let growth = values[values.len() - 1] / values[0];
    Ok(growth.powf(periods_per_year / steps) - 1.0)
}

/// Sample standard deviation (n - 1) of simple daily returns, times `sqrt(periods_per_year)`.
pub fn annualized_std(values: &[f64], periods_per_year: f64) -> Result<f64> {
    if values.len() < 3 {
        return Err(Error::Insufficient(format!(
            "annualized std needs 3 values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter("annualized std needs positive values".into()));
    }
    let n = (values.len() - 1) as f64;
    let mean = simple_returns(values).sum::<f64>() / n;
    let var = simple_returns(values).map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt() * periods_per_year.sqrt())
}

/// `(return - risk_free) / std`, or `None` when the std is (numerically) zero.
pub fn sharpe(annualized_return: f64, annualized_std: f64, risk_free: f64) -> Option<f64> {
    if !(annualized_std > DEGENERATE_STD) || !annualized_std.is_finite() {
        return None;
    }
    Some((annualized_return - risk_free) / annualized_std)
}

/// One strategy's row of the comparison table, with its value curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub strategy: String,
    pub initial_value: f64,
    pub final_value: f64,
    pub annualized_return: f64,
    pub annualized_std: f64,
    pub sharpe: Option<f64>,
    #[serde(skip)]
    pub curve: Option<ValueCurve>,
}

impl BacktestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn curve(&self) -> &ValueCurve {
        self.curve.as_ref().expect("report built from a curve")
    }
}

pub fn build_report(name: &str, curve: ValueCurve) -> Result<BacktestReport> {
    let v = curve.values();
    let ret = annualized_return(v, TRADING_DAYS_PER_YEAR)?;
    let std = annualized_std(v, TRADING_DAYS_PER_YEAR)?;
    Ok(BacktestReport {
        strategy: name.to_string(),
        initial_value: v[0],
        final_value: v[v.len() - 1],
        annualized_return: ret,
        annualized_std: std,
        sharpe: sharpe(ret, std, 0.0),
        curve: Some(curve),
    })
}
