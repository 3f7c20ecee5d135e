//! The stock-trading MDP.
//!
//! State is `s = [p, h, b]`: prices, integer holdings and cash. A
//! [`TradeAction`] keeps the sign convention of the balance update
//! `b' = b + p^T a`: a **positive** entry **sells** that many shares, a
//! negative entry buys, zero holds. The reward of a step is the change in
//! portfolio value `p^T h + b`.
//!
//! Orders are never rejected: [`clip_to_feasible`] first clamps sells to the
//! current holdings, then fills buys in ascending stock order with whatever
//! cash the sells left available. No transaction costs, no short selling.

use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::{PriceSeries, DATE_FORMAT};

/// Integer share orders, positive = sell, negative = buy.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TradeAction(pub Vec<i64>);

impl TradeAction {
    pub fn hold(n_assets: usize) -> Self {
        Self(vec![0; n_assets])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn shares(&self) -> &[i64] {
        &self.0
    }
}

/// One step of experience: observation, the continuous action the agent
/// emitted (before integer mapping and clipping), reward, next observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// Last step of the episode; its target does not bootstrap.
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioState {
    /// Row index into the price series.
    pub t: usize,
    pub prices: Vec<f64>,
    pub holdings: Vec<u64>,
    pub balance: f64,
}

impl PortfolioState {
    pub fn n_assets(&self) -> usize {
        self.prices.len()
    }

    /// `p^T h + b`
    pub fn value(&self) -> f64 {
        portfolio_value(self)
    }
}

pub fn reset(series: &PriceSeries, initial_balance: f64) -> Result<PortfolioState> {
    if !(initial_balance >= 0.0 && initial_balance.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "initial balance must be finite and >= 0, got {initial_balance}"
        )));
    }
    if series.is_empty() {
        return Err(Error::TooFewDates { needed: 1, have: 0 });
    }
    Ok(PortfolioState {
        t: 0,
        prices: series.row(0).to_vec(),
        holdings: vec![0; series.n_assets()],
        balance: initial_balance,
    })
}

pub fn portfolio_value(state: &PortfolioState) -> f64 {
    state
        .prices
        .iter()
        .zip(&state.holdings)
        .fold(0.0, |acc, (p, &h)| acc + p * h as f64)
        + state.balance
}

/// Cash after executing `action`: sells credited first, then buys debited in
/// ascending index order. [`clip_to_feasible`] walks the same sequence, so a
/// clipped action always settles to a non-negative balance.
fn settle(prices: &[f64], balance: f64, action: &[i64]) -> f64 {
    let mut cash = balance;
    for (p, &a) in prices.iter().zip(action) {
        if a > 0 {
            cash += p * a as f64;
        }
    }
    for (p, &a) in prices.iter().zip(action) {
        if a < 0 {
            cash -= p * (-a) as f64;
        }
    }
    cash
}

/// Projects a requested order onto the feasible set of `state`.
///
/// # Panics
/// If `requested` does not have one entry per stock.
pub fn clip_to_feasible(state: &PortfolioState, requested: &TradeAction) -> TradeAction {
    assert_eq!(
        requested.len(),
        state.n_assets(),
        "trade action width must match the number of stocks"
    );
    let mut out: Vec<i64> = requested
        .0
        .iter()
        .zip(&state.holdings)
        .map(|(&a, &h)| if a > 0 { a.min(h as i64) } else { a })
        .collect();

    let mut cash = state.balance;
    for (p, &a) in state.prices.iter().zip(&out) {
        if a > 0 {
            cash += p * a as f64;
        }
    }
    for (p, a) in state.prices.iter().zip(out.iter_mut()) {
        if *a >= 0 {
            continue;
        }
        let wanted = -*a;
        let affordable = if cash > 0.0 { (cash / p).floor() } else { 0.0 };
        let mut k = if affordable < wanted as f64 {
            affordable as i64
        } else {
            wanted
        };
        while k > 0 && p * k as f64 > cash {
            k -= 1;
        }
        *a = -k;
        if k > 0 {
            cash -= p * k as f64;
        }
    }
    TradeAction(out)
}

/// Executes a feasible action and moves to `next_prices`.
///
/// Returns the next state and the reward, i.e. the portfolio-value change.
pub fn step(state: &PortfolioState, action: &TradeAction, next_prices: &[f64]) -> Result<(PortfolioState, f64)> {
    let d = state.n_assets();
    if action.len() != d {
        return Err(Error::DimensionMismatch {
            context: "trade action",
            expected: d,
            got: action.len(),
        });
    }
    if next_prices.len() != d {
        return Err(Error::DimensionMismatch {
            context: "next prices",
            expected: d,
            got: next_prices.len(),
        });
    }
    if next_prices.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::InvalidParameter("next prices must be finite and positive".into()));
    }
    let mut holdings = Vec::with_capacity(d);
    for (i, (&h, &a)) in state.holdings.iter().zip(&action.0).enumerate() {
        let next = h as i64 - a;
        if next < 0 {
            return Err(Error::InfeasibleAction(format!(
                "sells {a} shares of stock {i} but holds {h}"
            )));
        }
        holdings.push(next as u64);
    }
    let balance = settle(&state.prices, state.balance, &action.0);
    if balance < 0.0 {
        return Err(Error::InfeasibleAction(format!("balance would become {balance}")));
    }
    let next = PortfolioState {
        t: state.t + 1,
        prices: next_prices.to_vec(),
        holdings,
        balance,
    };
    let reward = portfolio_value(&next) - portfolio_value(state);
    Ok((next, reward))
}

/// Affine scaling of `[p, h, b]` into the network input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationScaler {
    pub price_scale: Vec<f64>,
    pub holdings_scale: f64,
    pub balance_scale: f64,
}

impl ObservationScaler {
    pub fn identity(n_assets: usize) -> Self {
        Self {
            price_scale: vec![1.0; n_assets],
            holdings_scale: 1.0,
            balance_scale: 1.0,
        }
    }

    /// Prices relative to `reference_prices` (the first training day), holdings
    /// in units of `h_max`, cash in units of the initial balance.
    pub fn fit(reference_prices: &[f64], h_max: u32, initial_balance: f64) -> Self {
        Self {
            price_scale: reference_prices.to_vec(),
            holdings_scale: f64::from(h_max.max(1)),
            balance_scale: if initial_balance > 0.0 { initial_balance } else { 1.0 },
        }
    }

    pub fn n_assets(&self) -> usize {
        self.price_scale.len()
    }

    pub fn obs_dim(&self) -> usize {
        2 * self.n_assets() + 1
    }
}

/// Network input for `state`: `2D + 1` entries.
pub fn observe(state: &PortfolioState, scaler: &ObservationScaler) -> Result<Vec<f64>> {
    let d = state.n_assets();
    if scaler.n_assets() != d {
        return Err(Error::DimensionMismatch {
            context: "observation scaler",
            expected: scaler.n_assets(),
            got: d,
        });
    }
    let mut obs = Vec::with_capacity(2 * d + 1);
    obs.extend(state.prices.iter().zip(&scaler.price_scale).map(|(p, s)| p / s));
    obs.extend(state.holdings.iter().map(|&h| h as f64 / scaler.holdings_scale));
    obs.push(state.balance / scaler.balance_scale);
    Ok(obs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeRecord {
    pub t: usize,
    pub date: NaiveDate,
    pub ticker: String,
    /// Change in shares held (positive = bought).
    pub shares_delta: i64,
    pub price: f64,
    pub balance_after: f64,
}

/// Audit trail of executed trades.
#[derive(Debug, Clone, Default)]
pub struct TradeLog {
    pub records: Vec<TradeRecord>,
}

impl TradeLog {
    pub fn record(&mut self, series: &PriceSeries, before: &PortfolioState, action: &TradeAction, balance_after: f64) {
        for (d, &a) in action.0.iter().enumerate() {
            if a != 0 {
                self.records.push(TradeRecord {
                    t: before.t,
                    date: series.date(before.t),
                    ticker: series.tickers()[d].clone(),
                    shares_delta: -a,
                    price: before.prices[d],
                    balance_after,
                });
            }
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,date,ticker,shares_delta,price,balance_after")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.t,
                r.date.format(DATE_FORMAT),
                r.ticker,
                r.shares_delta,
                r.price,
                r.balance_after
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}
