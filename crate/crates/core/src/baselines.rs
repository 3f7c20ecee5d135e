//! Comparison strategies: long-only minimum-variance allocation with periodic
//! rebalancing, and a price-weighted buy-and-hold index.
//!
//! The min-variance strategy trades fractional shares and pays no costs, so
//! every rebalance is exactly self-financing.

use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::marketdata::{daily_returns, parse_date, PriceSeries, ReturnMatrix};
use crate::metrics::{build_report, BacktestReport, ValueCurve};

pub const DEFAULT_LOOKBACK: usize = 252;
pub const DEFAULT_REBALANCE_EVERY: usize = 21;
pub const DEFAULT_RIDGE: f64 = 1e-8;

pub const MIN_VARIANCE_STRATEGY: &str = "Min-Variance";
pub const INDEX_STRATEGY: &str = "Index";

const MAX_ITERATIONS: usize = 10_000;
const IMPROVEMENT_TOL: f64 = 1e-12;

/// Long-only portfolio fractions summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidParameter("empty weight vector".into()));
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("weights"));
        }
        if w.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidParameter("negative weight".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("weights sum to {sum}")));
        }
        Ok(Self(w))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Dense symmetric covariance matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CovarianceMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidParameter("empty covariance matrix".into()));
        }
        let mut data = Vec::with_capacity(n * n);
        for r in &rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "covariance row",
                    expected: n,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_flat(n, data)
    }

    fn from_flat(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("covariance matrix"));
        }
        for i in 0..n {
            if data[i * n + i] < 0.0 {
                return Err(Error::InvalidParameter("negative variance".into()));
            }
            for j in 0..i {
                let (a, b) = (data[i * n + j], data[j * n + i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::InvalidParameter("covariance matrix not symmetric".into()));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// `wᵀ (Σ + ridge·I) w`
    pub fn quadratic_form(&self, w: &[f64], ridge: f64) -> f64 {
        let mut acc = 0.0;
        for (i, wi) in w.iter().enumerate() {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            let s: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
            acc += wi * (s + ridge * wi);
        }
        acc
    }

    fn mul_vec(&self, w: &[f64], ridge: f64) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let row = &self.data[i * self.n..(i + 1) * self.n];
                row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + ridge * w[i]
            })
            .collect()
    }

    /// An upper bound on the largest eigenvalue of `Σ + ridge·I`.
    fn spectral_bound(&self, ridge: f64) -> f64 {
        let gershgorin = (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let frobenius = self.data.iter().map(|x| x * x).sum::<f64>().sqrt();
        gershgorin.min(frobenius) + ridge
    }
}

/// Unbiased sample covariance of the last `window` return rows.
pub fn sample_covariance(returns: &ReturnMatrix, window: usize) -> Result<CovarianceMatrix> {
    if window < 2 {
        return Err(Error::InvalidParameter(format!("covariance window {window} < 2")));
    }
    let rows = returns.n_rows();
    if rows < window {
        return Err(Error::Insufficient(format!(
            "covariance window {window} but only {rows} return rows"
        )));
    }
    let d = returns.n_assets();
    let start = rows - window;
    let mut mean = vec![0.0; d];
    for t in start..rows {
        for (m, r) in mean.iter_mut().zip(returns.row(t)) {
            *m += r;
        }
    }
    mean.iter_mut().for_each(|m| *m /= window as f64);
    let mut data = vec![0.0; d * d];
    for t in start..rows {
        let r = returns.row(t);
        for i in 0..d {
            let di = r[i] - mean[i];
            for j in 0..=i {
                data[i * d + j] += di * (r[j] - mean[j]);
            }
        }
    }
    let div = (window - 1) as f64;
    for i in 0..d {
        for j in 0..=i {
            let v = data[i * d + j] / div;
            data[i * d + j] = v;
            data[j * d + i] = v;
        }
    }
    CovarianceMatrix::from_flat(d, data)
}

/// Euclidean projection onto `{w : w ≥ 0, Σw = 1}` by the sort-and-threshold rule.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    // Absorb rounding so the sum is 1 to machine precision.
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter_mut().for_each(|x| *x /= s);
    }
    w
}

/// Solver output with the objective after each iterate (index 0 is the start).
#[derive(Debug, Clone)]
pub struct MinVarianceTrace {
    pub weights: WeightVector,
    pub objectives: Vec<f64>,
}

/// Projected gradient descent from the uniform portfolio.
pub fn min_variance_trace(sigma: &CovarianceMatrix, ridge: f64) -> Result<MinVarianceTrace> {
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::InvalidParameter(format!("ridge {ridge}")));
    }
    let n = sigma.n();
    let mut w = vec![1.0 / n as f64; n];
    let mut f = sigma.quadratic_form(&w, ridge);
    let mut objectives = vec![f];
    let lipschitz = 2.0 * sigma.spectral_bound(ridge);
    if lipschitz > 0.0 {
        let step = 1.0 / lipschitz;
        for _ in 0..MAX_ITERATIONS {
            let g = sigma.mul_vec(&w, ridge);
            let trial: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - step * 2.0 * gi).collect();
            let next = project_simplex(&trial);
            let f_next = sigma.quadratic_form(&next, ridge);
            if !f_next.is_finite() {
                return Err(Error::NonFinite("min-variance objective"));
            }
            // Keep the better point so rounding can never raise the objective.
            let improvement = f - f_next;
            if improvement > 0.0 {
                w = next;
                f = f_next;
                objectives.push(f);
            }
            if !(improvement > IMPROVEMENT_TOL * f.abs()) {
                break;
            }
        }
    }
    Ok(MinVarianceTrace {
        weights: WeightVector::new(w)?,
        objectives,
    })
}

pub fn min_variance_weights(sigma: &CovarianceMatrix, ridge: f64) -> Result<WeightVector> {
    min_variance_trace(sigma, ridge).map(|t| t.weights)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RebalanceEvent {
    pub t: usize,
    pub weights: WeightVector,
    pub value_before: f64,
    pub value_after: f64,
}

#[derive(Debug, Clone)]
pub struct MinVarianceRun {
    pub report: BacktestReport,
    pub rebalances: Vec<RebalanceEvent>,
}

/// Min-variance backtest. The first `lookback` days only feed the covariance
/// estimate, so the value curve starts at index `lookback` with
/// `initial_balance` and rebalances every `rebalance_every` days from there.
pub fn run_min_variance(
    series: &PriceSeries,
    lookback: usize,
    rebalance_every: usize,
    ridge: f64,
    initial_balance: f64,
) -> Result<MinVarianceRun> {
    if rebalance_every == 0 {
        return Err(Error::InvalidParameter("rebalance_every must be positive".into()));
    }
    if !(initial_balance > 0.0) {
        return Err(Error::InvalidParameter("initial balance must be positive".into()));
    }
    if lookback < 2 {
        return Err(Error::InvalidParameter(format!("lookback {lookback} < 2")));
    }
    if series.len() <= lookback + 1 {
        return Err(Error::Insufficient(format!(
            "min-variance needs more than {} dates, have {}",
            lookback + 1,
            series.len()
        )));
    }
    let returns = daily_returns(series)?;
    let d = series.n_assets();
    let mut shares = vec![0.0; d];
    let mut values = Vec::with_capacity(series.len() - lookback);
    let mut rebalances = Vec::new();
    for t in lookback..series.len() {
        let prices = series.row(t);
        let marked: f64 = shares.iter().zip(prices).map(|(s, p)| s * p).sum();
        let value = if t == lookback { initial_balance } else { marked };
        if (t - lookback) % rebalance_every == 0 {
            // Returns rows 0..t end with the move into day t.
            let window = ReturnMatrix::from_rows((t - lookback..t).map(|i| returns.row(i).to_vec()).collect())?;
            let sigma = sample_covariance(&window, lookback)?;
            let weights = min_variance_weights(&sigma, ridge)?;
            for ((s, w), p) in shares.iter_mut().zip(weights.as_slice()).zip(prices) {
                *s = w * value / p;
            }
            let after: f64 = shares.iter().zip(prices).map(|(s, p)| s * p).sum();
            rebalances.push(RebalanceEvent {
                t,
                weights,
                value_before: value,
                value_after: after,
            });
            values.push(after);
        } else {
            values.push(value);
        }
    }
    let curve = ValueCurve::new(series.dates()[lookback..].to_vec(), values)?;
    Ok(MinVarianceRun {
        report: build_report(MIN_VARIANCE_STRATEGY, curve)?,
        rebalances,
    })
}

/// Externally supplied index levels.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl IndexSeries {
    fn value_on(&self, date: NaiveDate) -> Option<f64> {
        self.dates.binary_search(&date).ok().map(|i| self.values[i])
    }
}

/// Reads a `date,value` CSV with strictly increasing dates and positive values.
pub fn load_index_csv(path: impl AsRef<Path>) -> Result<IndexSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_index_csv(file)
}

pub fn read_index_csv<R: std::io::Read>(reader: R) -> Result<IndexSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::parse("index csv header", e))?.clone();
    if headers.len() != 2 || &headers[0] != "date" || &headers[1] != "value" {
        return Err(Error::parse("index csv header", "expected `date,value`"));
    }
    let mut out = IndexSeries {
        dates: Vec::new(),
        values: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse("index csv", e))?;
        let date = parse_date(&rec[0])?;
        let value: f64 = rec[1].parse().map_err(|e| Error::parse("index value", e))?;
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::parse("index value", format!("{value} on {date}")));
        }
        if out.dates.last().is_some_and(|&last| last >= date) {
            return Err(Error::parse("index csv", format!("dates not increasing at {date}")));
        }
        out.dates.push(date);
        out.values.push(value);
    }
    Ok(out)
}

/// Index buy-and-hold: the external series rescaled to `initial_balance`, or
/// the price-weighted sum of the universe when none is given.
pub fn run_index(series: &PriceSeries, initial_balance: f64, external: Option<&IndexSeries>) -> Result<BacktestReport> {
    if series.is_empty() {
        return Err(Error::TooFewDates { needed: 1, have: 0 });
    }
    let levels: Vec<f64> = match external {
        Some(index) => series
            .dates()
            .iter()
            .map(|&d| {
                index
                    .value_on(d)
                    .ok_or_else(|| Error::InvalidSeries(format!("index has no value on {d}")))
            })
            .collect::<Result<_>>()?,
        None => series.rows().map(|r| r.iter().sum()).collect(),
    };
    let values = levels.iter().map(|l| initial_balance * l / levels[0]).collect();
    build_report(INDEX_STRATEGY, ValueCurve::new(series.dates().to_vec(), values)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(rows: Vec<Vec<f64>>) -> PriceSeries {
        let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        let n = rows[0].len();
        PriceSeries::new(
            start.iter_days().take(rows.len()).collect(),
            (0..n).map(|i| format!("S{i}")).collect(),
            rows,
        )
        .unwrap()
    }

    #[test]
    fn covariance_hand_example() {
        let r = ReturnMatrix::from_rows(vec![vec![0.01, -0.01], vec![-0.01, 0.01]]).unwrap();
        let s = sample_covariance(&r, 2).unwrap();
        assert!((s.get(0, 0) - 2e-4).abs() < 1e-18);
        assert!((s.get(1, 1) - 2e-4).abs() < 1e-18);
        assert!((s.get(0, 1) + 2e-4).abs() < 1e-18);
    }

    #[test]
    fn covariance_degenerate_cases() {
        let same = ReturnMatrix::from_rows(vec![vec![0.01, 0.01], vec![0.03, 0.03], vec![-0.02, -0.02]]).unwrap();
        let s = sample_covariance(&same, 3).unwrap();
        let v = s.get(0, 0);
        assert!(v > 0.0);
        assert!([s.get(0, 1), s.get(1, 0), s.get(1, 1)].iter().all(|x| (x - v).abs() < 1e-18));

        let flat = ReturnMatrix::from_rows(vec![vec![0.01, 0.02]; 4]).unwrap();
        let z = sample_covariance(&flat, 4).unwrap();
        assert!((0..2).all(|i| (0..2).all(|j| z.get(i, j).abs() < 1e-18)));

        assert!(sample_covariance(&flat, 5).is_err());
        assert!(sample_covariance(&flat, 1).is_err());
    }

    #[test]
    fn trailing_window_only() {
        let r = ReturnMatrix::from_rows(vec![vec![5.0], vec![-5.0], vec![0.01], vec![0.01]]).unwrap();
        assert_eq!(sample_covariance(&r, 2).unwrap().get(0, 0), 0.0);
    }

    #[test]
    fn projection_cases() {
        assert_eq!(project_simplex(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
        assert_eq!(project_simplex(&[5.0, 0.0]), vec![1.0, 0.0]);
        let w = project_simplex(&[0.0, 0.0, 0.0]);
        assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        let w = project_simplex(&[1.0, 1.0, -3.0]);
        assert_eq!(w, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn diagonal_closed_form() {
        let s = CovarianceMatrix::new(vec![vec![0.04, 0.0], vec![0.0, 0.01]]).unwrap();
        let w = min_variance_weights(&s, 0.0).unwrap();
        assert!((w.as_slice()[0] - 0.2).abs() < 1e-6, "{w:?}");
        assert!((w.as_slice()[1] - 0.8).abs() < 1e-6);
        // The objective is flat near the optimum, so it converges much tighter.
        assert!((s.quadratic_form(w.as_slice(), 0.0) - 0.008).abs() < 1e-14);
    }

    #[test]
    fn identical_assets_stay_uniform() {
        let s = CovarianceMatrix::new(vec![vec![0.02; 3]; 3]).unwrap();
        let w = min_variance_weights(&s, 0.0).unwrap();
        assert!(w.as_slice().iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(CovarianceMatrix::new(vec![vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
        assert!(CovarianceMatrix::new(vec![vec![-1.0]]).is_err());
        assert!(matches!(
            CovarianceMatrix::new(vec![vec![f64::NAN]]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn single_asset_is_buy_and_hold() {
        let rows: Vec<Vec<f64>> = (0..30).map(|t| vec![10.0 + (t as f64 * 0.7).sin()]).collect();
        let s = series(rows.clone());
        let run = run_min_variance(&s, 5, 3, 1e-8, 1000.0).unwrap();
        let values = run.report.curve().values();
        for (k, v) in values.iter().enumerate() {
            let expected = 1000.0 * rows[5 + k][0] / rows[5][0];
            assert!((v - expected).abs() < 1e-9 * expected);
        }
        assert!(run.rebalances.iter().all(|e| e.weights.as_slice() == [1.0]));
    }

    #[test]
    fn constant_prices_flat_curve() {
        let s = series(vec![vec![10.0, 20.0, 5.0]; 40]);
        let run = run_min_variance(&s, 10, 5, 1e-8, 10_000.0).unwrap();
        assert!(run.report.curve().values().iter().all(|v| (v - 10_000.0).abs() < 1e-9));
        assert_eq!(run.report.annualized_return, 0.0);
        assert_eq!(run.rebalances.len(), 6);
    }

    #[test]
    fn zero_variance_asset_takes_everything() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|t| vec![10.0 * (1.0 + 0.05 * if t % 2 == 0 { 1.0 } else { -1.0 }), 7.0])
            .collect();
        let s = series(rows);
        let run = run_min_variance(&s, 10, 100, 1e-8, 500.0).unwrap();
        let w = run.rebalances[0].weights.as_slice();
        assert!(w[0] < 1e-6 && w[1] > 1.0 - 1e-6, "{w:?}");
        let v = run.report.curve().values();
        assert!(v.iter().all(|x| (x - 500.0).abs() < 1e-3));
    }

    #[test]
    fn rebalances_are_self_financing() {
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|t| {
                let t = t as f64;
                vec![10.0 + (t * 0.3).sin(), 20.0 + (t * 0.17).cos() * 2.0, 5.0 + t * 0.01]
            })
            .collect();
        let run = run_min_variance(&series(rows), 20, 7, 1e-8, 1000.0).unwrap();
        for e in &run.rebalances {
            assert!((e.value_after - e.value_before).abs() <= 1e-9 * e.value_before);
        }
        assert_eq!(run.report.curve().len(), 60);
        assert_eq!(run.report.initial_value, 1000.0);
    }

    #[test]
    fn too_short_series() {
        let s = series(vec![vec![1.0]; 6]);
        assert!(matches!(run_min_variance(&s, 5, 1, 0.0, 1.0), Err(Error::Insufficient(_))));
    }

    #[test]
    fn price_weighted_index() {
        let s = series(vec![vec![10.0, 30.0], vec![15.0, 30.0], vec![20.0, 30.0]]);
        let r = run_index(&s, 1000.0, None).unwrap();
        assert!((r.final_value - 1250.0).abs() < 1e-9);
        let flat = run_index(&series(vec![vec![3.0, 4.0]; 5]), 7.0, None).unwrap();
        assert!(flat.curve().values().iter().all(|v| *v == 7.0));
        let double = run_index(&series(vec![vec![1.0], vec![1.5], vec![2.0]]), 10.0, None).unwrap();
        assert_eq!(double.final_value, 20.0);
    }

    #[test]
    fn external_index_alignment() {
        let s = series(vec![vec![1.0]; 3]);
        let csv = "date,value\n2020-12-31,50\n2021-01-01,100\n2021-01-02,110\n2021-01-03,90\n2021-01-04,1\n";
        let idx = read_index_csv(csv.as_bytes()).unwrap();
        let r = run_index(&s, 1000.0, Some(&idx)).unwrap();
        assert_eq!(r.curve().values(), &[1000.0, 1100.0, 900.0]);

        let gap = read_index_csv("date,value\n2021-01-01,100\n2021-01-03,90\n".as_bytes()).unwrap();
        assert!(matches!(run_index(&s, 1000.0, Some(&gap)), Err(Error::InvalidSeries(_))));
        assert!(read_index_csv("d,v\n".as_bytes()).is_err());
        assert!(read_index_csv("date,value\n2021-01-02,1\n2021-01-01,1\n".as_bytes()).is_err());
    }
}
