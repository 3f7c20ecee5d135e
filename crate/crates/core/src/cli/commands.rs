use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{RunConfig, ValidationMode};
use crate::baselines::{load_index_csv, run_index, run_min_variance};
use crate::ddpg::{evaluate, train, Agent, Trainer, TrainingLog};
use crate::env::{ObservationScaler, TradeLog};
use crate::error::{Error, Result};
use crate::marketdata::{load_price_table, split_periods, synthetic_series, PeriodSplit, PriceSeries};
use crate::metrics::BacktestReport;

pub const CHECKPOINT_FILE: &str = "agent.json";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const VALIDATION_REPORT_FILE: &str = "validation_report.json";
pub const COMPARISON_JSON: &str = "comparison.json";
pub const COMPARISON_TXT: &str = "comparison.txt";

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads the configured price table, or generates the synthetic market.
pub fn load_series(cfg: &RunConfig) -> Result<PriceSeries> {
    match &cfg.data {
        Some(path) => {
            let loaded = load_price_table(path, cfg.universe.as_deref())?;
            if loaded.dropped_dates > 0 {
                eprintln!("note: dropped {} dates with missing prices", loaded.dropped_dates);
            }
            Ok(loaded.series)
        }
        None => synthetic_series(&cfg.synthetic_spec()?, cfg.seed()?),
    }
}

pub fn load_split(cfg: &RunConfig) -> Result<(PriceSeries, PeriodSplit)> {
    let (train_end, validation_end) = cfg.split_dates()?;
    let series = load_series(cfg)?;
    let split = split_periods(&series, train_end, validation_end)?;
    Ok((series, split))
}

/// Writes the configured synthetic market as a wide CSV.
pub fn cmd_synth(cfg: &RunConfig, output: &Path) -> Result<()> {
    let series = synthetic_series(&cfg.synthetic_spec()?, cfg.seed()?)?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    series.save_wide_csv(output)
}

/// Trains according to the validation mode. Observation scaling is always
/// anchored on the first training day.
pub fn train_agent(cfg: &RunConfig, split: &PeriodSplit) -> Result<(Agent, TrainingLog)> {
    let ddpg = cfg.ddpg()?;
    let b0 = cfg.initial_balance;
    match cfg.validation_mode {
        ValidationMode::None => train(&split.train, &ddpg, b0),
        ValidationMode::Union => train(&split.train.concat(&split.validation)?, &ddpg, b0),
        ValidationMode::Continue => {
            let scaler = ObservationScaler::fit(split.train.row(0), ddpg.h_max, b0);
            let mut trainer = Trainer::new(Agent::new(ddpg.clone(), scaler)?)?;
            let mut log = trainer.run(&split.train, b0, ddpg.episodes)?;
            log.extend(trainer.run(&split.validation, b0, ddpg.episodes)?);
            Ok((trainer.into_agent(), log))
        }
    }
}

pub struct TrainOutput {
    pub agent: Agent,
    pub log: TrainingLog,
    pub checkpoint: PathBuf,
}

/// Trains, then writes the checkpoint, the per-episode log and a frozen
/// evaluation on the validation period.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let (_, split) = load_split(cfg)?;
    let (agent, log) = train_agent(cfg, &split)?;
    ensure_dir(&cfg.out)?;
    let checkpoint = cfg.out.join(CHECKPOINT_FILE);
    agent.save(&checkpoint)?;
    log.save(cfg.out.join(TRAINING_LOG_FILE))?;
    let mut frozen = agent.clone();
    let validation = evaluate(&mut frozen, &split.validation, cfg.initial_balance, false, None)?;
    write_text(&cfg.out.join(VALIDATION_REPORT_FILE), &validation.to_json())?;
    Ok(TrainOutput {
        agent,
        log,
        checkpoint,
    })
}

fn load_agent(path: &Path, series: &PriceSeries) -> Result<Agent> {
    let agent = Agent::load(path)?;
    if agent.n_assets() != series.n_assets() {
        return Err(Error::DimensionMismatch {
            context: "checkpoint universe size",
            expected: series.n_assets(),
            got: agent.n_assets(),
        });
    }
    Ok(agent)
}

fn ddpg_trade_report(cfg: &RunConfig, agent: &Agent, trade: &PriceSeries, trades: Option<&mut TradeLog>) -> Result<BacktestReport> {
    let mut agent = agent.clone();
    evaluate(&mut agent, trade, cfg.initial_balance, cfg.online_learning, trades)
}

fn save_report(dir: &Path, stem: &str, report: &BacktestReport) -> Result<()> {
    write_text(&dir.join(format!("{stem}_report.json")), &report.to_json())?;
    report.curve().save_csv(dir.join(format!("{stem}_curve.csv")))
}

/// Evaluates a checkpoint on the trade period.
pub fn cmd_backtest(cfg: &RunConfig, checkpoint: &Path) -> Result<BacktestReport> {
    cfg.validate()?;
    let (_, split) = load_split(cfg)?;
    let agent = load_agent(checkpoint, &split.trade)?;
    let mut trades = TradeLog::default();
    let report = ddpg_trade_report(cfg, &agent, &split.trade, Some(&mut trades))?;
    ensure_dir(&cfg.out)?;
    save_report(&cfg.out, "ddpg", &report)?;
    trades.save(cfg.out.join("trades.csv"))?;
    Ok(report)
}

/// Both baselines over the trade period. The min-variance estimator warms up
/// on the `lookback` days just before the trade period.
pub fn baseline_reports(cfg: &RunConfig, series: &PriceSeries, split: &PeriodSplit) -> Result<(BacktestReport, BacktestReport)> {
    let trade_start = series.len() - split.trade.len();
    if trade_start < cfg.lookback {
        return Err(Error::Insufficient(format!(
            "min-variance lookback {} exceeds the {trade_start} days before the trade period",
            cfg.lookback
        )));
    }
    let window = series.slice(trade_start - cfg.lookback, series.len())?;
    let min_var = run_min_variance(&window, cfg.lookback, cfg.rebalance_every, cfg.ridge, cfg.initial_balance)?.report;
    let external = cfg.index.as_ref().map(load_index_csv).transpose()?;
    let index = run_index(&split.trade, cfg.initial_balance, external.as_ref())?;
    Ok((min_var, index))
}

pub fn cmd_baseline(cfg: &RunConfig) -> Result<(BacktestReport, BacktestReport)> {
    cfg.validate()?;
    let (series, split) = load_split(cfg)?;
    let (min_var, index) = baseline_reports(cfg, &series, &split)?;
    ensure_dir(&cfg.out)?;
    save_report(&cfg.out, "min_variance", &min_var)?;
    save_report(&cfg.out, "index", &index)?;
    Ok((min_var, index))
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub initial_balance: f64,
    pub start_date: String,
    pub end_date: String,
    pub rows: Vec<BacktestReport>,
}

impl Comparison {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "trade period {} .. {}", self.start_date, self.end_date);
        let _ = writeln!(
            s,
            "{:<14} {:>14} {:>14} {:>12} {:>12} {:>8}",
            "strategy", "initial", "final", "ann.return", "ann.std", "sharpe"
        );
        for r in &self.rows {
            let sharpe = r.sharpe.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"));
            let _ = writeln!(
                s,
                "{:<14} {:>14.2} {:>14.2} {:>11.2}% {:>11.2}% {:>8}",
                r.strategy,
                r.initial_value,
                r.final_value,
                100.0 * r.annualized_return,
                100.0 * r.annualized_std,
                sharpe
            );
        }
        s
    }
}

/// DDPG against both baselines on the trade period. Without a checkpoint
/// the agent is trained first and saved alongside the comparison.
pub fn cmd_compare(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<Comparison> {
    cfg.validate()?;
    let (series, split) = load_split(cfg)?;
    let (min_var, index) = baseline_reports(cfg, &series, &split)?;
    let agent = match checkpoint {
        Some(path) => load_agent(path, &split.trade)?,
        None => {
            let (agent, log) = train_agent(cfg, &split)?;
            ensure_dir(&cfg.out)?;
            agent.save(cfg.out.join(CHECKPOINT_FILE))?;
            log.save(cfg.out.join(TRAINING_LOG_FILE))?;
            agent
        }
    };
    let ddpg = ddpg_trade_report(cfg, &agent, &split.trade, None)?;

    let comparison = Comparison {
        initial_balance: cfg.initial_balance,
        start_date: split.trade.first_date().to_string(),
        end_date: split.trade.last_date().to_string(),
        rows: vec![ddpg, min_var, index],
    };
    ensure_dir(&cfg.out)?;
    write_text(&cfg.out.join(COMPARISON_JSON), &comparison.to_json())?;
    write_text(&cfg.out.join(COMPARISON_TXT), &comparison.to_table())?;
    for (stem, r) in ["ddpg", "min_variance", "index"].iter().zip(&comparison.rows) {
        r.curve().save_csv(cfg.out.join(format!("{stem}_curve.csv")))?;
    }
    Ok(comparison)
}
