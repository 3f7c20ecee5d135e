//! Run configuration: one flat TOML document, with command-line flags
//! overriding individual keys.
//!
//! ```toml
//! data = "prices.csv"            # or the synth_* keys below
//! universe = ["AAPL", "MSFT"]
//! train_end = "2014-12-31"       # required
//! validation_end = "2016-01-01"  # required
//! seed = 7                       # required
//! initial_balance = 10000.0
//! episodes = 30
//! online_learning = false
//! validation_mode = "continue"   # continue | union | none
//! lookback = 252
//! rebalance_every = 21
//! ridge = 1e-8
//! out = "out"
//! ```

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::baselines::{DEFAULT_LOOKBACK, DEFAULT_REBALANCE_EVERY, DEFAULT_RIDGE};
use crate::ddpg::DdpgConfig;
use crate::error::{Error, Result};
use crate::marketdata::{GeneratorKind, SyntheticSpec, TickerParams};

/// How the validation period is used when training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ValidationMode {
    /// Train on the training period, then keep training the same agent on
    /// the validation period.
    #[default]
    Continue,
    /// Train from scratch on training and validation joined together.
    Union,
    /// Ignore the validation period.
    None,
}

fn default_balance() -> f64 {
    10_000.0
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_synth_kind() -> String {
    "trend".into()
}
fn default_synth_days() -> usize {
    500
}
fn default_synth_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 1).unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub universe: Option<Vec<String>>,
    /// Optional external index (`date,value`) replacing the price-weighted proxy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<PathBuf>,

    #[serde(default = "default_synth_kind")]
    pub synth_kind: String,
    #[serde(default = "default_synth_days")]
    pub synth_days: usize,
    #[serde(default = "default_synth_start")]
    pub synth_start: NaiveDate,
    #[serde(default)]
    pub synth_p0: Vec<f64>,
    #[serde(default)]
    pub synth_drift: Vec<f64>,
    #[serde(default)]
    pub synth_vol: Vec<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_end: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_end: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_balance")]
    pub initial_balance: f64,

    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub episodes: usize,
    pub buffer_capacity: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub h_max: u32,
    pub warmup: usize,
    pub noise_theta: f64,
    pub noise_sigma: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub normalize_rewards: bool,

    pub lookback: usize,
    pub rebalance_every: usize,
    pub ridge: f64,

    #[serde(default)]
    pub online_learning: bool,
    #[serde(default)]
    pub validation_mode: ValidationMode,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DdpgConfig::default();
        Self {
            data: None,
            universe: None,
            index: None,
            synth_kind: default_synth_kind(),
            synth_days: default_synth_days(),
            synth_start: default_synth_start(),
            synth_p0: Vec::new(),
            synth_drift: Vec::new(),
            synth_vol: Vec::new(),
            train_end: None,
            validation_end: None,
            seed: None,
            initial_balance: default_balance(),
            gamma: d.gamma,
            tau: d.tau,
            batch_size: d.batch_size,
            episodes: d.episodes,
            buffer_capacity: d.buffer_capacity,
            actor_lr: d.actor_lr,
            critic_lr: d.critic_lr,
            h_max: d.h_max,
            warmup: d.warmup,
            noise_theta: d.noise_theta,
            noise_sigma: d.noise_sigma,
            actor_hidden: d.actor_hidden,
            critic_hidden: d.critic_hidden,
            normalize_rewards: d.normalize_rewards,
            lookback: DEFAULT_LOOKBACK,
            rebalance_every: DEFAULT_REBALANCE_EVERY,
            ridge: DEFAULT_RIDGE,
            online_learning: false,
            validation_mode: ValidationMode::default(),
            out: default_out(),
        }
    }
}

impl RunConfig {
    /// Parses TOML; absent keys take their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let defaults = toml::Value::try_from(RunConfig::default()).map_err(|e| Error::Config(e.to_string()))?;
        let toml::Value::Table(mut merged) = defaults else {
            unreachable!("config serializes to a table")
        };
        merged.extend(user);
        toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative paths inside a config file are relative to that file.
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.data, &mut cfg.index].into_iter().flatten() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("`seed` must be set explicitly".into()))
    }

    pub fn split_dates(&self) -> Result<(NaiveDate, NaiveDate)> {
        match (self.train_end, self.validation_end) {
            (Some(a), Some(b)) if a < b => Ok((a, b)),
            (Some(a), Some(b)) => Err(Error::Config(format!(
                "train_end {a} must precede validation_end {b}"
            ))),
            _ => Err(Error::Config(
                "`train_end` and `validation_end` must be set explicitly".into(),
            )),
        }
    }

    pub fn ddpg(&self) -> Result<DdpgConfig> {
        let cfg = DdpgConfig {
            gamma: self.gamma,
            tau: self.tau,
            batch_size: self.batch_size,
            episodes: self.episodes,
            buffer_capacity: self.buffer_capacity,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            h_max: self.h_max,
            warmup: self.warmup,
            noise_theta: self.noise_theta,
            noise_sigma: self.noise_sigma,
            actor_hidden: self.actor_hidden.clone(),
            critic_hidden: self.critic_hidden.clone(),
            normalize_rewards: self.normalize_rewards,
            seed: self.seed()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The synthetic generator described by the `synth_*` keys. Lists of
    /// length one are broadcast to the longest list.
    pub fn synthetic_spec(&self) -> Result<SyntheticSpec> {
        let kind: GeneratorKind = self.synth_kind.parse()?;
        let n = self.synth_p0.len().max(self.synth_drift.len()).max(self.synth_vol.len());
        if n == 0 {
            return Err(Error::Config("synthetic data needs at least one of synth_p0/synth_drift/synth_vol".into()));
        }
        let pick = |v: &[f64], name: &str, fallback: f64| -> Result<Vec<f64>> {
            match v.len() {
                0 => Ok(vec![fallback; n]),
                1 => Ok(vec![v[0]; n]),
                k if k == n => Ok(v.to_vec()),
                k => Err(Error::Config(format!("{name} has {k} entries, expected {n}"))),
            }
        };
        let p0 = pick(&self.synth_p0, "synth_p0", 100.0)?;
        let drift = pick(&self.synth_drift, "synth_drift", 0.0)?;
        let vol = pick(&self.synth_vol, "synth_vol", 0.0)?;
        Ok(SyntheticSpec {
            kind,
            days: self.synth_days,
            start: self.synth_start,
            params: (0..n)
                .map(|i| TickerParams {
                    p0: p0[i],
                    drift: drift[i],
                    volatility: vol[i],
                })
                .collect(),
        })
    }

    /// Checks everything a full train-and-compare run needs before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.ddpg()?;
        self.split_dates()?;
        if !(self.initial_balance > 0.0) || !self.initial_balance.is_finite() {
            return Err(Error::Config(format!("initial_balance {} must be positive", self.initial_balance)));
        }
        if self.lookback < 2 || self.rebalance_every == 0 {
            return Err(Error::Config("lookback must be ≥ 2 and rebalance_every ≥ 1".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::Config(format!("ridge {} must be non-negative", self.ridge)));
        }
        if self.data.is_none() {
            self.synthetic_spec()?;
        }
        Ok(())
    }
}
