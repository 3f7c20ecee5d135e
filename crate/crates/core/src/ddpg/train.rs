use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use super::{map_action, Agent, DdpgConfig, OuNoise, ReplayBuffer};
use crate::env::{clip_to_feasible, observe, reset, step, ObservationScaler, TradeLog, Transition};
use crate::error::{Error, Result};
use crate::marketdata::PriceSeries;
use crate::metrics::{build_report, BacktestReport, ValueCurve};
use crate::rng::{component_rng, derive_seed, STREAM_NOISE_BASE, STREAM_ONLINE_REPLAY, STREAM_REPLAY};

pub const DDPG_STRATEGY: &str = "DDPG";

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub final_value: f64,
    pub mean_critic_loss: Option<f64>,
    pub mean_actor_objective: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
}

impl TrainingLog {
    pub fn extend(&mut self, other: TrainingLog) {
        self.episodes.extend(other.episodes);
    }

    /// `episode,final_value,mean_critic_loss,mean_actor_objective`; episodes
    /// without gradient updates leave the loss columns empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "episode,final_value,mean_critic_loss,mean_actor_objective")?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for e in &self.episodes {
            writeln!(
                w,
                "{},{},{},{}",
                e.episode,
                e.final_value,
                opt(e.mean_critic_loss),
                opt(e.mean_actor_objective)
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

struct Learner<'a> {
    buffer: &'a mut ReplayBuffer,
    rng: &'a mut ChaCha8Rng,
    warmup: usize,
    steps: &'a mut usize,
}

#[derive(Default)]
struct Rollout {
    values: Vec<f64>,
    critic_losses: Vec<f64>,
    actor_objectives: Vec<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Runs the policy once over `series`, optionally exploring, learning, and logging trades.
fn rollout(
    agent: &mut Agent,
    series: &PriceSeries,
    initial_balance: f64,
    mut noise: Option<&mut OuNoise>,
    mut learner: Option<Learner<'_>>,
    mut trades: Option<&mut TradeLog>,
) -> Result<Rollout> {
    if series.n_assets() != agent.n_assets() {
        return Err(Error::DimensionMismatch {
            context: "series width vs agent",
            expected: agent.n_assets(),
            got: series.n_assets(),
        });
    }
    let reward_scale = if agent.config.normalize_rewards && initial_balance > 0.0 {
        1.0 / initial_balance
    } else {
        1.0
    };
    let mut state = reset(series, initial_balance)?;
    let mut out = Rollout {
        values: vec![state.value()],
        ..Default::default()
    };
    let last = series.len() - 1;
    for t in 0..last {
        let obs = observe(&state, &agent.scaler)?;
        let action = agent.select_action(&obs, noise.as_deref_mut())?;
        let trade = clip_to_feasible(&state, &map_action(&action, agent.config.h_max));
        let (next, reward) = step(&state, &trade, series.row(t + 1))?;
        if let Some(log) = trades.as_deref_mut() {
            log.record(series, &state, &trade, next.balance);
        }
        if let Some(l) = learner.as_mut() {
            l.buffer.push(Transition {
                obs,
                action,
                reward: reward * reward_scale,
                next_obs: observe(&next, &agent.scaler)?,
                terminal: t + 1 == last,
            });
            *l.steps += 1;
            if *l.steps >= l.warmup && l.buffer.len() >= agent.config.batch_size {
                let batch = l.buffer.sample(agent.config.batch_size, l.rng)?;
                out.critic_losses.push(agent.critic_update(&batch)?);
                out.actor_objectives.push(agent.actor_update(&batch)?);
                agent.update_targets()?;
            }
        }
        out.values.push(next.value());
        state = next;
    }
    Ok(out)
}

/// Owns an agent plus the replay memory and random streams of one training run.
pub struct Trainer {
    agent: Agent,
    buffer: ReplayBuffer,
    replay_rng: ChaCha8Rng,
    total_steps: usize,
    episodes_run: usize,
}

impl Trainer {
    pub fn new(agent: Agent) -> Result<Self> {
        agent.config.validate()?;
        Ok(Self {
            buffer: ReplayBuffer::new(agent.config.buffer_capacity)?,
            replay_rng: component_rng(agent.config.seed, STREAM_REPLAY),
            total_steps: 0,
            episodes_run: 0,
            agent,
        })
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn into_agent(self) -> Agent {
        self.agent
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    /// One episode over the whole series with fresh exploration noise.
    pub fn run_episode(&mut self, series: &PriceSeries, initial_balance: f64) -> Result<EpisodeLog> {
        if series.len() < 2 {
            return Err(Error::TooFewDates {
                needed: 2,
                have: series.len(),
            });
        }
        let cfg = &self.agent.config;
        let mut noise = OuNoise::new(
            self.agent.n_assets(),
            cfg.noise_theta,
            cfg.noise_sigma,
            derive_seed(cfg.seed, STREAM_NOISE_BASE + self.episodes_run as u64),
        );
        let warmup = cfg.warmup;
        let roll = rollout(
            &mut self.agent,
            series,
            initial_balance,
            Some(&mut noise),
            Some(Learner {
                buffer: &mut self.buffer,
                rng: &mut self.replay_rng,
                warmup,
                steps: &mut self.total_steps,
            }),
            None,
        )?;
        self.episodes_run += 1;
        Ok(EpisodeLog {
            episode: self.episodes_run,
            final_value: *roll.values.last().unwrap(),
            mean_critic_loss: mean(&roll.critic_losses),
            mean_actor_objective: mean(&roll.actor_objectives),
        })
    }

    pub fn run(&mut self, series: &PriceSeries, initial_balance: f64, episodes: usize) -> Result<TrainingLog> {
        let mut log = TrainingLog::default();
        for _ in 0..episodes {
            log.episodes.push(self.run_episode(series, initial_balance)?);
        }
        Ok(log)
    }
}

/// Trains a fresh agent for `cfg.episodes` episodes over `series`.
///
/// Observations are scaled by the first day's prices, `h_max` and the
/// initial balance.
pub fn train(series: &PriceSeries, cfg: &DdpgConfig, initial_balance: f64) -> Result<(Agent, TrainingLog)> {
    if series.len() < 2 {
        return Err(Error::TooFewDates {
            needed: 2,
            have: series.len(),
        });
    }
    let scaler = ObservationScaler::fit(series.row(0), cfg.h_max, initial_balance);
    let agent = Agent::new(cfg.clone(), scaler)?;
    let mut trainer = Trainer::new(agent)?;
    let log = trainer.run(series, initial_balance, cfg.episodes)?;
    Ok((trainer.into_agent(), log))
}

/// Backtests the deterministic policy. With `online_learning` the agent keeps
/// learning from the trading days it sees, one update per step once a
/// minibatch worth of transitions has been collected.
pub fn evaluate(
    agent: &mut Agent,
    series: &PriceSeries,
    initial_balance: f64,
    online_learning: bool,
    trades: Option<&mut TradeLog>,
) -> Result<BacktestReport> {
    let roll = if online_learning {
        let mut buffer = ReplayBuffer::new(agent.config.buffer_capacity)?;
        let mut rng = component_rng(agent.config.seed, STREAM_ONLINE_REPLAY);
        let mut steps = 0;
        rollout(
            agent,
            series,
            initial_balance,
            None,
            Some(Learner {
                buffer: &mut buffer,
                rng: &mut rng,
                warmup: 0,
                steps: &mut steps,
            }),
            trades,
        )?
    } else {
        rollout(agent, series, initial_balance, None, None, trades)?
    };
    build_report(DDPG_STRATEGY, ValueCurve::new(series.dates().to_vec(), roll.values)?)
}

/// [`evaluate`] without learning, leaving `agent` untouched.
pub fn evaluate_frozen(agent: &Agent, series: &PriceSeries, initial_balance: f64) -> Result<BacktestReport> {
    let mut copy = agent.clone();
    evaluate(&mut copy, series, initial_balance, false, None)
}
