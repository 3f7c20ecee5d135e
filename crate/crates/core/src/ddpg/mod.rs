//! Deep deterministic policy gradient agent for the trading MDP.
//!
//! The actor maps an observation to a continuous action in `[-1, 1]^D`; the
//! critic scores `(observation, action)` pairs. Both have slowly tracking
//! target copies used for the bootstrap target
//! `y = r + gamma * Q'(s', mu'(s'))` (just `r` on the last step of an
//! episode). Continuous actions become integer share orders through
//! [`map_action`]: `+1` buys `h_max` shares, `-1` sells `h_max`.

mod buffer;
mod noise;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use buffer::ReplayBuffer;
pub use noise::OuNoise;
pub use train::{evaluate, evaluate_frozen, train, EpisodeLog, Trainer, TrainingLog};

use crate::env::{ObservationScaler, TradeAction, Transition};
use crate::error::{Error, Result};
use crate::nn::{soft_update, Activation, AdamConfig, GradientSet, Mlp, OptimizerState, CHECKPOINT_VERSION};
use crate::rng::{derive_seed, STREAM_ACTOR_INIT, STREAM_CRITIC_INIT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdpgConfig {
    /// Discount factor.
    pub gamma: f64,
    /// Soft target update rate.
    pub tau: f64,
    /// Minibatch size N.
    pub batch_size: usize,
    /// Training episodes M.
    pub episodes: usize,
    pub buffer_capacity: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Largest number of shares traded per stock per step.
    pub h_max: u32,
    /// Environment steps collected before the first gradient update.
    pub warmup: usize,
    pub noise_theta: f64,
    pub noise_sigma: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Store rewards in units of the initial balance instead of currency.
    pub normalize_rewards: bool,
    pub seed: u64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.001,
            batch_size: 64,
            episodes: 30,
            buffer_capacity: 100_000,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            h_max: 100,
            warmup: 1000,
            noise_theta: 0.15,
            noise_sigma: 0.2,
            actor_hidden: vec![64, 32],
            critic_hidden: vec![64, 32],
            normalize_rewards: true,
            seed: 0,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.buffer_capacity < self.batch_size {
            return bad("buffer_capacity must be >= batch_size".into());
        }
        if self.h_max == 0 {
            return bad("h_max must be >= 1".into());
        }
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {lr}"));
            }
        }
        if !(self.noise_theta >= 0.0 && self.noise_sigma >= 0.0) {
            return bad("noise parameters must be >= 0".into());
        }
        if self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return bad("hidden widths must be >= 1".into());
        }
        Ok(())
    }
}

/// `a[d] = round(-continuous[d] * h_max)`, half away from zero. Positive
/// continuous values buy, i.e. become negative entries under the
/// environment's positive-sells convention.
pub fn map_action(continuous: &[f64], h_max: u32) -> TradeAction {
    let h = f64::from(h_max);
    TradeAction(
        continuous
            .iter()
            .map(|c| (-c.clamp(-1.0, 1.0) * h).round() as i64)
            .collect(),
    )
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

/// Actor, critic, their targets and optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub config: DdpgConfig,
    pub scaler: ObservationScaler,
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    pub actor_opt: OptimizerState,
    pub critic_opt: OptimizerState,
}

impl Agent {
    /// Randomly initialized networks, targets copied from them.
    pub fn new(config: DdpgConfig, scaler: ObservationScaler) -> Result<Self> {
        config.validate()?;
        let d = scaler.n_assets();
        let obs = scaler.obs_dim();
        let mut actor_sizes = vec![obs];
        actor_sizes.extend(&config.actor_hidden);
        actor_sizes.push(d);
        let mut critic_sizes = vec![obs + d];
        critic_sizes.extend(&config.critic_hidden);
        critic_sizes.push(1);
        let actor = Mlp::init(
            &actor_sizes,
            Activation::Relu,
            Activation::Tanh,
            derive_seed(config.seed, STREAM_ACTOR_INIT),
        )?;
        let critic = Mlp::init(
            &critic_sizes,
            Activation::Relu,
            Activation::Identity,
            derive_seed(config.seed, STREAM_CRITIC_INIT),
        )?;
        Self::from_networks(config, scaler, actor, critic)
    }

    /// Wraps hand-built networks; targets start as exact copies.
    pub fn from_networks(config: DdpgConfig, scaler: ObservationScaler, actor: Mlp, critic: Mlp) -> Result<Self> {
        let d = scaler.n_assets();
        let obs = scaler.obs_dim();
        if actor.input_dim() != obs || actor.output_dim() != d {
            return Err(Error::DimensionMismatch {
                context: "actor shape",
                expected: obs,
                got: actor.input_dim(),
            });
        }
        if critic.input_dim() != obs + d || critic.output_dim() != 1 {
            return Err(Error::DimensionMismatch {
                context: "critic shape",
                expected: obs + d,
                got: critic.input_dim(),
            });
        }
        let actor_opt = OptimizerState::new(&actor, AdamConfig::with_learning_rate(config.actor_lr));
        let critic_opt = OptimizerState::new(&critic, AdamConfig::with_learning_rate(config.critic_lr));
        Ok(Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            actor_opt,
            critic_opt,
            config,
            scaler,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.scaler.n_assets()
    }

    pub fn obs_dim(&self) -> usize {
        self.scaler.obs_dim()
    }

    /// `mu(obs) + noise`, clamped to `[-1, 1]`.
    pub fn select_action(&self, obs: &[f64], noise: Option<&mut OuNoise>) -> Result<Vec<f64>> {
        let mut a = self.actor.predict(obs)?;
        if let Some(n) = noise {
            let eps = n.step();
            if eps.len() != a.len() {
                return Err(Error::DimensionMismatch {
                    context: "noise width",
                    expected: a.len(),
                    got: eps.len(),
                });
            }
            a.iter_mut().zip(eps).for_each(|(x, e)| *x += e);
        }
        a.iter_mut().for_each(|x| *x = x.clamp(-1.0, 1.0));
        Ok(a)
    }

    fn q(&self, net: &Mlp, obs: &[f64], action: &[f64]) -> Result<f64> {
        Ok(net.predict(&concat(obs, action))?[0])
    }

    /// Bootstrap targets `y_i` for a batch, from the target networks.
    pub fn critic_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        batch
            .iter()
            .map(|tr| {
                if tr.terminal {
                    return Ok(tr.reward);
                }
                let next_action = self.target_actor.predict(&tr.next_obs)?;
                let q_next = self.q(&self.target_critic, &tr.next_obs, &next_action)?;
                Ok(tr.reward + self.config.gamma * q_next)
            })
            .collect()
    }

    /// `L = (1/N) sum (y_i - Q(s_i, a_i))^2`
    pub fn critic_loss(&self, batch: &[&Transition]) -> Result<f64> {
        let y = self.critic_targets(batch)?;
        let mut loss = 0.0;
        for (tr, yi) in batch.iter().zip(y) {
            let q = self.q(&self.critic, &tr.obs, &tr.action)?;
            loss += (yi - q).powi(2);
        }
        Ok(loss / batch.len() as f64)
    }

    /// Loss and its gradient with respect to the critic parameters; targets are constants.
    pub fn critic_gradient(&self, batch: &[&Transition]) -> Result<(f64, GradientSet)> {
        check_batch(batch)?;
        let y = self.critic_targets(batch)?;
        let n = batch.len() as f64;
        let mut grads = GradientSet::zeros_like(&self.critic);
        let mut loss = 0.0;
        for (tr, yi) in batch.iter().zip(y) {
            let (out, tape) = self.critic.forward(&concat(&tr.obs, &tr.action))?;
            let err = out[0] - yi;
            loss += err * err;
            self.critic.backward_accumulate(&tape, &[2.0 * err / n], &mut grads.layers)?;
        }
        let loss = loss / n;
        if !loss.is_finite() {
            return Err(Error::NonFinite("critic loss"));
        }
        Ok((loss, grads))
    }

    /// One optimizer step on the critic loss; returns the loss before the step.
    pub fn critic_update(&mut self, batch: &[&Transition]) -> Result<f64> {
        let (loss, grads) = self.critic_gradient(batch)?;
        self.critic_opt.step(&mut self.critic, &grads.layers)?;
        Ok(loss)
    }

    /// `J = (1/N) sum Q(s_i, mu(s_i))`
    pub fn actor_objective(&self, batch: &[&Transition]) -> Result<f64> {
        let mut j = 0.0;
        for tr in batch {
            let a = self.actor.predict(&tr.obs)?;
            j += self.q(&self.critic, &tr.obs, &a)?;
        }
        Ok(j / batch.len() as f64)
    }

    /// `J` and `dJ/dtheta_mu = (1/N) sum dQ/da * dmu/dtheta_mu`.
    pub fn actor_gradient(&self, batch: &[&Transition]) -> Result<(f64, GradientSet)> {
        check_batch(batch)?;
        let n = batch.len() as f64;
        let d = self.n_assets();
        let mut grads = GradientSet::zeros_like(&self.actor);
        let mut scratch = GradientSet::zeros_like(&self.critic);
        let mut j = 0.0;
        for tr in batch {
            let (action, actor_tape) = self.actor.forward(&tr.obs)?;
            let (q, critic_tape) = self.critic.forward(&concat(&tr.obs, &action))?;
            j += q[0];
            // only the input gradient of the critic is used here
            let input_grad = self.critic.backward_accumulate(&critic_tape, &[1.0 / n], &mut scratch.layers)?;
            let dq_da = &input_grad[input_grad.len() - d..];
            self.actor.backward_accumulate(&actor_tape, dq_da, &mut grads.layers)?;
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("actor gradient"));
        }
        Ok((j / n, grads))
    }

    /// One ascent step on `J` (a descent step on `-J`); returns `J` before the step.
    pub fn actor_update(&mut self, batch: &[&Transition]) -> Result<f64> {
        let (j, mut grads) = self.actor_gradient(batch)?;
        grads.scale(-1.0);
        self.actor_opt.step(&mut self.actor, &grads.layers)?;
        Ok(j)
    }

    pub fn update_targets(&mut self) -> Result<()> {
        soft_update(&mut self.target_critic, &self.critic, self.config.tau)?;
        soft_update(&mut self.target_actor, &self.actor, self.config.tau)
    }

    fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let check = Agent::from_networks(
            self.config.clone(),
            self.scaler.clone(),
            self.actor.clone(),
            self.critic.clone(),
        )?;
        if !check.actor.same_architecture(&self.target_actor) || !check.critic.same_architecture(&self.target_critic) {
            return Err(Error::Checkpoint("target networks differ from their sources".into()));
        }
        if !self.actor_opt.matches(&self.actor) || !self.critic_opt.matches(&self.critic) {
            return Err(Error::Checkpoint("optimizer state does not match its network".into()));
        }
        Ok(())
    }

    pub fn to_checkpoint_json(&self) -> Result<String> {
        let doc = AgentCheckpointRef {
            format: AGENT_FORMAT,
            version: CHECKPOINT_VERSION,
            agent: self,
        };
        serde_json::to_string(&doc).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let doc: AgentCheckpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if doc.format != AGENT_FORMAT || doc.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported agent checkpoint {} v{}",
                doc.format, doc.version
            )));
        }
        doc.agent.validate()?;
        Ok(doc.agent)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_json(&text)
    }
}

fn check_batch(batch: &[&Transition]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Insufficient("empty minibatch".into()));
    }
    Ok(())
}

const AGENT_FORMAT: &str = "ddpg-agent";

#[derive(Serialize)]
struct AgentCheckpointRef<'a> {
    format: &'a str,
    version: u32,
    agent: &'a Agent,
}

#[derive(Deserialize)]
struct AgentCheckpoint {
    format: String,
    version: u32,
    agent: Agent,
}
