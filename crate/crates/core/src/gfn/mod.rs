//! Conditional GFlowNet trained with trajectory balance on the hypergrid.

mod buffer;
mod loss;
mod model;
mod rollout;
mod source;
mod trainer;

pub use buffer::ReplayBuffer;
pub use loss::{tb_batch, tb_loss, tb_terms, uniform_backward_logprob, BatchLoss, TbTerms};
pub use model::GfnModel;
pub use rollout::{sample_batch, sample_conditional, sample_many, sample_trajectory, ConditionalSample, Trajectory};
pub use source::CondSource;
pub use trainer::{hindsight_relabel, HindsightStats, LogRecord, Trainer};

use serde::{Deserialize, Serialize};

use crate::conditioning::{conditional_reward, Conditioning};
use crate::env::GridSpec;
use crate::error::{Error, Result};

/// Default reward floor inside the logarithm.
pub const REWARD_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Reward exponent `beta`.
    pub beta: f64,
    /// Sampler soft-update rate.
    pub tau: f64,
    /// Random-action probability.
    pub epsilon: f64,
    pub lr_pf: f64,
    pub lr_z: f64,
    pub batch_size: usize,
    pub n_steps: u64,
    /// Replay capacity in trajectories; a capacity equal to the batch size
    /// trains purely on-policy.
    pub buffer_capacity: usize,
    pub warmup_trajectories: usize,
    pub hindsight_ratio: f64,
    /// `c_g`.
    pub focus_cosine_threshold: f64,
    /// `m_g`.
    pub limit_reward_coef: f64,
    pub shaped_reward: bool,
    pub reward_floor: f64,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    /// Steps per training-log record.
    pub log_interval: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 60.0,
            tau: 0.95,
            epsilon: 0.01,
            lr_pf: 1e-4,
            lr_z: 1e-3,
            batch_size: 64,
            n_steps: 10_000,
            buffer_capacity: 100_000,
            warmup_trajectories: 1_000,
            hindsight_ratio: 0.30,
            focus_cosine_threshold: 0.98,
            limit_reward_coef: 0.20,
            shaped_reward: true,
            reward_floor: REWARD_FLOOR,
            hidden_layers: 2,
            hidden_units: 128,
            log_interval: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, msg: String| if ok { Ok(()) } else { Err(Error::config(key, msg)) };
        check(self.beta.is_finite() && self.beta >= 0.0, "train.temperature_beta", format!("{} must be finite and >= 0", self.beta))?;
        check((0.0..=1.0).contains(&self.tau), "train.sampling_tau", format!("{} not in [0, 1]", self.tau))?;
        check((0.0..=1.0).contains(&self.epsilon), "train.random_action_prob", format!("{} not in [0, 1]", self.epsilon))?;
        check(self.lr_pf > 0.0 && self.lr_pf.is_finite(), "train.lr_pf", format!("{} must be positive", self.lr_pf))?;
        check(self.lr_z > 0.0 && self.lr_z.is_finite(), "train.lr_z", format!("{} must be positive", self.lr_z))?;
        check(self.batch_size >= 1, "train.batch_size", "must be at least 1".into())?;
        check(
            self.buffer_capacity >= self.batch_size,
            "train.replay_buffer_length",
            format!("{} is smaller than the batch size {}", self.buffer_capacity, self.batch_size),
        )?;
        check((0.0..=1.0).contains(&self.hindsight_ratio), "train.hindsight_ratio", format!("{} not in [0, 1]", self.hindsight_ratio))?;
        check(
            self.focus_cosine_threshold > 0.0 && self.focus_cosine_threshold < 1.0,
            "train.focus_cosine_threshold",
            format!("{} not in (0, 1)", self.focus_cosine_threshold),
        )?;
        check(
            self.limit_reward_coef > 0.0 && self.limit_reward_coef <= 1.0,
            "train.limit_reward_coef",
            format!("{} not in (0, 1]", self.limit_reward_coef),
        )?;
        check(self.reward_floor > 0.0 && self.reward_floor < 1.0, "train.reward_floor", format!("{} not in (0, 1)", self.reward_floor))?;
        check(self.hidden_units >= 1, "train.hidden_units", "must be at least 1".into())?;
        check(self.log_interval >= 1, "train.log_interval", "must be at least 1".into())?;
        Ok(())
    }
}

/// Width of the state encoding: `D` one-hot blocks of width `H` and a done
/// flag.
pub fn state_encoding_width(grid: &GridSpec) -> usize {
    grid.dims * grid.side + 1
}

/// Appends the one-hot state encoding.
pub fn encode_state_into(grid: &GridSpec, coords: &[usize], done: bool, out: &mut [f64]) {
    debug_assert_eq!(out.len(), state_encoding_width(grid));
    out.fill(0.0);
    for (d, &c) in coords.iter().enumerate() {
        out[d * grid.side + c] = 1.0;
    }
    if done {
        out[grid.dims * grid.side] = 1.0;
    }
}

pub fn encode_state(grid: &GridSpec, coords: &[usize], done: bool) -> Vec<f64> {
    let mut out = vec![0.0; state_encoding_width(grid)];
    encode_state_into(grid, coords, done, &mut out);
    out
}

/// `beta * ln max(reward, floor)` for an already evaluated scalar reward.
pub fn log_reward_from_scalar(reward: f64, cfg: &TrainConfig) -> f64 {
    cfg.beta * reward.max(cfg.reward_floor).ln()
}

pub fn log_reward(r: &[f64], conditioning: &Conditioning, cfg: &TrainConfig) -> Result<f64> {
    Ok(log_reward_from_scalar(conditional_reward(r, conditioning, cfg.shaped_reward)?, cfg))
}
