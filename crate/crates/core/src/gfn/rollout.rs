use ndarray::{s, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::{conditional_reward, encoding_width, in_focus, Conditioning};
use crate::env::{Action, Env, GridSpec, RewardVector, State};
use crate::error::{Error, Result};
use crate::nnet::Mlp;

use super::{state_encoding_width, GfnModel};

/// Rows per forward pass when sampling large batches.
const CHUNK: usize = 1024;

/// One episode from the origin to a stopped terminal. The path is stored as
/// the sequence of incremented dimensions; the final `Stop` is implicit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub increments: Vec<u8>,
    pub terminal: Vec<usize>,
    pub conditioning: Conditioning,
    pub reward: RewardVector,
    /// Conditional reward of `reward` under `conditioning`.
    pub scalar_reward: f64,
}

impl Trajectory {
    /// Builds a trajectory from explicit actions, validating each transition.
    pub fn from_actions(
        env: &Env,
        actions: &[Action],
        conditioning: Conditioning,
        shaped: bool,
    ) -> Result<Self> {
        let grid = env.grid();
        let (last, body) = actions
            .split_last()
            .ok_or_else(|| Error::Contract("empty trajectory".into()))?;
        if *last != Action::Stop {
            return Err(Error::Contract("trajectory must end with Stop".into()));
        }
        let mut state = grid.initial_state();
        let mut increments = Vec::with_capacity(body.len());
        for &a in body {
            match a {
                Action::Increment(d) => increments.push(d as u8),
                Action::Stop => return Err(Error::Contract("Stop before the end of a trajectory".into())),
            }
            state = grid.apply(&state, a)?;
        }
        let reward = env.reward(&state.coords).to_vec();
        let scalar_reward = conditional_reward(&reward, &conditioning, shaped)?;
        Ok(Trajectory {
            increments,
            terminal: state.coords,
            conditioning,
            reward,
            scalar_reward,
        })
    }

    pub fn actions(&self) -> Vec<Action> {
        self.increments
            .iter()
            .map(|&d| Action::Increment(d as usize))
            .chain(std::iter::once(Action::Stop))
            .collect()
    }

    /// `s_0 .. s_T` followed by the done state.
    pub fn states(&self, grid: &GridSpec) -> Vec<State> {
        let mut state = grid.initial_state();
        let mut out = vec![state.clone()];
        for &d in &self.increments {
            state.coords[d as usize] += 1;
            out.push(state.clone());
        }
        state.done = true;
        out.push(state);
        out
    }

    /// Number of actions including `Stop`.
    pub fn len(&self) -> usize {
        self.increments.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Picks an action index from masked logits: uniform over legal actions with
/// probability `epsilon`, otherwise from the masked softmax.
fn choose_action<R: Rng + ?Sized>(
    logits: ArrayView1<f64>,
    legal: &[bool],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        let n = legal.iter().filter(|&&l| l).count();
        let k = rng.random_range(0..n);
        return Ok(legal
            .iter()
            .enumerate()
            .filter(|(_, &l)| l)
            .nth(k)
            .map(|(i, _)| i)
            .expect("k < number of legal actions"));
    }
    let max = logits
        .iter()
        .zip(legal)
        .filter(|(_, &l)| l)
        .map(|(&x, _)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Training {
            step: 0,
            msg: format!("non-finite policy logits {logits}"),
        });
    }
    let total: f64 = logits
        .iter()
        .zip(legal)
        .filter(|(_, &l)| l)
        .map(|(&x, _)| (x - max).exp())
        .sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, (&x, &l)) in logits.iter().zip(legal).enumerate() {
        if !l {
            continue;
        }
        acc += (x - max).exp();
        last = i;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(last)
}

/// Rolls out one trajectory per conditioning in lockstep, sharing a forward
/// pass per step. Random draws are consumed in batch order.
pub fn sample_batch<R: Rng + ?Sized>(
    policy: &Mlp,
    env: &Env,
    conditionings: Vec<Conditioning>,
    epsilon: f64,
    shaped: bool,
    rng: &mut R,
) -> Result<Vec<Trajectory>> {
    let grid = *env.grid();
    let (dims, side) = (grid.dims, grid.side);
    let sw = state_encoding_width(&grid);
    let width = sw + encoding_width(grid.objectives);
    if policy.input_dim() != width {
        return Err(Error::Dimension {
            context: "policy input",
            expected: width,
            got: policy.input_dim(),
        });
    }
    let n = conditionings.len();
    let encodings: Vec<Vec<f64>> = conditionings.iter().map(Conditioning::encode).collect();
    let mut coords = vec![vec![0usize; dims]; n];
    let mut increments: Vec<Vec<u8>> = vec![Vec::new(); n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut legal = Vec::with_capacity(dims + 1);
    while !active.is_empty() {
        let mut x = Array2::zeros((active.len(), width));
        for (row, &i) in active.iter().enumerate() {
            let mut xr = x.row_mut(row);
            for (d, &c) in coords[i].iter().enumerate() {
                xr[d * side + c] = 1.0;
            }
            xr.slice_mut(s![sw..]).assign(&ArrayView1::from(&encodings[i][..]));
        }
        let cache = policy.forward_batch(x)?;
        let logits = cache.output();
        let mut still = Vec::with_capacity(active.len());
        for (row, &i) in active.iter().enumerate() {
            legal.clear();
            grid.write_legal_mask(&coords[i], &mut legal);
            let a = choose_action(logits.row(row), &legal, epsilon, rng)?;
            if !legal[a] {
                return Err(Error::Contract(format!("sampled illegal action {a} at {:?}", coords[i])));
            }
            if a < dims {
                coords[i][a] += 1;
                increments[i].push(a as u8);
                still.push(i);
            }
        }
        active = still;
    }
    conditionings
        .into_iter()
        .zip(coords)
        .zip(increments)
        .map(|((conditioning, terminal), increments)| {
            let reward = env.reward(&terminal).to_vec();
            let scalar_reward = conditional_reward(&reward, &conditioning, shaped)?;
            Ok(Trajectory {
                increments,
                terminal,
                conditioning,
                reward,
                scalar_reward,
            })
        })
        .collect()
}

pub fn sample_trajectory<R: Rng + ?Sized>(
    policy: &Mlp,
    env: &Env,
    conditioning: Conditioning,
    epsilon: f64,
    shaped: bool,
    rng: &mut R,
) -> Result<Trajectory> {
    Ok(sample_batch(policy, env, vec![conditioning], epsilon, shaped, rng)?
        .pop()
        .expect("one trajectory per conditioning"))
}

/// Terminal of an inference-time rollout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSample {
    pub coords: Vec<usize>,
    pub reward: RewardVector,
    /// `None` in preference mode.
    pub in_focus: Option<bool>,
    pub scalar_reward: f64,
}

impl From<Trajectory> for ConditionalSample {
    fn from(t: Trajectory) -> Self {
        ConditionalSample {
            in_focus: t.conditioning.goal().map(|g| in_focus(&t.reward, g)),
            coords: t.terminal,
            reward: t.reward,
            scalar_reward: t.scalar_reward,
        }
    }
}

/// Inference rollouts (`epsilon = 0`) of the learned policy, one
/// per conditioning, in chunks.
pub fn sample_many<R: Rng + ?Sized>(
    model: &GfnModel,
    env: &Env,
    conditionings: Vec<Conditioning>,
    shaped: bool,
    rng: &mut R,
) -> Result<Vec<Trajectory>> {
    let mut out = Vec::with_capacity(conditionings.len());
    let mut rest = conditionings;
    while !rest.is_empty() {
        let tail = rest.split_off(rest.len().min(CHUNK));
        out.extend(sample_batch(&model.policy, env, rest, 0.0, shaped, rng)?);
        rest = tail;
    }
    Ok(out)
}

/// `n` rollouts of the learned policy under a single conditioning.
pub fn sample_conditional<R: Rng + ?Sized>(
    model: &GfnModel,
    env: &Env,
    conditioning: &Conditioning,
    n: usize,
    shaped: bool,
    rng: &mut R,
) -> Result<Vec<ConditionalSample>> {
    Ok(sample_many(model, env, vec![conditioning.clone(); n], shaped, rng)?
        .into_iter()
        .map(ConditionalSample::from)
        .collect())
}
