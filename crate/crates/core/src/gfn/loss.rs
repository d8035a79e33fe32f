use ndarray::{s, Array2, ArrayView1};

use crate::conditioning::encoding_width;
use crate::env::GridSpec;
use crate::error::{Error, Result};
use crate::nnet::Gradients;

use super::rollout::Trajectory;
use super::{log_reward_from_scalar, state_encoding_width, GfnModel, TrainConfig};

/// The four terms of the trajectory-balance residual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TbTerms {
    pub log_z: f64,
    pub sum_log_pf: f64,
    pub log_reward: f64,
    pub log_pb: f64,
}

impl TbTerms {
    /// `log Z + sum log P_F - log R - sum log P_B`.
    pub fn residual(&self) -> f64 {
        self.log_z + self.sum_log_pf - self.log_reward - self.log_pb
    }

    pub fn loss(&self) -> f64 {
        self.residual().powi(2)
    }
}

#[derive(Clone, Debug)]
pub struct BatchLoss {
    pub mean_loss: f64,
    pub log_z_mean: f64,
    pub terms: Vec<TbTerms>,
    pub policy_grads: Gradients,
    pub log_z_grads: Gradients,
}

/// Log-probability of the path under the uniform backward policy: each
/// increment into `s` contributes `-ln |parents(s)|`; `Stop` contributes 0.
pub fn uniform_backward_logprob(grid: &GridSpec, trajectory: &Trajectory) -> f64 {
    let mut coords = vec![0usize; grid.dims];
    let mut total = 0.0;
    for &d in &trajectory.increments {
        coords[d as usize] += 1;
        total -= (grid.num_parents(&coords) as f64).ln();
    }
    total
}

/// Trajectory-balance loss of every trajectory in `batch`, with the gradient
/// of the batch mean with respect to both networks.
pub fn tb_batch(
    model: &GfnModel,
    grid: &GridSpec,
    batch: &[Trajectory],
    cfg: &TrainConfig,
    step: u64,
) -> Result<BatchLoss> {
    if batch.is_empty() {
        return Err(Error::Contract("empty training batch".into()));
    }
    let (dims, side) = (grid.dims, grid.side);
    let sw = state_encoding_width(grid);
    let cw = encoding_width(grid.objectives);
    let width = sw + cw;
    let n_actions = grid.num_actions();
    let rows: usize = batch.iter().map(Trajectory::len).sum();

    let mut x = Array2::zeros((rows, width));
    let mut zx = Array2::zeros((batch.len(), cw));
    let mut taken = Vec::with_capacity(rows);
    let mut owner = Vec::with_capacity(rows);
    let mut r = 0;
    let mut coords = vec![0usize; dims];
    for (i, t) in batch.iter().enumerate() {
        let enc = t.conditioning.encode();
        if enc.len() != cw {
            return Err(Error::Dimension {
                context: "conditioning encoding",
                expected: cw,
                got: enc.len(),
            });
        }
        zx.row_mut(i).assign(&ArrayView1::from(&enc[..]));
        coords.fill(0);
        for a in t.increments.iter().map(|&d| d as usize).chain(std::iter::once(dims)) {
            let mut xr = x.row_mut(r);
            for (d, &c) in coords.iter().enumerate() {
                xr[d * side + c] = 1.0;
            }
            xr.slice_mut(s![sw..]).assign(&ArrayView1::from(&enc[..]));
            taken.push(a);
            owner.push(i);
            if a < dims {
                if coords[a] + 1 >= side {
                    return Err(Error::Contract(format!("trajectory leaves the grid in dimension {a}")));
                }
                coords[a] += 1;
            }
            r += 1;
        }
    }

    let pf_cache = model.policy.forward_batch(x)?;
    let z_cache = model.log_z.forward_batch(zx)?;
    let logits = pf_cache.output();
    let log_z = z_cache.output();

    // Masked softmax per row; `probs` keeps the legal probabilities for the
    // gradient.
    let mut probs = Array2::<f64>::zeros((rows, n_actions));
    let mut sum_log_pf = vec![0.0; batch.len()];
    let mut legal = Vec::with_capacity(n_actions);
    let mut row_coords = vec![0usize; dims];
    let mut prev_owner = usize::MAX;
    for row in 0..rows {
        let i = owner[row];
        if i != prev_owner {
            row_coords.fill(0);
            prev_owner = i;
        }
        legal.clear();
        grid.write_legal_mask(&row_coords, &mut legal);
        let lr = logits.row(row);
        let max = lr
            .iter()
            .zip(&legal)
            .filter(|(_, &l)| l)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let lse = max
            + lr.iter()
                .zip(&legal)
                .filter(|(_, &l)| l)
                .map(|(&v, _)| (v - max).exp())
                .sum::<f64>()
                .ln();
        let mut pr = probs.row_mut(row);
        for j in 0..n_actions {
            if legal[j] {
                pr[j] = (lr[j] - lse).exp();
            }
        }
        let a = taken[row];
        sum_log_pf[i] += lr[a] - lse;
        if a < dims {
            row_coords[a] += 1;
        }
    }

    let terms: Vec<TbTerms> = batch
        .iter()
        .enumerate()
        .map(|(i, t)| TbTerms {
            log_z: log_z[[i, 0]],
            sum_log_pf: sum_log_pf[i],
            log_reward: log_reward_from_scalar(t.scalar_reward, cfg),
            log_pb: uniform_backward_logprob(grid, t),
        })
        .collect();
    let b = batch.len() as f64;
    let mean_loss = terms.iter().map(TbTerms::loss).sum::<f64>() / b;
    let log_z_mean = terms.iter().map(|t| t.log_z).sum::<f64>() / b;
    if !mean_loss.is_finite() {
        let bad = terms.iter().find(|t| !t.loss().is_finite()).copied();
        return Err(Error::Training {
            step,
            msg: format!("non-finite trajectory-balance loss; first bad terms {bad:?}"),
        });
    }

    let coef: Vec<f64> = terms.iter().map(|t| 2.0 * t.residual() / b).collect();
    let mut g = -probs;
    for row in 0..rows {
        let c = coef[owner[row]];
        let mut gr = g.row_mut(row);
        gr[taken[row]] += 1.0;
        gr.mapv_inplace(|v| v * c);
    }
    let policy_grads = model.policy.backward_batch(&pf_cache, &g)?;
    let zg = Array2::from_shape_vec((batch.len(), 1), coef).expect("column shape");
    let log_z_grads = model.log_z.backward_batch(&z_cache, &zg)?;
    Ok(BatchLoss {
        mean_loss,
        log_z_mean,
        terms,
        policy_grads,
        log_z_grads,
    })
}

pub fn tb_terms(model: &GfnModel, grid: &GridSpec, trajectory: &Trajectory, cfg: &TrainConfig) -> Result<TbTerms> {
    Ok(tb_batch(model, grid, std::slice::from_ref(trajectory), cfg, 0)?.terms[0])
}

/// Squared trajectory-balance residual of a single trajectory.
pub fn tb_loss(model: &GfnModel, grid: &GridSpec, trajectory: &Trajectory, cfg: &TrainConfig) -> Result<f64> {
    Ok(tb_terms(model, grid, trajectory, cfg)?.loss())
}
