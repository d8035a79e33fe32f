use rand::Rng;

use crate::conditioning::{sample_preference, Conditioning, FocusGoal, Mode};
use crate::goalsampler::{uniform_direction, TabGs};

/// Where training and evaluation conditionings come from.
#[derive(Clone, Debug, PartialEq)]
pub enum CondSource {
    /// Flat-Dirichlet preferences over `k` objectives.
    Preference { k: usize },
    /// Uniform-GS goal directions.
    UniformGoal { k: usize, threshold: f64, limit_coef: f64 },
    /// Tab-GS goal directions.
    Tabular { sampler: TabGs, threshold: f64, limit_coef: f64 },
    /// The same conditioning every time.
    Fixed(Conditioning),
}

impl CondSource {
    pub fn mode(&self) -> Mode {
        match self {
            CondSource::Preference { .. } => Mode::Preference,
            CondSource::UniformGoal { .. } | CondSource::Tabular { .. } => Mode::Goal,
            CondSource::Fixed(c) => c.mode(),
        }
    }

    pub fn objectives(&self) -> usize {
        match self {
            CondSource::Preference { k } | CondSource::UniformGoal { k, .. } => *k,
            CondSource::Tabular { sampler, .. } => sampler.directions().get(0).len(),
            CondSource::Fixed(c) => c.dim(),
        }
    }

    fn goal(direction: Vec<f64>, threshold: f64, limit_coef: f64) -> Conditioning {
        Conditioning::Goal(
            FocusGoal::new(direction, threshold, limit_coef).expect("goal parameters validated with the config"),
        )
    }

    /// Training-time draw at `step` of `total`; Tab-GS records the draw.
    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R, step: u64, total: u64) -> Conditioning {
        match self {
            CondSource::Tabular {
                sampler,
                threshold,
                limit_coef,
            } => {
                let i = sampler.sample_index(rng, step, total.max(1));
                Self::goal(sampler.directions().get(i).to_vec(), *threshold, *limit_coef)
            }
            other => other.draw_eval(rng),
        }
    }

    /// Evaluation-time draw; Tab-GS samples its current weighted
    /// distribution without changing state.
    pub fn draw_eval<R: Rng + ?Sized>(&self, rng: &mut R) -> Conditioning {
        match self {
            CondSource::Preference { k } => Conditioning::Preference(sample_preference(*k, rng)),
            CondSource::UniformGoal {
                k,
                threshold,
                limit_coef,
            } => Self::goal(uniform_direction(*k, rng), *threshold, *limit_coef),
            CondSource::Tabular {
                sampler,
                threshold,
                limit_coef,
            } => {
                let i = sampler.sample_weighted(rng);
                Self::goal(sampler.directions().get(i).to_vec(), *threshold, *limit_coef)
            }
            CondSource::Fixed(c) => c.clone(),
        }
    }

    /// Reports an achieved reward vector.
    pub fn observe(&mut self, r: &[f64]) {
        if let CondSource::Tabular { sampler, .. } = self {
            sampler.observe(r);
        }
    }

    pub fn tabgs(&self) -> Option<&TabGs> {
        match self {
            CondSource::Tabular { sampler, .. } => Some(sampler),
            _ => None,
        }
    }
}
