//! Preference vectors, focus-region goals and the conditional rewards they
//! induce.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point of the probability simplex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceVector(Vec<f64>);

impl PreferenceVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::config("preference", "weights must be finite and nonnegative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config("preference", format!("weights sum to {sum}, not 1")));
        }
        Ok(PreferenceVector(weights))
    }

    /// Rescales nonnegative weights onto the simplex.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::config("preference", "weights must have a positive sum"));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }
}

/// Flat Dirichlet draw (uniform on the simplex) via normalized exponentials.
pub fn sample_preference<R: Rng + ?Sized>(k: usize, rng: &mut R) -> PreferenceVector {
    assert!(k >= 2, "preferences need at least two objectives");
    let g: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let sum: f64 = g.iter().sum();
    PreferenceVector(g.into_iter().map(|x| x / sum).collect())
}

/// Cosine cone `{r : cos(r, d) >= threshold}` with a shaping coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocusGoal {
    direction: Vec<f64>,
    /// `c_g`, the cosine threshold.
    pub threshold: f64,
    /// `m_g`, the reward coefficient at the cone boundary.
    pub limit_coef: f64,
}

impl FocusGoal {
    /// Normalizes `direction`; it must be nonnegative and nonzero.
    pub fn new(direction: Vec<f64>, threshold: f64, limit_coef: f64) -> Result<Self> {
        if direction.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::config("goal.direction", "components must be finite and nonnegative"));
        }
        let norm = l2(&direction);
        if norm == 0.0 {
            return Err(Error::config("goal.direction", "direction is the zero vector"));
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::config("focus_cosine_threshold", format!("{threshold} not in (0, 1)")));
        }
        if !(limit_coef > 0.0 && limit_coef <= 1.0) {
            return Err(Error::config("limit_reward_coef", format!("{limit_coef} not in (0, 1]")));
        }
        Ok(FocusGoal {
            direction: direction.into_iter().map(|x| x / norm).collect(),
            threshold,
            limit_coef,
        })
    }

    /// Like [`FocusGoal::new`] but keeps an already normalized direction
    /// bit-for-bit.
    pub fn from_unit(direction: Vec<f64>, threshold: f64, limit_coef: f64) -> Result<Self> {
        let mut goal = FocusGoal::new(direction.clone(), threshold, limit_coef)?;
        if (l2(&direction) - 1.0).abs() > 1e-9 {
            return Err(Error::config("goal.direction", "direction is not a unit vector"));
        }
        goal.direction = direction;
        Ok(goal)
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn with_threshold(&self, threshold: f64) -> Result<Self> {
        FocusGoal::new(self.direction.clone(), threshold, self.limit_coef)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Preference,
    Goal,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Preference => "preference",
            Mode::Goal => "goal",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Conditioning {
    Preference(PreferenceVector),
    Goal(FocusGoal),
}

impl Conditioning {
    pub fn mode(&self) -> Mode {
        match self {
            Conditioning::Preference(_) => Mode::Preference,
            Conditioning::Goal(_) => Mode::Goal,
        }
    }

    /// `w` or `d_g`.
    pub fn payload(&self) -> &[f64] {
        match self {
            Conditioning::Preference(w) => w.weights(),
            Conditioning::Goal(g) => g.direction(),
        }
    }

    pub fn dim(&self) -> usize {
        self.payload().len()
    }

    pub fn goal(&self) -> Option<&FocusGoal> {
        match self {
            Conditioning::Goal(g) => Some(g),
            Conditioning::Preference(_) => None,
        }
    }

    /// Payload followed by the mode one-hot `[preference, goal]`.
    pub fn encode(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim() + 2);
        self.encode_into(&mut out);
        out
    }

    pub fn encode_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.payload());
        match self {
            Conditioning::Preference(_) => out.extend([1.0, 0.0]),
            Conditioning::Goal(_) => out.extend([0.0, 1.0]),
        }
    }
}

pub fn encoding_width(k: usize) -> usize {
    k + 2
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Weighted sum `sum_k w_k r_k`.
pub fn scalarize(r: &[f64], w: &PreferenceVector) -> f64 {
    debug_assert_eq!(r.len(), w.weights().len());
    r.iter().zip(w.weights()).map(|(a, b)| a * b).sum()
}

/// Cosine similarity; defined as 0 for the zero vector.
pub fn cosine_sim(r: &[f64], d: &[f64]) -> f64 {
    let nr = l2(r);
    let nd = l2(d);
    if nr == 0.0 || nd == 0.0 {
        return 0.0;
    }
    let dot: f64 = r.iter().zip(d).map(|(a, b)| a * b).sum();
    (dot / (nr * nd)).clamp(-1.0, 1.0)
}

pub fn in_focus(r: &[f64], goal: &FocusGoal) -> bool {
    if r.iter().all(|&x| x == 0.0) {
        return false;
    }
    cosine_sim(r, goal.direction()) >= goal.threshold
}

/// Shaping coefficient `cos^(ln m_g / ln c_g)`, equal to `m_g` on the cone
/// boundary and 1 on its axis.
pub fn alpha_coef(r: &[f64], goal: &FocusGoal) -> Result<f64> {
    if !in_focus(r, goal) {
        return Err(Error::Contract("alpha_coef called on an out-of-focus reward".into()));
    }
    Ok(alpha_from_cosine(cosine_sim(r, goal.direction()), goal))
}

pub fn alpha_from_cosine(cos: f64, goal: &FocusGoal) -> f64 {
    let exponent = goal.limit_coef.ln() / goal.threshold.ln();
    cos.powf(exponent)
}

pub fn goal_reward(r: &[f64], goal: &FocusGoal, shaped: bool) -> f64 {
    if !in_focus(r, goal) {
        return 0.0;
    }
    let total: f64 = r.iter().sum();
    if shaped {
        alpha_from_cosine(cosine_sim(r, goal.direction()), goal) * total
    } else {
        total
    }
}

pub fn conditional_reward(r: &[f64], conditioning: &Conditioning, shaped: bool) -> Result<f64> {
    if r.len() != conditioning.dim() {
        return Err(Error::Dimension {
            context: "conditional reward",
            expected: conditioning.dim(),
            got: r.len(),
        });
    }
    Ok(match conditioning {
        Conditioning::Preference(w) => scalarize(r, w),
        Conditioning::Goal(g) => goal_reward(r, g, shaped),
    })
}
