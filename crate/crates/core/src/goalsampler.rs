//! Goal-direction sources: uniform directions on the positive orthant of the
//! unit sphere, and a tabular sampler that learns to discredit directions
//! whose focus regions never receive samples.

use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::conditioning::cosine_sim;
use crate::error::{Error, Result};

/// Unnormalized sampling weight of a direction that was drawn but never hit.
pub const MISS_WEIGHT: f64 = 0.1;

/// Grid points of `[0,1]^K` with `resolution` points per axis and at least
/// one coordinate equal to 1, each listed once.
pub fn hypercube_face_points(k: usize, resolution: usize) -> Vec<Vec<f64>> {
    assert!(k >= 1 && resolution >= 2, "need K >= 1 and resolution >= 2");
    let top = resolution - 1;
    let total = resolution.pow(k as u32);
    let mut out = Vec::new();
    let mut idx = vec![0usize; k];
    for _ in 0..total {
        if idx.contains(&top) {
            out.push(idx.iter().map(|&i| i as f64 / top as f64).collect());
        }
        // odometer increment, last coordinate fastest
        for c in idx.iter_mut().rev() {
            *c += 1;
            if *c < resolution {
                break;
            }
            *c = 0;
        }
    }
    out
}

/// Unit directions in the nonnegative orthant (`D_G`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionSet {
    directions: Vec<Vec<f64>>,
}

impl DirectionSet {
    /// Normalized points of the extreme faces of the unit hypercube.
    pub fn from_hypercube_faces(k: usize, points_per_axis: usize) -> Self {
        let directions = hypercube_face_points(k, points_per_axis)
            .into_iter()
            .map(|p| {
                let n = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                p.into_iter().map(|x| x / n).collect()
            })
            .collect();
        DirectionSet { directions }
    }

    /// Wraps explicit unit vectors, rejecting anything that is not a unit
    /// vector of the nonnegative orthant or has the wrong width.
    pub fn from_vectors(directions: Vec<Vec<f64>>) -> Result<Self> {
        let k = directions.first().map_or(0, Vec::len);
        for d in &directions {
            let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            if d.len() != k || d.iter().any(|&x| !(x >= 0.0)) || (norm - 1.0).abs() > 1e-9 {
                return Err(Error::config("goal.directions", format!("{d:?} is not a nonnegative unit vector")));
            }
        }
        Ok(DirectionSet { directions })
    }

    /// Default resolution: 64 points per axis for K=2, 16 for K=3, 8 for K>=4.
    pub fn default_points_per_axis(k: usize) -> usize {
        match k {
            0..=2 => 64,
            3 => 16,
            _ => 8,
        }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.directions[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.directions.iter().map(Vec::as_slice)
    }

    /// Index of the direction with maximal cosine similarity to `r`; lowest
    /// index on ties. `None` for the zero vector.
    pub fn nearest(&self, r: &[f64]) -> Option<usize> {
        if r.iter().all(|&x| x == 0.0) {
            return None;
        }
        let mut best = None;
        let mut best_cos = f64::NEG_INFINITY;
        for (i, d) in self.directions.iter().enumerate() {
            let c = cosine_sim(r, d);
            if c > best_cos {
                best_cos = c;
                best = Some(i);
            }
        }
        best
    }
}

pub fn build_direction_set(k: usize, points_per_axis: usize) -> DirectionSet {
    DirectionSet::from_hypercube_faces(k, points_per_axis)
}

/// `|g| / ||g||` for a standard normal `g`: uniform on the positive orthant of
/// the unit sphere.
pub fn uniform_direction<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    assert!(k >= 2, "directions need at least two objectives");
    loop {
        let g: Vec<f64> = (0..k)
            .map(|_| {
                let x: f64 = StandardNormal.sample(rng);
                x.abs()
            })
            .collect();
        let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return g.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Tabular goal sampler with a three-phase schedule: uniform over `D_G` for
/// the first quarter of training, then weighted by hit history, with counts
/// frozen from three quarters on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabGs {
    directions: DirectionSet,
    hits: Vec<u64>,
    drawn: Vec<bool>,
    frozen: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Uniform,
    Weighted,
    Frozen,
}

/// Phase at `step` of `total` training steps.
pub fn phase(step: u64, total: u64) -> Phase {
    if step * 4 < total {
        Phase::Uniform
    } else if step * 4 < 3 * total {
        Phase::Weighted
    } else {
        Phase::Frozen
    }
}

impl TabGs {
    pub fn new(directions: DirectionSet) -> Self {
        let n = directions.len();
        TabGs {
            directions,
            hits: vec![0; n],
            drawn: vec![false; n],
            frozen: false,
        }
    }

    pub fn directions(&self) -> &DirectionSet {
        &self.directions
    }

    pub fn hits(&self) -> &[u64] {
        &self.hits
    }

    pub fn drawn(&self) -> &[bool] {
        &self.drawn
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn weight(&self, i: usize) -> f64 {
        if !self.drawn[i] || self.hits[i] > 0 {
            1.0
        } else {
            MISS_WEIGHT
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.directions.len()).map(|i| self.weight(i)).collect()
    }

    /// Normalized weight-based distribution over `D_G`.
    pub fn probabilities(&self) -> Vec<f64> {
        let w = self.weights();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    /// Draws a direction index for training step `step` of `total`. Entering
    /// the last quarter freezes the counts.
    pub fn sample_index<R: Rng + ?Sized>(&mut self, rng: &mut R, step: u64, total: u64) -> usize {
        let ph = phase(step, total);
        if ph == Phase::Frozen {
            self.frozen = true;
        }
        let i = match ph {
            Phase::Uniform => rng.random_range(0..self.directions.len()),
            Phase::Weighted | Phase::Frozen => self.sample_weighted(rng),
        };
        if !self.frozen {
            self.drawn[i] = true;
        }
        i
    }

    /// Draw from the current weight-based distribution without touching state.
    pub fn sample_weighted<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let dist = WeightedIndex::new(self.weights()).expect("weights are positive");
        dist.sample(rng)
    }

    /// Credits the direction nearest to `r`. Zero vectors and frozen
    /// samplers are ignored.
    pub fn observe(&mut self, r: &[f64]) {
        if self.frozen {
            return;
        }
        if let Some(i) = self.directions.nearest(r) {
            self.hits[i] += 1;
        }
    }

    /// Restores state from serialized parts.
    pub fn from_parts(directions: DirectionSet, hits: Vec<u64>, drawn: Vec<bool>, frozen: bool) -> Option<Self> {
        (hits.len() == directions.len() && drawn.len() == directions.len()).then_some(TabGs {
            directions,
            hits,
            drawn,
            frozen,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    #[test]
    fn two_point_direction_set() {
        let d = build_direction_set(2, 2);
        assert_eq!(d.len(), 3);
        let want = [[0.0, 1.0], [1.0, 0.0], [FRAC_1_SQRT_2, FRAC_1_SQRT_2]];
        for (got, w) in d.iter().zip(want) {
            assert!((got[0] - w[0]).abs() < 1e-15 && (got[1] - w[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn direction_set_sizes_and_norms() {
        for n in 2..20 {
            assert_eq!(build_direction_set(2, n).len(), 2 * n - 1);
        }
        assert_eq!(build_direction_set(3, 16).len(), 16usize.pow(3) - 15usize.pow(3));
        for d in build_direction_set(3, 6).iter() {
            let n: f64 = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
            assert!(d.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn uniform_direction_norm_and_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 2..6 {
            for _ in 0..200 {
                let d = uniform_direction(k, &mut rng);
                let n: f64 = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-12);
                assert!(d.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn uniform_direction_angle_is_uniform() {
        // Kolmogorov-Smirnov statistic of the angle against U[0, pi/2].
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut angles: Vec<f64> = (0..n)
            .map(|_| {
                let d = uniform_direction(2, &mut rng);
                d[1].atan2(d[0]) / FRAC_PI_2
            })
            .collect();
        angles.sort_by(f64::total_cmp);
        let ks = angles
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let lo = i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64;
                (a - lo).abs().max((hi - a).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS = {ks}");
    }

    #[test]
    fn weight_table() {
        let mut t = TabGs::new(build_direction_set(2, 3));
        assert_eq!(t.weight(0), 1.0);
        t.drawn[0] = true;
        assert_eq!(t.weight(0), MISS_WEIGHT);
        t.observe(t.directions().get(0).to_vec().as_slice());
        assert_eq!(t.hits()[0], 1);
        assert_eq!(t.weight(0), 1.0);
    }

    #[test]
    fn first_phase_is_uniform() {
        let mut t = TabGs::new(build_direction_set(2, 4));
        // discredit everything but direction 0; phase 1 must ignore it
        for i in 0..t.directions().len() {
            t.drawn[i] = true;
        }
        t.hits[0] = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 70_000;
        let mut counts = vec![0usize; t.directions().len()];
        for _ in 0..n {
            counts[t.sample_index(&mut rng, 0, 100)] += 1;
        }
        let expect = n as f64 / counts.len() as f64;
        for c in counts {
            assert!((c as f64 - expect).abs() < 0.05 * expect);
        }
    }

    #[test]
    fn single_hit_probability() {
        let mut t = TabGs::new(build_direction_set(2, 8));
        let m = t.directions().len();
        for i in 0..m {
            t.drawn[i] = true;
        }
        t.hits[3] = 1;
        let p = t.probabilities();
        let expect = 1.0 / (1.0 + MISS_WEIGHT * (m as f64 - 1.0));
        assert!((p[3] - expect).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn observe_rules() {
        let mut t = TabGs::new(build_direction_set(2, 5));
        t.observe(&[0.0, 0.0]);
        assert!(t.hits().iter().all(|&h| h == 0));
        let d = t.directions().get(2).to_vec();
        t.observe(&d);
        assert_eq!(t.hits()[2], 1);
        t.freeze();
        t.observe(&d);
        assert_eq!(t.hits()[2], 1);
    }

    #[test]
    fn counts_freeze_at_three_quarters() {
        let mut t = TabGs::new(build_direction_set(2, 5));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        t.sample_index(&mut rng, 74, 100);
        assert!(!t.is_frozen());
        t.sample_index(&mut rng, 75, 100);
        assert!(t.is_frozen());
        let before = t.weights();
        let d = t.directions().get(0).to_vec();
        t.observe(&d);
        assert_eq!(t.weights(), before);
    }

    #[test]
    fn phases() {
        assert_eq!(phase(0, 100), Phase::Uniform);
        assert_eq!(phase(24, 100), Phase::Uniform);
        assert_eq!(phase(25, 100), Phase::Weighted);
        assert_eq!(phase(74, 100), Phase::Weighted);
        assert_eq!(phase(75, 100), Phase::Frozen);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn probabilities_form_a_distribution(
                drawn in prop::collection::vec(any::<bool>(), 9),
                hits in prop::collection::vec(0u64..3, 9),
            ) {
                let dirs = build_direction_set(2, 5);
                let t = TabGs::from_parts(dirs, hits, drawn, false).unwrap();
                let p = t.probabilities();
                prop_assert!(p.iter().all(|&x| x > 0.0));
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for i in 0..9 {
                    let w = t.weight(i);
                    prop_assert!(w == 1.0 || w == MISS_WEIGHT);
                }
            }
        }
    }
}
