//! Evaluation metrics (IGD, PC-ent, Avg-PCC, goal-reaching accuracy) and the
//! exact enumeration oracles they are checked against.

use serde::{Deserialize, Serialize};

use crate::conditioning::{conditional_reward, in_focus, Conditioning};
use crate::env::{enumerate_terminals, is_zero, GridSpec, Landscape, RewardVector};
use crate::error::{Error, Result};
use crate::goalsampler::hypercube_face_points;

/// One generated sample: its objective-space image and the conditioning that
/// produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub reward: RewardVector,
    pub conditioning: Conditioning,
}

impl Sample {
    pub fn in_focus(&self) -> Option<bool> {
        self.conditioning.goal().map(|g| in_focus(&self.reward, g))
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean over reference points of the squared distance to the nearest sample.
pub fn igd(samples: &[RewardVector], references: &[RewardVector]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Metric("IGD of an empty sample set".into()));
    }
    if references.is_empty() {
        return Err(Error::Metric("IGD with no reference points".into()));
    }
    let total: f64 = references
        .iter()
        .map(|p| samples.iter().map(|s| sq_dist(s, p)).fold(f64::INFINITY, f64::min))
        .sum();
    Ok(total / references.len() as f64)
}

/// Index of the nearest reference point, lowest index on ties.
pub fn nearest_reference(s: &[f64], references: &[RewardVector]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, p) in references.iter().enumerate() {
        let d = sq_dist(s, p);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Entropy (natural log) of the cluster proportions `|S_j| / |S|` obtained by
/// assigning every sample to its nearest reference point.
pub fn pc_ent(samples: &[RewardVector], references: &[RewardVector]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Metric("PC-ent of an empty sample set".into()));
    }
    if references.is_empty() {
        return Err(Error::Metric("PC-ent with no reference points".into()));
    }
    let mut counts = vec![0usize; references.len()];
    for s in samples {
        counts[nearest_reference(s, references)] += 1;
    }
    let n = samples.len() as f64;
    Ok(counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let q = c as f64 / n;
            -q * q.ln()
        })
        .sum())
}

/// Pearson correlation; 0 when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Mean over objectives of the correlation between conditioning payloads and
/// achieved rewards.
pub fn avg_pcc(samples: &[Sample]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Metric(format!("Avg-PCC needs at least 2 samples, got {}", samples.len())));
    }
    let k = samples[0].reward.len();
    if samples.iter().any(|s| s.reward.len() != k || s.conditioning.dim() != k) {
        return Err(Error::Metric("samples disagree on the number of objectives".into()));
    }
    let total: f64 = (0..k)
        .map(|j| {
            let s: Vec<f64> = samples.iter().map(|x| x.reward[j]).collect();
            let c: Vec<f64> = samples.iter().map(|x| x.conditioning.payload()[j]).collect();
            pearson(&s, &c)
        })
        .sum();
    Ok(total / k as f64)
}

/// Fraction of goal-conditioned samples inside their focus region.
pub fn goal_accuracy(samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Metric("goal accuracy of an empty sample set".into()));
    }
    let mut hits = 0usize;
    for s in samples {
        match s.in_focus() {
            Some(true) => hits += 1,
            Some(false) => {}
            None => return Err(Error::Metric("goal accuracy over preference-conditioned samples".into())),
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Keeps the in-focus goal-conditioned samples.
pub fn filter_out_of_focus(samples: &[Sample]) -> Vec<Sample> {
    samples.iter().filter(|s| s.in_focus() == Some(true)).cloned().collect()
}

/// `a` dominates `b`: at least as good everywhere, strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Non-dominated subset of `points` (duplicates collapsed), in descending
/// lexicographic order.
///
/// After a descending lexicographic sort any dominator precedes the point it
/// dominates, so each point only needs checking against the front kept so far.
pub fn non_dominated(points: &[RewardVector]) -> Vec<RewardVector> {
    let mut sorted: Vec<&RewardVector> = points.iter().collect();
    sorted.sort_by(|a, b| {
        b.iter()
            .zip(a.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    sorted.dedup();
    let mut front: Vec<RewardVector> = Vec::new();
    for p in sorted {
        if !front.iter().any(|f| dominates(f, p)) {
            front.push(p.clone());
        }
    }
    front
}

/// Pareto front of the masked landscape image, excluding the zero vector.
pub fn true_front(grid: &GridSpec, landscape: &Landscape) -> Result<Vec<RewardVector>> {
    let images: Vec<RewardVector> = enumerate_terminals(grid, landscape)?
        .into_iter()
        .map(|t| t.reward)
        .filter(|r| !is_zero(r))
        .collect();
    Ok(non_dominated(&images))
}

pub fn hypercube_face_references(k: usize, resolution: usize) -> Vec<RewardVector> {
    hypercube_face_points(k, resolution)
}

/// Which reference set the metrics are computed against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    /// The enumerated Pareto front.
    Front,
    /// Discretized extreme faces of the objective hypercube.
    Faces,
    /// The front when it has at least two points, otherwise the faces.
    Auto,
}

impl ReferenceKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "front" => Some(ReferenceKind::Front),
            "faces" => Some(ReferenceKind::Faces),
            "auto" => Some(ReferenceKind::Auto),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ReferenceKind::Front => "front",
            ReferenceKind::Faces => "faces",
            ReferenceKind::Auto => "auto",
        }
    }
}

/// Resolves the reference points; face resolution follows the grid side.
pub fn reference_points(grid: &GridSpec, landscape: &Landscape, kind: ReferenceKind) -> Result<Vec<RewardVector>> {
    let faces = || hypercube_face_references(grid.objectives, grid.side.max(2));
    match kind {
        ReferenceKind::Faces => Ok(faces()),
        ReferenceKind::Front => true_front(grid, landscape),
        ReferenceKind::Auto => {
            let front = true_front(grid, landscape)?;
            Ok(if front.len() >= 2 { front } else { faces() })
        }
    }
}

/// Terminal distribution `p(x) ∝ max(R_c(x), floor)^beta` in flat-index order.
pub fn exact_distribution(
    grid: &GridSpec,
    landscape: &Landscape,
    conditioning: &Conditioning,
    beta: f64,
    shaped: bool,
    floor: f64,
) -> Result<Vec<f64>> {
    let log_w: Vec<f64> = enumerate_terminals(grid, landscape)?
        .iter()
        .map(|t| Ok(beta * conditional_reward(&t.reward, conditioning, shaped)?.max(floor).ln()))
        .collect::<Result<_>>()?;
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

/// Total-variation distance between empirical counts and a probability table
/// over the same support.
pub fn tv_distance(counts: &[u64], exact: &[f64]) -> Result<f64> {
    if counts.len() != exact.len() {
        return Err(Error::Metric(format!(
            "support mismatch: {} empirical bins vs {} exact",
            counts.len(),
            exact.len()
        )));
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::Metric("no samples".into()));
    }
    Ok(0.5
        * counts
            .iter()
            .zip(exact)
            .map(|(&c, &p)| (c as f64 / n as f64 - p).abs())
            .sum::<f64>())
}

/// Total-variation distance between two probability tables.
pub fn tv_between(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Metric("support mismatch".into()));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Metrics of one evaluated model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_samples: usize,
    /// Samples the metrics were computed on (nonzero reward, and in focus in
    /// goal mode).
    pub n_used: usize,
    pub igd: Option<f64>,
    pub pc_ent: Option<f64>,
    pub avg_pcc: Option<f64>,
    pub goal_accuracy: Option<f64>,
    pub zero_reward_fraction: Option<f64>,
    /// Mean cosine between reward and goal direction over in-focus samples.
    pub mean_focus_cosine: Option<f64>,
}

impl MetricReport {
    /// Evaluates `samples`. Goal-mode samples are filtered to their focus
    /// regions first; zero-reward samples never enter IGD / PC-ent / Avg-PCC.
    pub fn compute(samples: &[Sample], references: &[RewardVector]) -> Self {
        let mut report = MetricReport {
            n_samples: samples.len(),
            ..Default::default()
        };
        if samples.is_empty() {
            return report;
        }
        let zeros = samples.iter().filter(|s| is_zero(&s.reward)).count();
        report.zero_reward_fraction = Some(zeros as f64 / samples.len() as f64);

        let goal_mode = samples.iter().all(|s| s.conditioning.goal().is_some());
        let used: Vec<Sample> = if goal_mode {
            report.goal_accuracy = goal_accuracy(samples).ok();
            let kept = filter_out_of_focus(samples);
            if !kept.is_empty() {
                let mean_cos = kept
                    .iter()
                    .map(|s| crate::conditioning::cosine_sim(&s.reward, s.conditioning.payload()))
                    .sum::<f64>()
                    / kept.len() as f64;
                report.mean_focus_cosine = Some(mean_cos);
            }
            kept
        } else {
            samples.iter().filter(|s| !is_zero(&s.reward)).cloned().collect()
        };
        report.n_used = used.len();
        let images: Vec<RewardVector> = used.iter().map(|s| s.reward.clone()).collect();
        report.igd = igd(&images, references).ok();
        report.pc_ent = pc_ent(&images, references).ok();
        report.avg_pcc = avg_pcc(&used).ok();
        report
    }
}

/// Mean and standard error of the mean; sem needs at least two values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSem {
    pub mean: f64,
    pub sem: Option<f64>,
    pub n: usize,
}

impl MeanSem {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sem = (n >= 2).then(|| {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        Some(MeanSem { mean, sem, n })
    }
}

impl std::fmt::Display for MeanSem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.sem {
            Some(s) => write!(f, "{:.3} ± {:.3}", self.mean, s),
            None => write!(f, "{:.3}", self.mean),
        }
    }
}

/// Per-seed reports aggregated to mean ± sem per metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub igd: Option<MeanSem>,
    pub pc_ent: Option<MeanSem>,
    pub avg_pcc: Option<MeanSem>,
    pub goal_accuracy: Option<MeanSem>,
    pub zero_reward_fraction: Option<MeanSem>,
    pub mean_focus_cosine: Option<MeanSem>,
}

impl AggregateReport {
    pub fn of(reports: &[MetricReport]) -> Self {
        let agg = |f: fn(&MetricReport) -> Option<f64>| {
            let v: Vec<f64> = reports.iter().filter_map(f).collect();
            MeanSem::of(&v)
        };
        AggregateReport {
            igd: agg(|r| r.igd),
            pc_ent: agg(|r| r.pc_ent),
            avg_pcc: agg(|r| r.avg_pcc),
            goal_accuracy: agg(|r| r.goal_accuracy),
            zero_reward_fraction: agg(|r| r.zero_reward_fraction),
            mean_focus_cosine: agg(|r| r.mean_focus_cosine),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::{FocusGoal, PreferenceVector};
    use crate::env::MaskPreset;

    fn pref(w: &[f64]) -> Conditioning {
        Conditioning::Preference(PreferenceVector::normalized(w.to_vec()).unwrap())
    }

    fn goal(d: &[f64]) -> Conditioning {
        Conditioning::Goal(FocusGoal::new(d.to_vec(), 0.98, 0.2).unwrap())
    }

    #[test]
    fn igd_examples() {
        let p = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(igd(&p, &p).unwrap(), 0.0);
        assert_eq!(igd(&[vec![0.0, 1.0]], &p).unwrap(), 1.0);
        assert!(igd(&[], &p).is_err());
        let more = vec![vec![0.0, 1.0], vec![0.8, 0.1]];
        assert!(igd(&more, &p).unwrap() <= 1.0);
    }

    #[test]
    fn pc_ent_examples() {
        let p: Vec<_> = (0..4).map(|i| vec![i as f64, 0.0]).collect();
        let one = vec![vec![0.1, 0.0]; 10];
        assert_eq!(pc_ent(&one, &p).unwrap(), 0.0);
        let even: Vec<_> = (0..8).map(|i| vec![(i % 4) as f64, 0.1]).collect();
        assert!((pc_ent(&even, &p).unwrap() - 4f64.ln()).abs() < 1e-12);
        let doubled: Vec<_> = even.iter().chain(&even).cloned().collect();
        assert!((pc_ent(&doubled, &p).unwrap() - pc_ent(&even, &p).unwrap()).abs() < 1e-15);
        // equidistant sample goes to the lowest index
        assert_eq!(nearest_reference(&[0.5, 0.0], &p), 0);
    }

    #[test]
    fn pcc_examples() {
        let s: Vec<Sample> = [[0.2, 0.8], [0.5, 0.5], [0.9, 0.1]]
            .iter()
            .map(|w| Sample { reward: w.to_vec(), conditioning: pref(w) })
            .collect();
        assert!((avg_pcc(&s).unwrap() - 1.0).abs() < 1e-12);
        let anti: Vec<Sample> = [[0.2, 0.8], [0.5, 0.5], [0.9, 0.1]]
            .iter()
            .map(|w| Sample { reward: vec![1.0 - w[0], 1.0 - w[1]], conditioning: pref(w) })
            .collect();
        assert!((avg_pcc(&anti).unwrap() + 1.0).abs() < 1e-12);
        assert!(avg_pcc(&s[..1]).is_err());
        // constant rewards contribute zero
        let flat: Vec<Sample> = [[0.2, 0.8], [0.9, 0.1]]
            .iter()
            .map(|w| Sample { reward: vec![0.5, 0.5], conditioning: pref(w) })
            .collect();
        assert_eq!(avg_pcc(&flat).unwrap(), 0.0);
    }

    #[test]
    fn accuracy_and_filter() {
        let inside = Sample { reward: vec![0.5, 0.5], conditioning: goal(&[1.0, 1.0]) };
        let outside = Sample { reward: vec![1.0, 0.0], conditioning: goal(&[0.0, 1.0]) };
        assert_eq!(goal_accuracy(&[inside.clone(), inside.clone()]).unwrap(), 1.0);
        assert_eq!(goal_accuracy(&[outside.clone()]).unwrap(), 0.0);
        assert_eq!(goal_accuracy(&[inside.clone(), outside.clone()]).unwrap(), 0.5);
        let mixed = Sample { reward: vec![0.5, 0.5], conditioning: pref(&[1.0, 1.0]) };
        assert!(goal_accuracy(&[inside.clone(), mixed]).is_err());

        let all = vec![inside.clone(), inside.clone()];
        assert_eq!(filter_out_of_focus(&all), all);
        assert!(filter_out_of_focus(&[outside.clone()]).is_empty());
        let input = vec![inside.clone(), outside.clone(), outside];
        let kept = filter_out_of_focus(&input);
        assert_eq!(kept.len() + 2, input.len());
    }

    #[test]
    fn face_references() {
        let r = hypercube_face_references(2, 2);
        assert_eq!(r, vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
        for n in 2..12 {
            let r = hypercube_face_references(2, n);
            assert_eq!(r.len(), 2 * n - 1);
            assert!(r.iter().all(|p| p.iter().cloned().fold(0.0, f64::max) == 1.0));
        }
    }

    #[test]
    fn unrestrained_front_is_the_corner() {
        let g = GridSpec::new(2, 33, 2).unwrap();
        let front = true_front(&g, &Landscape::preset(MaskPreset::Unrestrained)).unwrap();
        assert_eq!(front, vec![vec![1.0, 1.0]]);
    }

    #[test]
    fn restrained_convex_front_is_the_cut() {
        let g = GridSpec::new(2, 33, 2).unwrap();
        let front = true_front(&g, &Landscape::preset(MaskPreset::RestrainedConvex)).unwrap();
        // i + j = 40 with i, j <= 32
        assert_eq!(front.len(), 25);
        assert!(front.iter().all(|r| r[0] + r[1] == 1.25));
    }

    #[test]
    fn exact_distribution_cases() {
        let g = GridSpec::new(2, 2, 2).unwrap();
        let tbl = crate::env::ObjectiveTable::from_fn(&g, |_| vec![0.5, 0.5]).unwrap();
        let l = Landscape::preset(MaskPreset::Unrestrained).with_source(crate::env::ObjectiveSource::Tabulated(tbl));
        let p = exact_distribution(&g, &l, &pref(&[1.0, 1.0]), 4.0, false, 1e-8).unwrap();
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));

        let g = GridSpec::new(2, 4, 2).unwrap();
        let l = Landscape::preset(MaskPreset::Unrestrained);
        let p = exact_distribution(&g, &l, &pref(&[1.0, 2.0]), 0.0, false, 1e-8).unwrap();
        assert!(p.iter().all(|&x| (x - 1.0 / 16.0).abs() < 1e-15));
        let p = exact_distribution(&g, &l, &pref(&[1.0, 2.0]), 500.0, false, 1e-8).unwrap();
        let argmax = g.flat_index(&[3, 3]);
        assert!(p[argmax] > 0.999);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tv_cases() {
        let p = [0.25, 0.25, 0.5];
        assert_eq!(tv_distance(&[1, 1, 2], &p).unwrap(), 0.0);
        assert_eq!(tv_distance(&[0, 0, 7], &[0.5, 0.5, 0.0]).unwrap(), 1.0);
        assert!(tv_distance(&[1, 1], &p).is_err());
        let q = [0.1, 0.6, 0.3];
        assert_eq!(tv_between(&p, &q).unwrap(), tv_between(&q, &p).unwrap());
    }

    #[test]
    fn mean_sem() {
        let m = MeanSem::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert!((m.sem.unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanSem::of(&[4.0]).unwrap().sem, None);
        assert!(MeanSem::of(&[]).is_none());
    }

    #[test]
    fn report_on_empty_samples() {
        let r = MetricReport::compute(&[], &[vec![1.0, 1.0]]);
        assert_eq!(r.n_samples, 0);
        assert!(r.igd.is_none() && r.pc_ent.is_none() && r.goal_accuracy.is_none());
    }
}
