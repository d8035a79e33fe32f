use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mogfn::conditioning::{Conditioning, PreferenceVector};
use mogfn::env::{enumerate_terminals, GridSpec, Landscape, MaskPreset};
use mogfn::metrics::{avg_pcc, exact_distribution, igd, pc_ent, true_front, Sample};

/// Quadratic-time Pareto filter written independently of the library: keeps
/// every distinct nonzero image that no other image weakly beats everywhere
/// and strictly beats somewhere.
fn quadratic_front(images: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut distinct: Vec<Vec<f64>> = Vec::new();
    for r in images {
        if r.iter().any(|&x| x != 0.0) && !distinct.contains(r) {
            distinct.push(r.clone());
        }
    }
    let mut front: Vec<Vec<f64>> = distinct
        .iter()
        .filter(|a| {
            !distinct.iter().any(|b| {
                let ge = b.iter().zip(a.iter()).all(|(x, y)| x >= y);
                let gt = b.iter().zip(a.iter()).any(|(x, y)| x > y);
                ge && gt
            })
        })
        .cloned()
        .collect();
    front.sort_by(|a, b| a.partial_cmp(b).unwrap());
    front
}

#[test]
fn true_front_matches_quadratic_oracle_on_every_preset() {
    let grid = GridSpec::new(2, 33, 2).unwrap();
    for p in MaskPreset::ALL {
        let land = Landscape::preset(p);
        let images: Vec<Vec<f64>> = enumerate_terminals(&grid, &land).unwrap().into_iter().map(|t| t.reward).collect();
        let mut got = true_front(&grid, &land).unwrap();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, quadratic_front(&images), "{}", p.name());
    }
}

fn pref_sample(r: Vec<f64>, c: Vec<f64>) -> Sample {
    Sample {
        reward: r,
        conditioning: Conditioning::Preference(PreferenceVector::normalized(c).unwrap()),
    }
}

#[test]
fn avg_pcc_of_independent_draws_is_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let samples: Vec<Sample> = (0..10_000)
        .map(|_| {
            let w: f64 = rng.random();
            pref_sample(vec![rng.random(), rng.random()], vec![w, 1.0 - w])
        })
        .collect();
    assert!(avg_pcc(&samples).unwrap().abs() < 0.05);
}

#[test]
fn exact_distribution_sums_to_one_on_every_preset() {
    let grid = GridSpec::new(2, 33, 2).unwrap();
    let c = Conditioning::Preference(PreferenceVector::new(vec![0.3, 0.7]).unwrap());
    for p in MaskPreset::ALL {
        let d = exact_distribution(&grid, &Landscape::preset(p), &c, 60.0, true, 1e-8).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(d.iter().all(|&x| x >= 0.0));
    }
}

fn points(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, 2), 1..n)
}

proptest! {
    #[test]
    fn igd_never_increases_when_samples_are_added(s in points(12), p in points(12), extra in points(4)) {
        let before = igd(&s, &p).unwrap();
        let mut more = s.clone();
        more.extend(extra);
        prop_assert!(igd(&more, &p).unwrap() <= before + 1e-15);
    }

    #[test]
    fn igd_vanishes_when_references_are_sampled(p in points(12), s in points(6)) {
        let mut all = s.clone();
        all.extend(p.iter().cloned());
        prop_assert_eq!(igd(&all, &p).unwrap(), 0.0);
    }

    #[test]
    fn pc_ent_bounded_and_duplication_invariant(s in points(20), p in points(8)) {
        let h = pc_ent(&s, &p).unwrap();
        prop_assert!(h >= -1e-15 && h <= (p.len() as f64).ln() + 1e-12);
        let doubled: Vec<Vec<f64>> = s.iter().chain(s.iter()).cloned().collect();
        prop_assert!((pc_ent(&doubled, &p).unwrap() - h).abs() < 1e-12);
    }

    #[test]
    fn avg_pcc_bounded_and_affine_invariant(
        rows in proptest::collection::vec((0.01f64..1.0, 0.01f64..1.0, 0.01f64..1.0), 3..30),
        scale in 0.1f64..5.0,
        shift in -0.5f64..0.5,
    ) {
        let base: Vec<Sample> = rows.iter().map(|&(a, b, w)| pref_sample(vec![a, b], vec![w, 1.0 - w])).collect();
        let v = avg_pcc(&base).unwrap();
        prop_assert!((-1.0..=1.0).contains(&v));
        // Rescaling the first reward column leaves its correlation unchanged.
        let moved: Vec<Sample> = rows
            .iter()
            .map(|&(a, b, w)| pref_sample(vec![scale * a + shift, b], vec![w, 1.0 - w]))
            .collect();
        prop_assert!((avg_pcc(&moved).unwrap() - v).abs() < 1e-9);
    }
}
