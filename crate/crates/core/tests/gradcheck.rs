use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mogfn::conditioning::{sample_preference, Conditioning};
use mogfn::env::{Env, GridSpec, Landscape, MaskPreset};
use mogfn::gfn::{sample_batch, tb_batch, GfnModel, TrainConfig};
use mogfn::nnet::{Gradients, Mlp};

const H: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

/// Applies `f` to every parameter in turn and returns the worst relative
/// error between `analytic` and the central difference of `loss`.
fn worst_error(net: &mut Mlp, analytic: &Gradients, mut loss: impl FnMut(&Mlp) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for l in 0..net.layers().len() {
        let (rows, cols) = net.layers()[l].weight.dim();
        for i in 0..rows {
            for j in 0..cols {
                let orig = net.layers()[l].weight[[i, j]];
                net.layers_mut()[l].weight[[i, j]] = orig + H;
                let up = loss(net);
                net.layers_mut()[l].weight[[i, j]] = orig - H;
                let down = loss(net);
                net.layers_mut()[l].weight[[i, j]] = orig;
                worst = worst.max(rel_err(analytic.weights[l][[i, j]], (up - down) / (2.0 * H)));
            }
        }
        for j in 0..net.layers()[l].bias.len() {
            let orig = net.layers()[l].bias[j];
            net.layers_mut()[l].bias[j] = orig + H;
            let up = loss(net);
            net.layers_mut()[l].bias[j] = orig - H;
            let down = loss(net);
            net.layers_mut()[l].bias[j] = orig;
            worst = worst.max(rel_err(analytic.biases[l][j], (up - down) / (2.0 * H)));
        }
    }
    worst
}

#[test]
fn mlp_backward_matches_central_differences() {
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let sizes = [5, 7, 6, 3];
        let mut net = Mlp::new(&sizes, seed).unwrap();
        let input = Array2::from_shape_fn((4, 5), |_| rng.random_range(-1.5..1.5));
        let og = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
        let cache = net.forward_batch(input.clone()).unwrap();
        let grads = net.backward_batch(&cache, &og).unwrap();
        let worst = worst_error(&mut net, &grads, |n| {
            let out = n.forward_batch(input.clone()).unwrap();
            (out.output() * &og).sum()
        });
        assert!(worst <= 1e-4, "seed {seed}: worst relative error {worst:e}");
    }
}

#[test]
fn single_sample_backward_matches_central_differences() {
    let mut net = Mlp::new(&[3, 4, 4, 2], 9).unwrap();
    let x = [0.3, -0.7, 1.1];
    let og = [0.4, -1.3];
    let (_, cache) = net.forward(&x).unwrap();
    let grads = net.backward(&cache, &og).unwrap();
    let worst = worst_error(&mut net, &grads, |n| {
        let (y, _) = n.forward(&x).unwrap();
        y[0] * og[0] + y[1] * og[1]
    });
    assert!(worst <= 1e-4, "{worst:e}");
}

#[test]
fn trajectory_balance_gradient_matches_central_differences() {
    let grid = GridSpec::new(2, 4, 2).unwrap();
    let env = Env::new(grid, Landscape::preset(MaskPreset::Concave)).unwrap();
    let cfg = TrainConfig {
        hidden_units: 6,
        beta: 4.0,
        reward_floor: 0.05,
        ..TrainConfig::default()
    };
    let mut model = GfnModel::new(&grid, &cfg, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let conds: Vec<Conditioning> = (0..6).map(|_| Conditioning::Preference(sample_preference(2, &mut rng))).collect();
    let batch = sample_batch(&model.policy, &env, conds, 0.3, true, &mut rng).unwrap();
    let bl = tb_batch(&model, &grid, &batch, &cfg, 0).unwrap();

    let policy_grads = bl.policy_grads.clone();
    let log_z = model.log_z.clone();
    let worst_pf = worst_error(&mut model.policy, &policy_grads, |p| {
        let m = GfnModel {
            policy: p.clone(),
            log_z: log_z.clone(),
        };
        tb_batch(&m, &grid, &batch, &cfg, 0).unwrap().mean_loss
    });
    assert!(worst_pf <= 1e-4, "policy: {worst_pf:e}");

    let policy = model.policy.clone();
    let worst_z = worst_error(&mut model.log_z, &bl.log_z_grads, |z| {
        let m = GfnModel {
            policy: policy.clone(),
            log_z: z.clone(),
        };
        tb_batch(&m, &grid, &batch, &cfg, 0).unwrap().mean_loss
    });
    assert!(worst_z <= 1e-4, "log Z: {worst_z:e}");
}
