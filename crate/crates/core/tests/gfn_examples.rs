use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mogfn::conditioning::{cosine_sim, in_focus, Conditioning, FocusGoal, PreferenceVector};
use mogfn::env::{Action, Env, GridSpec, Landscape, MaskPreset};
use mogfn::experiment::{checkpoint, RunConfig};
use mogfn::gfn::{
    hindsight_relabel, log_reward, log_reward_from_scalar, sample_batch, sample_conditional, tb_loss, tb_terms,
    uniform_backward_logprob, CondSource, GfnModel, ReplayBuffer, TrainConfig, Trainer, Trajectory,
};
use mogfn::nnet::Mlp;

fn env(d: usize, h: usize, k: usize, preset: MaskPreset) -> Env {
    Env::new(GridSpec::new(d, h, k).unwrap(), Landscape::preset(preset)).unwrap()
}

fn pref(w: &[f64]) -> Conditioning {
    Conditioning::Preference(PreferenceVector::new(w.to_vec()).unwrap())
}

fn goal(d: &[f64]) -> Conditioning {
    Conditioning::Goal(FocusGoal::new(d.to_vec(), 0.98, 0.2).unwrap())
}

fn zero_net(net: &mut Mlp, final_bias: f64) {
    let n = net.layers().len();
    for (i, l) in net.layers_mut().iter_mut().enumerate() {
        l.weight.fill(0.0);
        l.bias.fill(if i + 1 == n { final_bias } else { 0.0 });
    }
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        n_steps: 30,
        hidden_units: 8,
        warmup_trajectories: 16,
        buffer_capacity: 40,
        log_interval: 5,
        lr_pf: 5e-4,
        ..TrainConfig::default()
    }
}

fn small_trainer(seed: u64) -> Trainer {
    let cfg = TrainConfig { seed, ..small_cfg() };
    let source = CondSource::UniformGoal {
        k: 2,
        threshold: 0.98,
        limit_coef: 0.2,
    };
    Trainer::new(env(2, 6, 2, MaskPreset::Concave), cfg, source).unwrap()
}

#[test]
fn uniform_policy_stops_at_origin_half_the_time() {
    let e = env(1, 2, 1, MaskPreset::Unrestrained);
    let cfg = TrainConfig {
        hidden_units: 4,
        ..TrainConfig::default()
    };
    let mut model = GfnModel::new(e.grid(), &cfg, 0).unwrap();
    zero_net(&mut model.policy, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 100_000;
    let samples = sample_conditional(&model, &e, &pref(&[1.0]), n, true, &mut rng).unwrap();
    let at_origin = samples.iter().filter(|s| s.coords == vec![0]).count() as f64 / n as f64;
    assert!((at_origin - 0.5).abs() < 0.01, "{at_origin}");
}

#[test]
fn full_exploration_is_uniform_over_legal_actions() {
    let e = env(2, 2, 2, MaskPreset::Unrestrained);
    let model = GfnModel::new(e.grid(), &small_cfg(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 30_000;
    let trajs = sample_batch(&model.policy, &e, vec![pref(&[0.5, 0.5]); n], 1.0, true, &mut rng).unwrap();
    let mut first = [0usize; 3];
    for t in &trajs {
        let a = t.actions()[0];
        first[a.index(2)] += 1;
    }
    for c in first {
        let p = c as f64 / n as f64;
        assert!((p - 1.0 / 3.0).abs() < 0.015, "{first:?}");
    }
    // From (1, 0) only increment 1 and stop are legal.
    let from_10: Vec<_> = trajs.iter().filter(|t| t.increments.first() == Some(&0)).collect();
    let stop = from_10.iter().filter(|t| t.increments.len() == 1).count() as f64 / from_10.len() as f64;
    assert!((stop - 0.5).abs() < 0.025, "{stop}");
}

#[test]
fn sampled_trajectories_stay_on_the_grid() {
    let e = env(3, 4, 2, MaskPreset::Unrestrained);
    let model = GfnModel::new(e.grid(), &small_cfg(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let trajs = sample_batch(&model.policy, &e, vec![pref(&[0.2, 0.8]); 5000], 0.5, true, &mut rng).unwrap();
    for t in trajs {
        let rebuilt = Trajectory::from_actions(&e, &t.actions(), t.conditioning.clone(), true).unwrap();
        assert_eq!(rebuilt, t);
        assert!(t.terminal.iter().all(|&c| c < 4));
    }
}

#[test]
fn conditional_sampling_edge_cases() {
    let e = env(2, 5, 2, MaskPreset::Concave);
    let model = GfnModel::new(e.grid(), &small_cfg(), 5).unwrap();
    let c = goal(&[1.0, 1.0]);
    let mut r1 = ChaCha8Rng::seed_from_u64(7);
    assert!(sample_conditional(&model, &e, &c, 0, true, &mut r1).unwrap().is_empty());
    let a = sample_conditional(&model, &e, &c, 50, true, &mut r1).unwrap();
    let mut r2 = ChaCha8Rng::seed_from_u64(7);
    let b = sample_conditional(&model, &e, &c, 50, true, &mut r2).unwrap();
    assert_eq!(a, b);
    for s in a {
        assert!(s.coords.iter().all(|&x| x < 5));
        assert_eq!(s.reward, e.reward(&s.coords).to_vec());
        assert_eq!(s.in_focus, Some(in_focus(&s.reward, c.goal().unwrap())));
    }
}

#[test]
fn backward_logprob_examples() {
    let e = env(2, 4, 2, MaskPreset::Unrestrained);
    let c = pref(&[0.5, 0.5]);
    let stop = Trajectory::from_actions(&e, &[Action::Stop], c.clone(), true).unwrap();
    assert_eq!(uniform_backward_logprob(e.grid(), &stop), 0.0);
    let path = [Action::Increment(0), Action::Increment(1), Action::Stop];
    let t = Trajectory::from_actions(&e, &path, c.clone(), true).unwrap();
    assert!((uniform_backward_logprob(e.grid(), &t) + 2f64.ln()).abs() < 1e-15);
    let swapped = [Action::Increment(1), Action::Increment(0), Action::Stop];
    let t2 = Trajectory::from_actions(&e, &swapped, c, true).unwrap();
    assert_eq!(uniform_backward_logprob(e.grid(), &t2), uniform_backward_logprob(e.grid(), &t));
}

#[test]
fn log_reward_examples() {
    let cfg = TrainConfig::default();
    assert_eq!(log_reward_from_scalar(1.0, &cfg), 0.0);
    assert!((log_reward_from_scalar(0.0, &cfg) - 60.0 * 1e-8f64.ln()).abs() < 1e-9);
    assert!((log_reward_from_scalar(0.0, &cfg) + 1105.2408).abs() < 1e-3);
    let beta4 = TrainConfig { beta: 4.0, ..cfg };
    assert!((log_reward_from_scalar(0.5, &beta4) + 2.772588722239781).abs() < 1e-12);
    let lr = log_reward(&[0.4, 0.8], &pref(&[0.5, 0.5]), &beta4).unwrap();
    assert!((lr - 4.0 * 0.6f64.ln()).abs() < 1e-12);
}

#[test]
fn rigged_log_z_balances_the_single_state_environment() {
    let e = env(1, 1, 1, MaskPreset::Unrestrained);
    let cfg = TrainConfig {
        hidden_units: 3,
        ..TrainConfig::default()
    };
    let mut model = GfnModel::new(e.grid(), &cfg, 0).unwrap();
    let c = pref(&[1.0]);
    let t = Trajectory::from_actions(&e, &[Action::Stop], c.clone(), true).unwrap();
    let target = log_reward(&t.reward, &c, &cfg).unwrap();
    zero_net(&mut model.log_z, target);
    let terms = tb_terms(&model, e.grid(), &t, &cfg).unwrap();
    assert_eq!(terms.sum_log_pf, 0.0);
    assert_eq!(terms.log_pb, 0.0);
    assert_eq!(tb_loss(&model, e.grid(), &t, &cfg).unwrap(), 0.0);
    zero_net(&mut model.log_z, target + 1.5);
    assert!((tb_loss(&model, e.grid(), &t, &cfg).unwrap() - 2.25).abs() < 1e-9);
}

#[test]
fn rigged_log_z_balances_any_trajectory() {
    let e = env(2, 5, 2, MaskPreset::Concave);
    let cfg = TrainConfig {
        hidden_units: 5,
        beta: 4.0,
        ..TrainConfig::default()
    };
    let mut model = GfnModel::new(e.grid(), &cfg, 2).unwrap();
    let path = [Action::Increment(1), Action::Increment(1), Action::Increment(0), Action::Stop];
    let t = Trajectory::from_actions(&e, &path, pref(&[0.3, 0.7]), true).unwrap();
    let before = tb_terms(&model, e.grid(), &t, &cfg).unwrap();
    let rigged = before.log_reward - before.sum_log_pf + before.log_pb;
    zero_net(&mut model.log_z, rigged);
    let after = tb_terms(&model, e.grid(), &t, &cfg).unwrap();
    assert!(after.residual().abs() < 1e-12);
    assert!(after.loss() < 1e-20);
}

proptest! {
    #[test]
    fn tb_loss_is_non_negative(seed in 0u64..200, w in 0.0f64..=1.0) {
        let e = env(2, 4, 2, MaskPreset::Concave);
        let cfg = TrainConfig { hidden_units: 4, ..TrainConfig::default() };
        let model = GfnModel::new(e.grid(), &cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = sample_batch(&model.policy, &e, vec![pref(&[w, 1.0 - w])], 0.2, true, &mut rng).unwrap().remove(0);
        prop_assert!(tb_loss(&model, e.grid(), &t, &cfg).unwrap() >= 0.0);
    }
}

#[test]
fn hindsight_relabels_to_the_achieved_direction() {
    let e = env(2, 5, 2, MaskPreset::Unrestrained);
    let path = [Action::Increment(0), Action::Increment(0), Action::Increment(1), Action::Increment(1), Action::Stop];
    let mut t = Trajectory::from_actions(&e, &path, goal(&[1.0, 0.0]), true).unwrap();
    assert_eq!(t.scalar_reward, 0.0);
    assert!(hindsight_relabel(&mut t, true).unwrap());
    let g = t.conditioning.goal().unwrap();
    assert!(in_focus(&t.reward, g));
    assert!((cosine_sim(&t.reward, g.direction()) - 1.0).abs() <= 1e-12);
    assert!((t.scalar_reward - 1.0).abs() < 1e-12);
    assert_eq!((g.threshold, g.limit_coef), (0.98, 0.2));

    let mut origin = Trajectory::from_actions(&e, &[Action::Stop], goal(&[1.0, 0.0]), true).unwrap();
    assert!(!hindsight_relabel(&mut origin, true).unwrap());
    let mut hit = Trajectory::from_actions(&e, &[Action::Increment(0), Action::Stop], goal(&[1.0, 0.0]), true).unwrap();
    assert!(hindsight_relabel(&mut hit, true).is_err());
    let mut p = Trajectory::from_actions(&e, &[Action::Increment(0), Action::Stop], pref(&[0.5, 0.5]), true).unwrap();
    assert!(hindsight_relabel(&mut p, true).is_err());
}

#[test]
fn buffer_evicts_oldest_records() {
    let e = env(1, 10, 1, MaskPreset::Unrestrained);
    let mut buf = ReplayBuffer::new(5);
    let traj = |n: usize| {
        let mut a = vec![Action::Increment(0); n];
        a.push(Action::Stop);
        Trajectory::from_actions(&e, &a, pref(&[1.0]), true).unwrap()
    };
    for n in 0..8 {
        buf.push(traj(n));
    }
    assert_eq!(buf.len(), 5);
    assert_eq!(buf.pushed(), 8);
    let held: Vec<usize> = buf.iter().map(|t| t.terminal[0]).collect();
    assert_eq!(held, vec![3, 4, 5, 6, 7]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(buf.sample(100, &mut rng).iter().all(|t| t.terminal[0] >= 3));
}

#[test]
fn training_is_deterministic() {
    let mut a = small_trainer(7);
    let mut b = small_trainer(7);
    a.run().unwrap();
    b.run().unwrap();
    assert_eq!(a.model(), b.model());
    assert_eq!(a.log(), b.log());
    assert_eq!(a.hindsight(), b.hindsight());
    let mut c = small_trainer(8);
    c.run().unwrap();
    assert_ne!(a.model(), c.model());
}

#[test]
fn trainer_state_round_trip_is_bit_transparent() {
    let mut straight = small_trainer(3);
    straight.run().unwrap();

    let mut first = small_trainer(3);
    first.run_until(13).unwrap();
    let mut bytes = Vec::new();
    first.write_state(&mut bytes).unwrap();
    let mut resumed = Trainer::read_state(first.env().clone(), first.config().clone(), &mut bytes.as_slice()).unwrap();
    assert_eq!(resumed.step(), 13);
    resumed.run().unwrap();
    assert_eq!(resumed.model(), straight.model());
    assert_eq!(resumed.sampler(), straight.sampler());
    assert_eq!(resumed.log(), straight.log());
    assert_eq!(resumed.hindsight(), straight.hindsight());
}

#[test]
fn checkpoint_file_round_trip_with_tabular_goals() {
    let text = "grid.side = 6\nlandscape.preset = 4-dots\nconditioning.goal_sampler = tabular\ntrain.n_steps = 24\n\
                train.batch_size = 8\ntrain.hidden_units = 8\ntrain.replay_warmup = 16\ntrain.log_interval = 4\n";
    let cfg = RunConfig::parse(text).unwrap();
    let fresh = || Trainer::new(cfg.env().unwrap(), cfg.train.clone(), cfg.source().unwrap()).unwrap();
    let mut straight = fresh();
    straight.run().unwrap();

    let mut first = fresh();
    first.run_until(9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.bin");
    checkpoint::save(&path, &cfg, &first).unwrap();
    let (loaded_cfg, mut resumed) = checkpoint::load(&path).unwrap();
    assert_eq!(loaded_cfg, cfg);
    assert_eq!(resumed.source().tabgs(), first.source().tabgs());
    resumed.run().unwrap();
    assert_eq!(resumed.model(), straight.model());
    assert_eq!(resumed.log(), straight.log());
    assert_eq!(resumed.source().tabgs(), straight.source().tabgs());
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.bin");
    std::fs::write(&path, b"definitely not a checkpoint").unwrap();
    assert!(checkpoint::load(&path).is_err());

    let cfg = RunConfig::parse("grid.side = 4\ntrain.n_steps = 0\ntrain.hidden_units = 4\n").unwrap();
    let t = Trainer::new(cfg.env().unwrap(), cfg.train.clone(), cfg.source().unwrap()).unwrap();
    let good = dir.path().join("good.bin");
    checkpoint::save(&good, &cfg, &t).unwrap();
    let mut bytes = std::fs::read(&good).unwrap();
    bytes[8] ^= 0xff;
    std::fs::write(&path, &bytes).unwrap();
    let err = checkpoint::load(&path).err().unwrap().to_string();
    assert!(err.contains("version"), "{err}");
    let full = std::fs::read(&good).unwrap();
    std::fs::write(&path, &full[..full.len() / 2]).unwrap();
    assert!(checkpoint::load(&path).is_err());
}

#[test]
fn hindsight_stats_hold_over_training() {
    let mut t = small_trainer(1);
    t.run().unwrap();
    let h = t.hindsight();
    assert!(h.relabeled > 0);
    assert_eq!(h.in_focus, h.relabeled);
    assert!(h.max_cosine_error <= 1e-12);
}
