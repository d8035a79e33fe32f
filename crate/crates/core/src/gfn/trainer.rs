use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::{cosine_sim, goal_reward, in_focus, Conditioning, FocusGoal, Mode, PreferenceVector};
use crate::env::{is_zero, Env};
use crate::error::{Error, Result};
use crate::goalsampler::{DirectionSet, TabGs};
use crate::nnet::{soft_update, Adam, Mlp};

use super::buffer::ReplayBuffer;
use super::loss::tb_batch;
use super::rollout::{sample_batch, Trajectory};
use super::source::CondSource;
use super::{GfnModel, TrainConfig};

const STATE_MAGIC: &[u8; 4] = b"GFNT";
const STATE_VERSION: u32 = 1;

/// Rewrites a missed goal to the direction it actually achieved and
/// recomputes its reward. Returns false, leaving the record untouched, when
/// the reward is the zero vector.
pub fn hindsight_relabel(record: &mut Trajectory, shaped: bool) -> Result<bool> {
    let goal = record
        .conditioning
        .goal()
        .ok_or_else(|| Error::Contract("hindsight relabeling needs a goal-conditioned record".into()))?;
    if is_zero(&record.reward) {
        return Ok(false);
    }
    if in_focus(&record.reward, goal) {
        return Err(Error::Contract("record already reached its goal".into()));
    }
    let new_goal = FocusGoal::new(record.reward.clone(), goal.threshold, goal.limit_coef)?;
    record.scalar_reward = goal_reward(&record.reward, &new_goal, shaped);
    record.conditioning = Conditioning::Goal(new_goal);
    Ok(true)
}

/// Running account of every relabeled record.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HindsightStats {
    pub relabeled: u64,
    /// Relabeled records that landed in their new focus region.
    pub in_focus: u64,
    /// Largest `|cos(r, d_new) - 1|` seen.
    pub max_cosine_error: f64,
}

/// One training-log line, averaged over the steps since the previous line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub mean_loss: f64,
    #[serde(rename = "logZ_mean")]
    pub log_z_mean: f64,
    /// Fraction of freshly sampled trajectories that landed in their goal.
    pub goal_accuracy: Option<f64>,
    /// Fraction of the training batches in focus after relabeling.
    pub in_focus_fraction: Option<f64>,
    pub zero_reward_fraction: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Interval {
    steps: u64,
    loss: f64,
    log_z: f64,
    fresh: u64,
    fresh_hits: u64,
    fresh_zero: u64,
    trained: u64,
    trained_in_focus: u64,
}

/// Owns every piece of training state; `run` is resumable and
/// deterministic given the config seed.
#[derive(Clone, Debug)]
pub struct Trainer {
    env: Env,
    cfg: TrainConfig,
    model: GfnModel,
    sampler: Mlp,
    opt_pf: Adam,
    opt_z: Adam,
    buffer: ReplayBuffer,
    source: CondSource,
    rng: ChaCha8Rng,
    step: u64,
    warmed_up: bool,
    log: Vec<LogRecord>,
    interval: Interval,
    hindsight: HindsightStats,
}

impl Trainer {
    pub fn new(env: Env, cfg: TrainConfig, source: CondSource) -> Result<Self> {
        cfg.validate()?;
        let grid = *env.grid();
        if source.objectives() != grid.objectives {
            return Err(Error::Dimension {
                context: "conditioning objectives",
                expected: grid.objectives,
                got: source.objectives(),
            });
        }
        if grid.dims > u8::MAX as usize + 1 {
            return Err(Error::config("grid.dims", "at most 256 dimensions are supported"));
        }
        let model = GfnModel::new(&grid, &cfg, cfg.seed)?;
        let sampler = model.policy.clone();
        let opt_pf = Adam::new(&model.policy, cfg.lr_pf);
        let opt_z = Adam::new(&model.log_z, cfg.lr_z);
        let buffer = ReplayBuffer::new(cfg.buffer_capacity);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Trainer {
            env,
            cfg,
            model,
            sampler,
            opt_pf,
            opt_z,
            buffer,
            source,
            rng,
            step: 0,
            warmed_up: false,
            log: Vec::new(),
            interval: Interval::default(),
            hindsight: HindsightStats::default(),
        })
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &GfnModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut GfnModel {
        &mut self.model
    }

    pub fn sampler(&self) -> &Mlp {
        &self.sampler
    }

    pub fn source(&self) -> &CondSource {
        &self.source
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn hindsight(&self) -> &HindsightStats {
        &self.hindsight
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.cfg.n_steps
    }

    fn on_policy(&self) -> bool {
        self.cfg.buffer_capacity == self.cfg.batch_size
    }

    /// Collects `warmup_trajectories` into the replay buffer; runs once.
    pub fn warmup(&mut self) -> Result<()> {
        if self.warmed_up {
            return Ok(());
        }
        self.warmed_up = true;
        if self.on_policy() {
            return Ok(());
        }
        let mut left = self.cfg.warmup_trajectories;
        while left > 0 {
            let n = left.min(self.cfg.batch_size);
            let trajs = self.collect(n)?;
            for t in &trajs {
                self.source.observe(&t.reward);
            }
            self.buffer.extend(trajs);
            left -= n;
        }
        Ok(())
    }

    fn collect(&mut self, n: usize) -> Result<Vec<Trajectory>> {
        let conds: Vec<Conditioning> = (0..n)
            .map(|_| self.source.draw(&mut self.rng, self.step, self.cfg.n_steps))
            .collect();
        sample_batch(&self.sampler, &self.env, conds, self.cfg.epsilon, self.cfg.shaped_reward, &mut self.rng)
            .map_err(|e| at_step(e, self.step))
    }

    /// One optimization step; returns the batch mean loss.
    pub fn train_step(&mut self) -> Result<f64> {
        self.warmup()?;
        let b = self.cfg.batch_size;
        let fresh = self.collect(b)?;
        for t in &fresh {
            self.source.observe(&t.reward);
            self.interval.fresh += 1;
            if is_zero(&t.reward) {
                self.interval.fresh_zero += 1;
            }
            if let Some(g) = t.conditioning.goal() {
                if in_focus(&t.reward, g) {
                    self.interval.fresh_hits += 1;
                }
            }
        }

        let mut batch = if self.on_policy() {
            fresh
        } else {
            self.buffer.extend(fresh);
            self.buffer.sample(b, &mut self.rng)
        };

        if self.source.mode() == Mode::Goal {
            let n_h = (self.cfg.hindsight_ratio * b as f64).round() as usize;
            if n_h > 0 {
                for i in index::sample(&mut self.rng, b, n_h.min(b)).into_iter() {
                    let t = &mut batch[i];
                    let goal = t.conditioning.goal().expect("goal mode");
                    if is_zero(&t.reward) || in_focus(&t.reward, goal) {
                        continue;
                    }
                    if hindsight_relabel(t, self.cfg.shaped_reward)? {
                        let g = t.conditioning.goal().expect("relabeled to a goal");
                        self.hindsight.relabeled += 1;
                        if in_focus(&t.reward, g) {
                            self.hindsight.in_focus += 1;
                        }
                        let err = (cosine_sim(&t.reward, g.direction()) - 1.0).abs();
                        self.hindsight.max_cosine_error = self.hindsight.max_cosine_error.max(err);
                    }
                }
            }
            for t in &batch {
                self.interval.trained += 1;
                if in_focus(&t.reward, t.conditioning.goal().expect("goal mode")) {
                    self.interval.trained_in_focus += 1;
                }
            }
        }

        let loss = tb_batch(&self.model, self.env.grid(), &batch, &self.cfg, self.step + 1)?;
        self.opt_pf
            .step(&mut self.model.policy, &loss.policy_grads)
            .map_err(|e| at_step(e, self.step + 1))?;
        self.opt_z
            .step(&mut self.model.log_z, &loss.log_z_grads)
            .map_err(|e| at_step(e, self.step + 1))?;
        if !self.model.policy.is_finite() || !self.model.log_z.is_finite() {
            return Err(Error::Training {
                step: self.step + 1,
                msg: "parameters became non-finite".into(),
            });
        }
        soft_update(&mut self.sampler, &self.model.policy, self.cfg.tau)?;

        self.step += 1;
        self.interval.steps += 1;
        self.interval.loss += loss.mean_loss;
        self.interval.log_z += loss.log_z_mean;
        if self.step % self.cfg.log_interval == 0 || self.step == self.cfg.n_steps {
            self.flush_log();
        }
        Ok(loss.mean_loss)
    }

    fn flush_log(&mut self) {
        let iv = std::mem::take(&mut self.interval);
        if iv.steps == 0 {
            return;
        }
        let goal = self.source.mode() == Mode::Goal;
        let frac = |a: u64, n: u64| (n > 0).then(|| a as f64 / n as f64);
        self.log.push(LogRecord {
            step: self.step,
            mean_loss: iv.loss / iv.steps as f64,
            log_z_mean: iv.log_z / iv.steps as f64,
            goal_accuracy: if goal { frac(iv.fresh_hits, iv.fresh) } else { None },
            in_focus_fraction: if goal { frac(iv.trained_in_focus, iv.trained) } else { None },
            zero_reward_fraction: frac(iv.fresh_zero, iv.fresh).unwrap_or(0.0),
        });
    }

    /// Trains until `n_steps` or `stop_at` steps, whichever comes first.
    pub fn run_until(&mut self, stop_at: u64) -> Result<()> {
        let end = stop_at.min(self.cfg.n_steps);
        if self.step < end {
            self.warmup()?;
        }
        while self.step < end {
            self.train_step()?;
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<()> {
        self.run_until(self.cfg.n_steps)
    }

    /// Serializes all mutable training state. The environment and config
    /// are stored by the caller.
    pub fn write_state<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(STATE_MAGIC)?;
        w.write_u32::<LittleEndian>(STATE_VERSION)?;
        w.write_u64::<LittleEndian>(self.step)?;
        w.write_u8(self.warmed_up as u8)?;
        self.model.write(w)?;
        self.sampler.write_params(w)?;
        self.opt_pf.write_state(w)?;
        self.opt_z.write_state(w)?;

        w.write_all(&self.rng.get_seed())?;
        w.write_u64::<LittleEndian>(self.rng.get_stream())?;
        w.write_u128::<LittleEndian>(self.rng.get_word_pos())?;

        write_source(w, &self.source)?;

        w.write_u64::<LittleEndian>(self.buffer.capacity() as u64)?;
        w.write_u64::<LittleEndian>(self.buffer.pushed())?;
        w.write_u64::<LittleEndian>(self.buffer.len() as u64)?;
        for t in self.buffer.iter() {
            write_trajectory(w, t)?;
        }

        w.write_u64::<LittleEndian>(self.log.len() as u64)?;
        for rec in &self.log {
            w.write_u64::<LittleEndian>(rec.step)?;
            w.write_f64::<LittleEndian>(rec.mean_loss)?;
            w.write_f64::<LittleEndian>(rec.log_z_mean)?;
            write_opt(w, rec.goal_accuracy)?;
            write_opt(w, rec.in_focus_fraction)?;
            w.write_f64::<LittleEndian>(rec.zero_reward_fraction)?;
        }

        let iv = &self.interval;
        w.write_u64::<LittleEndian>(iv.steps)?;
        w.write_f64::<LittleEndian>(iv.loss)?;
        w.write_f64::<LittleEndian>(iv.log_z)?;
        for x in [iv.fresh, iv.fresh_hits, iv.fresh_zero, iv.trained, iv.trained_in_focus] {
            w.write_u64::<LittleEndian>(x)?;
        }
        w.write_u64::<LittleEndian>(self.hindsight.relabeled)?;
        w.write_u64::<LittleEndian>(self.hindsight.in_focus)?;
        w.write_f64::<LittleEndian>(self.hindsight.max_cosine_error)
    }

    /// Restores a trainer written by [`Trainer::write_state`] for the same
    /// environment and config.
    pub fn read_state<R: Read>(env: Env, cfg: TrainConfig, r: &mut R) -> Result<Self> {
        cfg.validate()?;
        let bad = |e: std::io::Error| Error::Checkpoint(format!("trainer state: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != STATE_MAGIC {
            return Err(Error::Checkpoint("not a trainer state section".into()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(bad)?;
        if version != STATE_VERSION {
            return Err(Error::Checkpoint(format!("unsupported trainer state version {version}")));
        }
        let step = r.read_u64::<LittleEndian>().map_err(bad)?;
        let warmed_up = r.read_u8().map_err(bad)? != 0;
        let model = GfnModel::read(r)?;
        model.check_shapes(env.grid())?;
        let sampler = Mlp::read_params(r)?;
        if sampler.sizes() != model.policy.sizes() {
            return Err(Error::Checkpoint("sampler shape differs from the policy".into()));
        }
        let opt_pf = Adam::read_state(r, &model.policy)?;
        let opt_z = Adam::read_state(r, &model.log_z)?;

        let mut seed = [0u8; 32];
        r.read_exact(&mut seed).map_err(bad)?;
        let stream = r.read_u64::<LittleEndian>().map_err(bad)?;
        let word_pos = r.read_u128::<LittleEndian>().map_err(bad)?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);

        let source = read_source(r)?;
        if source.objectives() != env.grid().objectives {
            return Err(Error::Checkpoint("conditioning source does not match the grid".into()));
        }

        let capacity = read_len(r)?;
        let pushed = r.read_u64::<LittleEndian>().map_err(bad)?;
        let len = read_len(r)?;
        if capacity == 0 || len > capacity {
            return Err(Error::Checkpoint(format!("buffer holds {len} of capacity {capacity}")));
        }
        let mut records = Vec::with_capacity(len.min(1 << 20));
        for _ in 0..len {
            records.push(read_trajectory(r)?);
        }
        let buffer = ReplayBuffer::from_parts(capacity, records, pushed);

        let n_log = read_len(r)?;
        let mut log = Vec::with_capacity(n_log.min(1 << 20));
        for _ in 0..n_log {
            log.push(LogRecord {
                step: r.read_u64::<LittleEndian>().map_err(bad)?,
                mean_loss: r.read_f64::<LittleEndian>().map_err(bad)?,
                log_z_mean: r.read_f64::<LittleEndian>().map_err(bad)?,
                goal_accuracy: read_opt(r)?,
                in_focus_fraction: read_opt(r)?,
                zero_reward_fraction: r.read_f64::<LittleEndian>().map_err(bad)?,
            });
        }
        let mut interval = Interval {
            steps: r.read_u64::<LittleEndian>().map_err(bad)?,
            loss: r.read_f64::<LittleEndian>().map_err(bad)?,
            log_z: r.read_f64::<LittleEndian>().map_err(bad)?,
            ..Default::default()
        };
        for x in [
            &mut interval.fresh,
            &mut interval.fresh_hits,
            &mut interval.fresh_zero,
            &mut interval.trained,
            &mut interval.trained_in_focus,
        ] {
            *x = r.read_u64::<LittleEndian>().map_err(bad)?;
        }
        let hindsight = HindsightStats {
            relabeled: r.read_u64::<LittleEndian>().map_err(bad)?,
            in_focus: r.read_u64::<LittleEndian>().map_err(bad)?,
            max_cosine_error: r.read_f64::<LittleEndian>().map_err(bad)?,
        };
        Ok(Trainer {
            env,
            cfg,
            model,
            sampler,
            opt_pf,
            opt_z,
            buffer,
            source,
            rng,
            step,
            warmed_up,
            log,
            interval,
            hindsight,
        })
    }
}

fn at_step(e: Error, step: u64) -> Error {
    match e {
        Error::Training { msg, .. } => Error::Training { step, msg },
        other => other,
    }
}

fn ckpt_err(e: std::io::Error) -> Error {
    Error::Checkpoint(format!("trainer state: {e}"))
}

fn read_len<R: Read>(r: &mut R) -> Result<usize> {
    let n = r.read_u64::<LittleEndian>().map_err(ckpt_err)?;
    usize::try_from(n).map_err(|_| Error::Checkpoint(format!("length {n} too large")))
}

fn write_opt<W: Write>(w: &mut W, x: Option<f64>) -> std::io::Result<()> {
    w.write_u8(x.is_some() as u8)?;
    w.write_f64::<LittleEndian>(x.unwrap_or(0.0))
}

fn read_opt<R: Read>(r: &mut R) -> Result<Option<f64>> {
    let some = r.read_u8().map_err(ckpt_err)? != 0;
    let x = r.read_f64::<LittleEndian>().map_err(ckpt_err)?;
    Ok(some.then_some(x))
}

fn write_vec<W: Write>(w: &mut W, v: &[f64]) -> std::io::Result<()> {
    w.write_u64::<LittleEndian>(v.len() as u64)?;
    for &x in v {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_vec<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let n = read_len(r)?;
    if n > 1 << 16 {
        return Err(Error::Checkpoint(format!("implausible vector length {n}")));
    }
    (0..n).map(|_| r.read_f64::<LittleEndian>().map_err(ckpt_err)).collect()
}

fn write_conditioning<W: Write>(w: &mut W, c: &Conditioning) -> std::io::Result<()> {
    match c {
        Conditioning::Preference(p) => {
            w.write_u8(0)?;
            write_vec(w, p.weights())
        }
        Conditioning::Goal(g) => {
            w.write_u8(1)?;
            write_vec(w, g.direction())?;
            w.write_f64::<LittleEndian>(g.threshold)?;
            w.write_f64::<LittleEndian>(g.limit_coef)
        }
    }
}

fn read_conditioning<R: Read>(r: &mut R) -> Result<Conditioning> {
    match r.read_u8().map_err(ckpt_err)? {
        0 => Ok(Conditioning::Preference(PreferenceVector::new(read_vec(r)?)?)),
        1 => {
            let d = read_vec(r)?;
            let threshold = r.read_f64::<LittleEndian>().map_err(ckpt_err)?;
            let limit = r.read_f64::<LittleEndian>().map_err(ckpt_err)?;
            // Stored directions are already unit vectors; rebuild without
            // renormalizing so resumed runs see identical bits.
            Ok(Conditioning::Goal(FocusGoal::from_unit(d, threshold, limit)?))
        }
        t => Err(Error::Checkpoint(format!("unknown conditioning tag {t}"))),
    }
}

fn write_trajectory<W: Write>(w: &mut W, t: &Trajectory) -> std::io::Result<()> {
    w.write_u64::<LittleEndian>(t.increments.len() as u64)?;
    w.write_all(&t.increments)?;
    w.write_u64::<LittleEndian>(t.terminal.len() as u64)?;
    for &c in &t.terminal {
        w.write_u64::<LittleEndian>(c as u64)?;
    }
    write_conditioning(w, &t.conditioning)?;
    write_vec(w, &t.reward)?;
    w.write_f64::<LittleEndian>(t.scalar_reward)
}

fn read_trajectory<R: Read>(r: &mut R) -> Result<Trajectory> {
    let n = read_len(r)?;
    if n > 1 << 24 {
        return Err(Error::Checkpoint(format!("implausible trajectory length {n}")));
    }
    let mut increments = vec![0u8; n];
    r.read_exact(&mut increments).map_err(ckpt_err)?;
    let d = read_len(r)?;
    if d > 256 {
        return Err(Error::Checkpoint(format!("implausible dimension count {d}")));
    }
    let terminal = (0..d)
        .map(|_| r.read_u64::<LittleEndian>().map(|c| c as usize).map_err(ckpt_err))
        .collect::<Result<_>>()?;
    Ok(Trajectory {
        increments,
        terminal,
        conditioning: read_conditioning(r)?,
        reward: read_vec(r)?,
        scalar_reward: r.read_f64::<LittleEndian>().map_err(ckpt_err)?,
    })
}

fn write_source<W: Write>(w: &mut W, s: &CondSource) -> std::io::Result<()> {
    match s {
        CondSource::Preference { k } => {
            w.write_u8(0)?;
            w.write_u64::<LittleEndian>(*k as u64)
        }
        CondSource::UniformGoal { k, threshold, limit_coef } => {
            w.write_u8(1)?;
            w.write_u64::<LittleEndian>(*k as u64)?;
            w.write_f64::<LittleEndian>(*threshold)?;
            w.write_f64::<LittleEndian>(*limit_coef)
        }
        CondSource::Tabular {
            sampler,
            threshold,
            limit_coef,
        } => {
            w.write_u8(2)?;
            w.write_f64::<LittleEndian>(*threshold)?;
            w.write_f64::<LittleEndian>(*limit_coef)?;
            let dirs = sampler.directions();
            w.write_u64::<LittleEndian>(dirs.len() as u64)?;
            for d in dirs.iter() {
                write_vec(w, d)?;
            }
            for &h in sampler.hits() {
                w.write_u64::<LittleEndian>(h)?;
            }
            for &d in sampler.drawn() {
                w.write_u8(d as u8)?;
            }
            w.write_u8(sampler.is_frozen() as u8)
        }
        CondSource::Fixed(c) => {
            w.write_u8(3)?;
            write_conditioning(w, c)
        }
    }
}

fn read_source<R: Read>(r: &mut R) -> Result<CondSource> {
    match r.read_u8().map_err(ckpt_err)? {
        0 => Ok(CondSource::Preference { k: read_len(r)? }),
        1 => Ok(CondSource::UniformGoal {
            k: read_len(r)?,
            threshold: r.read_f64::<LittleEndian>().map_err(ckpt_err)?,
            limit_coef: r.read_f64::<LittleEndian>().map_err(ckpt_err)?,
        }),
        2 => {
            let threshold = r.read_f64::<LittleEndian>().map_err(ckpt_err)?;
            let limit_coef = r.read_f64::<LittleEndian>().map_err(ckpt_err)?;
            let n = read_len(r)?;
            if n == 0 || n > 1 << 24 {
                return Err(Error::Checkpoint(format!("implausible direction count {n}")));
            }
            let dirs = (0..n).map(|_| read_vec(r)).collect::<Result<Vec<_>>>()?;
            let hits = (0..n)
                .map(|_| r.read_u64::<LittleEndian>().map_err(ckpt_err))
                .collect::<Result<Vec<_>>>()?;
            let drawn = (0..n)
                .map(|_| r.read_u8().map(|b| b != 0).map_err(ckpt_err))
                .collect::<Result<Vec<_>>>()?;
            let frozen = r.read_u8().map_err(ckpt_err)? != 0;
            let sampler = TabGs::from_parts(DirectionSet::from_vectors(dirs)?, hits, drawn, frozen)
                .ok_or_else(|| Error::Checkpoint("inconsistent goal-sampler state".into()))?;
            Ok(CondSource::Tabular {
                sampler,
                threshold,
                limit_coef,
            })
        }
        3 => Ok(CondSource::Fixed(read_conditioning(r)?)),
        t => Err(Error::Checkpoint(format!("unknown conditioning source tag {t}"))),
    }
}
