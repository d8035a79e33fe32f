//! Flat `key = value` run configuration with dotted sections.
//!
//! ```text
//! # comments start with '#'
//! grid.objectives = 2
//! landscape.preset = concave
//! conditioning.mode = goal
//! train.temperature_beta = 60
//! run.seeds = 0,1,2
//! ```
//!
//! Every key has a default; unknown keys are rejected. Overrides given as
//! `key=value` may drop the section when the remaining name is unambiguous
//! (`n_steps=0` means `train.n_steps=0`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::conditioning::{Conditioning, FocusGoal, Mode, PreferenceVector};
use crate::env::{Env, GridSpec, Landscape, MaskPreset, ObjectiveSource, ObjectiveTable};
use crate::error::{Error, Result};
use crate::gfn::{CondSource, TrainConfig};
use crate::goalsampler::{build_direction_set, DirectionSet, TabGs};
use crate::metrics::ReferenceKind;

/// How goal directions are drawn in goal mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GoalSamplerKind {
    Uniform,
    Tabular,
}

impl GoalSamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            GoalSamplerKind::Uniform => "uniform",
            GoalSamplerKind::Tabular => "tabular",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub preset: MaskPreset,
    /// Tabulated objectives replacing the linear-coordinate objectives.
    pub table: Option<PathBuf>,
    pub mode: Mode,
    pub goal_sampler: GoalSamplerKind,
    pub points_per_axis: usize,
    /// Fixed conditioning payload (a preference or a goal direction) used
    /// for every trajectory instead of sampling one.
    pub fixed: Option<Vec<f64>>,
    pub train: TrainConfig,
    pub eval_samples: usize,
    pub reference: ReferenceKind,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

/// Every recognized key, in the order `to_text` writes them.
pub const KEYS: &[&str] = &[
    "grid.objectives",
    "grid.dims",
    "grid.side",
    "landscape.preset",
    "landscape.table",
    "conditioning.mode",
    "conditioning.goal_sampler",
    "conditioning.points_per_axis",
    "conditioning.fixed",
    "train.batch_size",
    "train.temperature_beta",
    "train.n_steps",
    "train.hidden_layers",
    "train.hidden_units",
    "train.lr_pf",
    "train.lr_z",
    "train.sampling_tau",
    "train.random_action_prob",
    "train.focus_cosine_threshold",
    "train.limit_reward_coef",
    "train.replay_buffer_length",
    "train.replay_warmup",
    "train.hindsight_ratio",
    "train.shaped_reward",
    "train.reward_floor",
    "train.log_interval",
    "eval.n_samples",
    "eval.reference",
    "run.seeds",
    "run.output_dir",
];

impl Default for RunConfig {
    fn default() -> Self {
        let k = 2;
        RunConfig {
            grid: GridSpec::default_for(k).expect("default grid"),
            preset: MaskPreset::Unrestrained,
            table: None,
            mode: Mode::Goal,
            goal_sampler: GoalSamplerKind::Uniform,
            points_per_axis: DirectionSet::default_points_per_axis(k),
            fixed: None,
            train: TrainConfig::default(),
            eval_samples: 5000,
            reference: ReferenceKind::Auto,
            seeds: vec![0, 1, 2],
            output_dir: PathBuf::from("runs"),
        }
    }
}

/// Resolves a possibly section-less key to its full dotted name.
pub fn resolve_key(key: &str) -> Result<&'static str> {
    if let Some(k) = KEYS.iter().find(|k| **k == key) {
        return Ok(k);
    }
    if !key.contains('.') {
        let hits: Vec<&'static str> = KEYS
            .iter()
            .copied()
            .filter(|k| k.rsplit('.').next() == Some(key))
            .collect();
        match hits.len() {
            1 => return Ok(hits[0]),
            0 => {}
            _ => {
                return Err(Error::config(key, format!("ambiguous key; use one of {}", hits.join(", "))));
            }
        }
    }
    Err(Error::config(key, "unknown key"))
}

/// Parses `key = value` lines into an ordered map of resolved keys.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<&'static str, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}", lineno + 1), format!("expected `key = value`, got `{line}`")))?;
        let key = resolve_key(k.trim())?;
        if out.insert(key, v.trim().to_string()).is_some() {
            return Err(Error::config(key, "given twice"));
        }
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got `{v}`"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn join<T: std::fmt::Debug>(xs: &[T]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses text, then applies `key=value` overrides in order.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut pairs = parse_pairs(text)?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::config(o.as_str(), "override must look like key=value"))?;
            pairs.insert(resolve_key(k.trim())?, v.trim().to_string());
        }
        Self::from_pairs(&pairs)
    }

    pub fn from_pairs(pairs: &BTreeMap<&'static str, String>) -> Result<Self> {
        let get = |k: &str| pairs.get(k).map(String::as_str);
        let mut cfg = RunConfig::default();

        let k: usize = match get("grid.objectives") {
            Some(v) => parse_num("grid.objectives", v)?,
            None => 2,
        };
        let (dims, side) = match (get("grid.dims"), get("grid.side")) {
            (Some(d), Some(h)) => (parse_num("grid.dims", d)?, parse_num("grid.side", h)?),
            (d, h) => {
                let def = GridSpec::default_for(k)?;
                (
                    d.map(|v| parse_num("grid.dims", v)).transpose()?.unwrap_or(def.dims),
                    h.map(|v| parse_num("grid.side", v)).transpose()?.unwrap_or(def.side),
                )
            }
        };
        cfg.grid = GridSpec::new(dims, side, k)?;
        cfg.points_per_axis = DirectionSet::default_points_per_axis(k);

        for (&key, v) in pairs {
            let v = v.as_str();
            let t = &mut cfg.train;
            match key {
                "grid.objectives" | "grid.dims" | "grid.side" => {}
                "landscape.preset" => {
                    cfg.preset = MaskPreset::parse(v).ok_or_else(|| {
                        let names: Vec<&str> = MaskPreset::ALL.iter().map(|p| p.name()).collect();
                        Error::config(key, format!("unknown preset `{v}`; expected one of {}", names.join(", ")))
                    })?
                }
                "landscape.table" => cfg.table = (!v.is_empty()).then(|| PathBuf::from(v)),
                "conditioning.mode" => {
                    cfg.mode = match v {
                        "goal" => Mode::Goal,
                        "preference" => Mode::Preference,
                        _ => return Err(Error::config(key, format!("expected goal or preference, got `{v}`"))),
                    }
                }
                "conditioning.goal_sampler" => {
                    cfg.goal_sampler = match v {
                        "uniform" => GoalSamplerKind::Uniform,
                        "tabular" => GoalSamplerKind::Tabular,
                        _ => return Err(Error::config(key, format!("expected uniform or tabular, got `{v}`"))),
                    }
                }
                "conditioning.points_per_axis" => cfg.points_per_axis = parse_num(key, v)?,
                "conditioning.fixed" => cfg.fixed = (!v.is_empty()).then(|| parse_list(key, v)).transpose()?,
                "train.batch_size" => t.batch_size = parse_num(key, v)?,
                "train.temperature_beta" => t.beta = parse_num(key, v)?,
                "train.n_steps" => t.n_steps = parse_num(key, v)?,
                "train.hidden_layers" => t.hidden_layers = parse_num(key, v)?,
                "train.hidden_units" => t.hidden_units = parse_num(key, v)?,
                "train.lr_pf" => t.lr_pf = parse_num(key, v)?,
                "train.lr_z" => t.lr_z = parse_num(key, v)?,
                "train.sampling_tau" => t.tau = parse_num(key, v)?,
                "train.random_action_prob" => t.epsilon = parse_num(key, v)?,
                "train.focus_cosine_threshold" => t.focus_cosine_threshold = parse_num(key, v)?,
                "train.limit_reward_coef" => t.limit_reward_coef = parse_num(key, v)?,
                "train.replay_buffer_length" => t.buffer_capacity = parse_num(key, v)?,
                "train.replay_warmup" => t.warmup_trajectories = parse_num(key, v)?,
                "train.hindsight_ratio" => t.hindsight_ratio = parse_num(key, v)?,
                "train.shaped_reward" => t.shaped_reward = parse_bool(key, v)?,
                "train.reward_floor" => t.reward_floor = parse_num(key, v)?,
                "train.log_interval" => t.log_interval = parse_num(key, v)?,
                "eval.n_samples" => cfg.eval_samples = parse_num(key, v)?,
                "eval.reference" => {
                    cfg.reference = ReferenceKind::parse(v)
                        .ok_or_else(|| Error::config(key, format!("expected front, faces or auto, got `{v}`")))?
                }
                "run.seeds" => cfg.seeds = parse_list(key, v)?,
                "run.output_dir" => cfg.output_dir = PathBuf::from(v),
                other => unreachable!("resolved key {other} has no handler"),
            }
        }
        cfg.validate()?;
        cfg.train.seed = cfg.seeds[0];
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.grid.objectives < 2 {
            return Err(Error::config("grid.objectives", "need at least two objectives"));
        }
        self.train.validate()?;
        if self.points_per_axis < 2 {
            return Err(Error::config("conditioning.points_per_axis", "must be at least 2"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("run.seeds", "need at least one seed"));
        }
        if let Some(f) = &self.fixed {
            if f.len() != self.grid.objectives {
                return Err(Error::config(
                    "conditioning.fixed",
                    format!("expected {} values, got {}", self.grid.objectives, f.len()),
                ));
            }
            self.fixed_conditioning()?;
        }
        if self.table.is_none() && self.grid.objectives > self.grid.dims {
            return Err(Error::config(
                "grid.objectives",
                format!("linear-coords needs K <= D, got K = {} > D = {}", self.grid.objectives, self.grid.dims),
            ));
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("grid.objectives", self.grid.objectives.to_string());
        put("grid.dims", self.grid.dims.to_string());
        put("grid.side", self.grid.side.to_string());
        put("landscape.preset", self.preset.name().to_string());
        put(
            "landscape.table",
            self.table.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        put("conditioning.mode", self.mode.name().to_string());
        put("conditioning.goal_sampler", self.goal_sampler.name().to_string());
        put("conditioning.points_per_axis", self.points_per_axis.to_string());
        put("conditioning.fixed", self.fixed.as_deref().map(join).unwrap_or_default());
        put("train.batch_size", t.batch_size.to_string());
        put("train.temperature_beta", format!("{:?}", t.beta));
        put("train.n_steps", t.n_steps.to_string());
        put("train.hidden_layers", t.hidden_layers.to_string());
        put("train.hidden_units", t.hidden_units.to_string());
        put("train.lr_pf", format!("{:?}", t.lr_pf));
        put("train.lr_z", format!("{:?}", t.lr_z));
        put("train.sampling_tau", format!("{:?}", t.tau));
        put("train.random_action_prob", format!("{:?}", t.epsilon));
        put("train.focus_cosine_threshold", format!("{:?}", t.focus_cosine_threshold));
        put("train.limit_reward_coef", format!("{:?}", t.limit_reward_coef));
        put("train.replay_buffer_length", t.buffer_capacity.to_string());
        put("train.replay_warmup", t.warmup_trajectories.to_string());
        put("train.hindsight_ratio", format!("{:?}", t.hindsight_ratio));
        put("train.shaped_reward", t.shaped_reward.to_string());
        put("train.reward_floor", format!("{:?}", t.reward_floor));
        put("train.log_interval", t.log_interval.to_string());
        put("eval.n_samples", self.eval_samples.to_string());
        put("eval.reference", self.reference.name().to_string());
        put("run.seeds", join(&self.seeds));
        put("run.output_dir", self.output_dir.display().to_string());
        out
    }

    /// Copy restricted to a single seed, which also seeds training.
    pub fn for_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seeds = vec![seed];
        c.train.seed = seed;
        c
    }

    pub fn landscape(&self) -> Result<Landscape> {
        let base = Landscape::preset(self.preset);
        match &self.table {
            None => Ok(base),
            Some(path) => Ok(base.with_source(ObjectiveSource::Tabulated(ObjectiveTable::load(&self.grid, path)?))),
        }
    }

    pub fn env(&self) -> Result<Env> {
        Env::new(self.grid, self.landscape()?)
    }

    pub fn fixed_conditioning(&self) -> Result<Option<Conditioning>> {
        let Some(f) = &self.fixed else { return Ok(None) };
        Ok(Some(match self.mode {
            Mode::Preference => Conditioning::Preference(PreferenceVector::normalized(f.clone())?),
            Mode::Goal => Conditioning::Goal(FocusGoal::new(
                f.clone(),
                self.train.focus_cosine_threshold,
                self.train.limit_reward_coef,
            )?),
        }))
    }

    /// Fresh conditioning source for training.
    pub fn source(&self) -> Result<CondSource> {
        if let Some(c) = self.fixed_conditioning()? {
            return Ok(CondSource::Fixed(c));
        }
        let k = self.grid.objectives;
        let (threshold, limit_coef) = (self.train.focus_cosine_threshold, self.train.limit_reward_coef);
        Ok(match (self.mode, self.goal_sampler) {
            (Mode::Preference, _) => CondSource::Preference { k },
            (Mode::Goal, GoalSamplerKind::Uniform) => CondSource::UniformGoal {
                k,
                threshold,
                limit_coef,
            },
            (Mode::Goal, GoalSamplerKind::Tabular) => CondSource::Tabular {
                sampler: TabGs::new(build_direction_set(k, self.points_per_axis)),
                threshold,
                limit_coef,
            },
        })
    }
}
