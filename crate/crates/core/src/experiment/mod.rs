//! Seeded training / evaluation runs, comparison grids, checkpoints and the
//! files they produce.

pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod scatter;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::{Conditioning, FocusGoal, Mode, PreferenceVector};
use crate::error::{Error, Result};
use crate::gfn::{sample_many, Trainer};
use crate::metrics::{exact_distribution, reference_points, true_front, AggregateReport, MetricReport, Sample};

pub use config::{GoalSamplerKind, RunConfig};

/// One line of a sample log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub seed: u64,
    pub mode: Mode,
    /// Preference weights or goal direction.
    pub conditioning: Vec<f64>,
    pub coords: Vec<usize>,
    pub r: Vec<f64>,
    pub in_focus: Option<bool>,
    pub scalar_reward: f64,
}

/// Report of one evaluated seed, with the resolved config echoed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub config: String,
    pub seed: u64,
    pub metrics: MetricReport,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: MetricReport,
    pub samples: Vec<SampleRecord>,
}

pub struct RunOutcome {
    pub seed: u64,
    pub trainer: Trainer,
    pub evaluation: Evaluation,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Serializes items as JSON lines.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_file(path, to_jsonl(items)?.as_bytes())
}

pub fn read_sample_log(path: &Path) -> Result<Vec<SampleRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Output directory of one seed below `root`.
pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed-{seed}"))
}

/// Trains one seed to completion.
pub fn train_seed(cfg: &RunConfig, seed: u64) -> Result<Trainer> {
    let cfg = cfg.for_seed(seed);
    let mut trainer = Trainer::new(cfg.env()?, cfg.train.clone(), cfg.source()?)?;
    trainer.run()?;
    Ok(trainer)
}

/// Samples `n` terminals from the learned policy, drawing one conditioning
/// per sample from the trainer's source (or using `conditionings` in turn).
pub fn evaluate(
    trainer: &Trainer,
    cfg: &RunConfig,
    n: usize,
    conditionings: Option<&[Conditioning]>,
    seed: u64,
) -> Result<Evaluation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let conds: Vec<Conditioning> = match conditionings {
        Some([]) => return Err(Error::config("eval.conditionings", "empty conditioning set")),
        Some(list) => (0..n).map(|i| list[i % list.len()].clone()).collect(),
        None => (0..n).map(|_| trainer.source().draw_eval(&mut rng)).collect(),
    };
    let trajs = sample_many(trainer.model(), trainer.env(), conds, trainer.config().shaped_reward, &mut rng)?;
    let refs = reference_points(trainer.env().grid(), trainer.env().landscape(), cfg.reference)?;
    let samples: Vec<Sample> = trajs
        .iter()
        .map(|t| Sample {
            reward: t.reward.clone(),
            conditioning: t.conditioning.clone(),
        })
        .collect();
    let report = MetricReport::compute(&samples, &refs);
    let records = trajs
        .into_iter()
        .map(|t| SampleRecord {
            seed,
            mode: t.conditioning.mode(),
            conditioning: t.conditioning.payload().to_vec(),
            in_focus: t.conditioning.goal().map(|g| crate::conditioning::in_focus(&t.reward, g)),
            coords: t.terminal,
            r: t.reward,
            scalar_reward: t.scalar_reward,
        })
        .collect();
    Ok(Evaluation {
        report,
        samples: records,
    })
}

/// Writes checkpoint, training log, sample log and report of one seed.
pub fn write_seed_outputs(dir: &Path, cfg: &RunConfig, outcome: &RunOutcome) -> Result<()> {
    let cfg = cfg.for_seed(outcome.seed);
    checkpoint::save(&dir.join("checkpoint.bin"), &cfg, &outcome.trainer)?;
    write_jsonl(&dir.join("train_log.jsonl"), outcome.trainer.log())?;
    write_jsonl(&dir.join("samples.jsonl"), &outcome.evaluation.samples)?;
    let report = SeedReport {
        config: cfg.to_text(),
        seed: outcome.seed,
        metrics: outcome.evaluation.report.clone(),
    };
    write_file(&dir.join("report.json"), serde_json::to_string_pretty(&report)?.as_bytes())
}

/// Trains and evaluates one seed.
pub fn run_seed(cfg: &RunConfig, seed: u64) -> Result<RunOutcome> {
    let trainer = train_seed(cfg, seed)?;
    let evaluation = evaluate(&trainer, cfg, cfg.eval_samples, None, seed)?;
    Ok(RunOutcome {
        seed,
        trainer,
        evaluation,
    })
}

/// Trains and evaluates every configured seed, writing per-seed outputs and
/// an aggregate report below `out`.
pub fn run_all(cfg: &RunConfig, out: &Path, progress: &mut dyn Write) -> Result<AggregateReport> {
    let mut reports = Vec::new();
    for &seed in &cfg.seeds {
        let outcome = run_seed(cfg, seed)?;
        let dir = seed_dir(out, seed);
        write_seed_outputs(&dir, cfg, &outcome)?;
        let _ = writeln!(progress, "seed {seed}: wrote {}", dir.display());
        reports.push(outcome.evaluation.report);
    }
    let agg = AggregateReport::of(&reports);
    write_file(&out.join("aggregate.json"), serde_json::to_string_pretty(&agg)?.as_bytes())?;
    Ok(agg)
}

/// Enumerated Pareto front and exact terminal distribution for one
/// conditioning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleOutput {
    pub front: Vec<Vec<f64>>,
    pub conditioning: Vec<f64>,
    pub distribution: Vec<ExactEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactEntry {
    pub coords: Vec<usize>,
    pub r: Vec<f64>,
    pub p: f64,
}

/// The conditioning the oracle uses: the configured fixed payload, else the
/// uniform preference or the diagonal goal.
pub fn oracle_conditioning(cfg: &RunConfig) -> Result<Conditioning> {
    if let Some(c) = cfg.fixed_conditioning()? {
        return Ok(c);
    }
    let k = cfg.grid.objectives;
    Ok(match cfg.mode {
        Mode::Preference => Conditioning::Preference(PreferenceVector::normalized(vec![1.0; k])?),
        Mode::Goal => Conditioning::Goal(FocusGoal::new(
            vec![1.0; k],
            cfg.train.focus_cosine_threshold,
            cfg.train.limit_reward_coef,
        )?),
    })
}

pub fn oracle(cfg: &RunConfig) -> Result<OracleOutput> {
    let env = cfg.env()?;
    let front = true_front(env.grid(), env.landscape())?;
    let cond = oracle_conditioning(cfg)?;
    let t = &cfg.train;
    let p = exact_distribution(env.grid(), env.landscape(), &cond, t.beta, t.shaped_reward, t.reward_floor)?;
    let distribution = env
        .terminals()?
        .into_iter()
        .zip(p)
        .map(|(term, p)| ExactEntry {
            coords: term.coords,
            r: term.reward,
            p,
        })
        .collect();
    Ok(OracleOutput {
        front,
        conditioning: cond.payload().to_vec(),
        distribution,
    })
}

/// Writes `front.jsonl` and `exact_distribution.jsonl` below `out`.
pub fn write_oracle(out: &Path, o: &OracleOutput) -> Result<()> {
    write_jsonl(&out.join("front.jsonl"), &o.front)?;
    write_jsonl(&out.join("exact_distribution.jsonl"), &o.distribution)
}
