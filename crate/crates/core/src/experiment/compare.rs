//! Comparison grids: variants × landscapes × seeds, one independent cell per
//! combination.
//!
//! A grid file is a run config plus `compare.*` lines:
//!
//! ```text
//! compare.preset = landscapes      # landscapes | replay | limit-coef | goal-sampler
//! compare.landscapes = all        # or a comma list of preset names
//! compare.variant.wide = train.hidden_units=256; train.lr_pf=3e-4
//! ```
//!
//! Explicit `compare.variant.<name>` lines replace the preset's variants.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::MaskPreset;
use crate::error::{Error, Result};
use crate::metrics::{MeanSem, MetricReport};

use super::config::RunConfig;
use super::scatter::{scatter_svg, Coloring};
use super::{run_seed, write_file, write_seed_outputs};

#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub name: String,
    /// `key=value` overrides applied on top of the base config.
    pub overrides: Vec<String>,
}

impl Variant {
    pub fn new(name: &str, overrides: &[&str]) -> Self {
        Variant {
            name: name.to_string(),
            overrides: overrides.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Named variant sets.
pub fn preset_variants(name: &str, base: &RunConfig) -> Result<Vec<Variant>> {
    Ok(match name {
        "landscapes" => vec![
            Variant::new("pref-cond", &["conditioning.mode=preference"]),
            Variant::new("goal-cond", &["conditioning.mode=goal"]),
        ],
        "replay" => vec![
            Variant::new("replay", &["conditioning.mode=goal"]),
            Variant {
                name: "on-policy".into(),
                overrides: vec![
                    "conditioning.mode=goal".into(),
                    format!("train.replay_buffer_length={}", base.train.batch_size),
                ],
            },
        ],
        "limit-coef" => [1.0, 0.5, 0.2, 0.05]
            .iter()
            .map(|m| Variant {
                name: format!("m_g={m}"),
                overrides: vec!["conditioning.mode=goal".into(), format!("train.limit_reward_coef={m}")],
            })
            .collect(),
        "goal-sampler" => vec![
            Variant::new("uniform-gs", &["conditioning.mode=goal", "conditioning.goal_sampler=uniform"]),
            Variant::new("tab-gs", &["conditioning.mode=goal", "conditioning.goal_sampler=tabular"]),
        ],
        _ => {
            return Err(Error::config(
                "compare.preset",
                format!("unknown preset `{name}`; expected landscapes, replay, limit-coef or goal-sampler"),
            ))
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareGrid {
    pub base: RunConfig,
    pub variants: Vec<Variant>,
    pub landscapes: Vec<MaskPreset>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cell {
    pub variant: usize,
    pub landscape: MaskPreset,
    pub seed: u64,
}

fn parse_landscapes(v: &str) -> Result<Vec<MaskPreset>> {
    if v.trim() == "all" {
        return Ok(MaskPreset::ALL.to_vec());
    }
    v.split(',')
        .map(|s| {
            let s = s.trim();
            MaskPreset::parse(s).ok_or_else(|| Error::config("compare.landscapes", format!("unknown preset `{s}`")))
        })
        .collect()
}

impl CompareGrid {
    /// Parses a grid file; `overrides` apply to the base run config.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut base_text = String::new();
        let mut preset = "landscapes".to_string();
        let mut landscapes = None;
        let mut explicit = Vec::new();
        for line in text.lines() {
            let content = line.split('#').next().unwrap_or("").trim();
            let Some(rest) = content.strip_prefix("compare.") else {
                base_text.push_str(line);
                base_text.push('\n');
                continue;
            };
            let (key, value) = rest
                .split_once('=')
                .ok_or_else(|| Error::config(content, "expected key = value"))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "preset" => preset = value.to_string(),
                "landscapes" => landscapes = Some(parse_landscapes(value)?),
                _ => match key.strip_prefix("variant.") {
                    Some(name) if !name.is_empty() => explicit.push(Variant {
                        name: name.to_string(),
                        overrides: value
                            .split(';')
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(String::from)
                            .collect(),
                    }),
                    _ => return Err(Error::config(format!("compare.{key}"), "unknown key")),
                },
            }
        }
        let base = RunConfig::parse_with_overrides(&base_text, overrides)?;
        let variants = if explicit.is_empty() {
            preset_variants(&preset, &base)?
        } else {
            explicit
        };
        Ok(CompareGrid {
            landscapes: landscapes.unwrap_or_else(|| MaskPreset::ALL.to_vec()),
            base,
            variants,
        })
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, overrides)
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for variant in 0..self.variants.len() {
            for &landscape in &self.landscapes {
                for &seed in &self.base.seeds {
                    out.push(Cell {
                        variant,
                        landscape,
                        seed,
                    });
                }
            }
        }
        out
    }

    /// Resolved config of one cell.
    pub fn cell_config(&self, cell: &Cell) -> Result<RunConfig> {
        let mut overrides = self.variants[cell.variant].overrides.clone();
        overrides.push(format!("landscape.preset={}", cell.landscape.name()));
        let cfg = RunConfig::parse_with_overrides(&self.base.to_text(), &overrides)?;
        Ok(cfg.for_seed(cell.seed))
    }

    pub fn cell_dir(&self, root: &Path, cell: &Cell) -> PathBuf {
        root.join(&self.variants[cell.variant].name)
            .join(cell.landscape.name())
            .join(format!("seed-{}", cell.seed))
    }
}

/// One line of `report.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub variant: String,
    pub landscape: String,
    pub seed: u64,
    pub metrics: Option<MetricReport>,
    pub error: Option<String>,
}

impl CellRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

fn run_cell(grid: &CompareGrid, cell: &Cell, dir: Option<&Path>) -> Result<MetricReport> {
    let cfg = grid.cell_config(cell)?;
    let outcome = run_seed(&cfg, cell.seed)?;
    if let Some(dir) = dir {
        write_seed_outputs(dir, &cfg, &outcome)?;
        let svg = scatter_svg(&outcome.evaluation.samples, Coloring::Angle)?;
        write_file(&dir.join("scatter.svg"), svg.as_bytes())?;
    }
    Ok(outcome.evaluation.report)
}

/// Runs every cell. A failing (or panicking) cell is recorded with its error
/// and a `FAILED` marker file; the remaining cells still run.
pub fn run_compare(grid: &CompareGrid, out: Option<&Path>, progress: &mut dyn Write) -> Result<Vec<CellRecord>> {
    let mut records = Vec::new();
    for cell in grid.cells() {
        let dir = out.map(|o| grid.cell_dir(o, &cell));
        let result = catch_unwind(AssertUnwindSafe(|| run_cell(grid, &cell, dir.as_deref())))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Err(Error::Contract(format!("cell panicked: {msg}")))
            });
        let variant = grid.variants[cell.variant].name.clone();
        let record = match result {
            Ok(m) => CellRecord {
                variant,
                landscape: cell.landscape.name().into(),
                seed: cell.seed,
                metrics: Some(m),
                error: None,
            },
            Err(e) => CellRecord {
                variant,
                landscape: cell.landscape.name().into(),
                seed: cell.seed,
                metrics: None,
                error: Some(e.to_string()),
            },
        };
        if let (Some(dir), Some(err)) = (&dir, &record.error) {
            write_file(&dir.join("FAILED"), format!("{err}\n").as_bytes())?;
        }
        let status = record.error.as_deref().unwrap_or("ok");
        let _ = writeln!(
            progress,
            "cell {} / {} / seed {}: {status}",
            record.variant, record.landscape, record.seed
        );
        records.push(record);
    }
    if let Some(out) = out {
        write_file(&out.join("report.jsonl"), super::to_jsonl(&records)?.as_bytes())?;
        write_file(&out.join("table.txt"), render_table(grid, &records).as_bytes())?;
    }
    Ok(records)
}

/// Mean ± sem of one metric over the successful seeds of a cell group.
pub fn group_stat(
    records: &[CellRecord],
    variant: &str,
    landscape: &str,
    metric: fn(&MetricReport) -> Option<f64>,
) -> Option<MeanSem> {
    let values: Vec<f64> = records
        .iter()
        .filter(|r| r.variant == variant && r.landscape == landscape)
        .filter_map(|r| r.metrics.as_ref().and_then(metric))
        .collect();
    MeanSem::of(&values)
}

pub const TABLE_METRICS: &[(&str, fn(&MetricReport) -> Option<f64>)] = &[
    ("pc_ent", |m| m.pc_ent),
    ("avg_pcc", |m| m.avg_pcc),
    ("igd", |m| m.igd),
    ("goal_accuracy", |m| m.goal_accuracy),
];

/// Aligned text table, one block per metric, variants as rows and
/// landscapes as columns. Failed seeds are counted next to the value.
pub fn render_table(grid: &CompareGrid, records: &[CellRecord]) -> String {
    let mut out = String::new();
    let name_w = grid.variants.iter().map(|v| v.name.len()).max().unwrap_or(0).max(7);
    for (metric, f) in TABLE_METRICS {
        let mut rows: Vec<Vec<String>> = Vec::new();
        for v in &grid.variants {
            let mut row = vec![v.name.clone()];
            for l in &grid.landscapes {
                let failed = records
                    .iter()
                    .filter(|r| r.variant == v.name && r.landscape == l.name() && r.failed())
                    .count();
                let mut cell = match group_stat(records, &v.name, l.name(), *f) {
                    Some(s) => s.to_string(),
                    None if failed > 0 => "failed".into(),
                    None => "n/a".into(),
                };
                if failed > 0 && cell != "failed" {
                    let _ = write!(cell, " ({failed} failed)");
                }
                row.push(cell);
            }
            rows.push(row);
        }
        let mut header = vec![metric.to_string()];
        header.extend(grid.landscapes.iter().map(|l| l.name().to_string()));
        let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
        widths[0] = widths[0].max(name_w);
        for row in &rows {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}", w = *w))
                .collect::<Vec<_>>()
                .join(" | ")
                .trim_end()
                .to_string()
        };
        let _ = writeln!(out, "{}", line(&header));
        let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
        for row in &rows {
            let _ = writeln!(out, "{}", line(row));
        }
        out.push('\n');
    }
    out
}
