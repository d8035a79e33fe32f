//! Hypergrid sampling environment with tabulated multi-objective rewards and
//! objective-space masks ("unreachable regions").
//!
//! States are points of `{0..H-1}^D`. From the all-zero origin an episode
//! increments one coordinate at a time and ends with `Stop`, so every grid
//! point is a possible terminal and the transition graph is a DAG.

use std::collections::HashSet;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper bound on `H^D` for exhaustive enumeration.
pub const ENUMERATION_CAP: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of grid dimensions `D`.
    pub dims: usize,
    /// Side length `H`.
    pub side: usize,
    /// Number of objectives `K`.
    pub objectives: usize,
}

impl GridSpec {
    pub fn new(dims: usize, side: usize, objectives: usize) -> Result<Self> {
        let spec = GridSpec {
            dims,
            side,
            objectives,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Default grid for `K` objectives: 2 -> 33^2, 3 -> 17^3, 4 -> 9^4.
    pub fn default_for(objectives: usize) -> Result<Self> {
        let side = match objectives {
            2 => 33,
            3 => 17,
            4 => 9,
            k => return Err(Error::config("grid.objectives", format!("no default grid for K = {k}"))),
        };
        GridSpec::new(objectives, side, objectives)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims == 0 {
            return Err(Error::config("grid.dims", "must be at least 1"));
        }
        // H = 1 is allowed as the degenerate single-state grid used in tests.
        if self.side == 0 {
            return Err(Error::config("grid.side", "must be at least 1"));
        }
        if self.objectives < 1 {
            return Err(Error::config("grid.objectives", "must be at least 1"));
        }
        if self.side > u16::MAX as usize {
            return Err(Error::config("grid.side", "too large"));
        }
        Ok(())
    }

    pub fn num_actions(&self) -> usize {
        self.dims + 1
    }

    pub fn stop_index(&self) -> usize {
        self.dims
    }

    /// `H^D`, saturating.
    pub fn num_states(&self) -> u128 {
        (self.side as u128).saturating_pow(self.dims as u32)
    }

    /// Row-major flat index of a coordinate vector (first coordinate slowest).
    pub fn flat_index(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.side + c)
    }

    pub fn coords_of(&self, mut flat: usize) -> Vec<usize> {
        let mut coords = vec![0; self.dims];
        for c in coords.iter_mut().rev() {
            *c = flat % self.side;
            flat /= self.side;
        }
        coords
    }

    pub fn initial_state(&self) -> State {
        State {
            coords: vec![0; self.dims],
            done: false,
        }
    }

    /// Legal-action mask over `Increment(0..D)` followed by `Stop`.
    pub fn legal_action_mask(&self, state: &State) -> Result<Vec<bool>> {
        if state.done {
            return Err(Error::Contract("no actions are legal in a done state".into()));
        }
        let mut mask = Vec::with_capacity(self.num_actions());
        self.write_legal_mask(&state.coords, &mut mask);
        Ok(mask)
    }

    /// Appends the legal mask of a non-done state with `coords`.
    pub fn write_legal_mask(&self, coords: &[usize], mask: &mut Vec<bool>) {
        mask.extend(coords.iter().map(|&c| c + 1 < self.side));
        mask.push(true);
    }

    pub fn apply(&self, state: &State, action: Action) -> Result<State> {
        if state.done {
            return Err(Error::Contract("cannot act from a done state".into()));
        }
        match action {
            Action::Stop => Ok(State {
                coords: state.coords.clone(),
                done: true,
            }),
            Action::Increment(d) => {
                if d >= self.dims {
                    return Err(Error::Contract(format!("dimension {d} out of range")));
                }
                if state.coords[d] + 1 >= self.side {
                    return Err(Error::Contract(format!(
                        "increment of dimension {d} leaves the grid at {:?}",
                        state.coords
                    )));
                }
                let mut coords = state.coords.clone();
                coords[d] += 1;
                Ok(State { coords, done: false })
            }
        }
    }

    /// Parent states with the action leading from each to `state`.
    pub fn parents(&self, state: &State) -> Vec<(State, Action)> {
        if state.done {
            return vec![(
                State {
                    coords: state.coords.clone(),
                    done: false,
                },
                Action::Stop,
            )];
        }
        state
            .coords
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(d, _)| {
                let mut coords = state.coords.clone();
                coords[d] -= 1;
                (State { coords, done: false }, Action::Increment(d))
            })
            .collect()
    }

    /// Number of parents of a non-done state, without allocating.
    pub fn num_parents(&self, coords: &[usize]) -> usize {
        coords.iter().filter(|&&c| c > 0).count()
    }

    pub fn check_enumerable(&self, cap: u64) -> Result<()> {
        let states = self.num_states();
        if states > cap as u128 {
            return Err(Error::EnumerationCap { states, cap });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct State {
    pub coords: Vec<usize>,
    pub done: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Increment(usize),
    Stop,
}

impl Action {
    /// Index into the `D + 1` action logits.
    pub fn index(self, dims: usize) -> usize {
        match self {
            Action::Increment(d) => d,
            Action::Stop => dims,
        }
    }

    pub fn from_index(index: usize, dims: usize) -> Self {
        if index == dims {
            Action::Stop
        } else {
            Action::Increment(index)
        }
    }
}

/// Point in objective space, each component in `[0, 1]`.
pub type RewardVector = Vec<f64>;

pub fn is_zero(r: &[f64]) -> bool {
    r.iter().all(|&x| x == 0.0)
}

/// Exhaustive objective table over every grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveTable {
    objectives: usize,
    /// Row per flat grid index.
    values: Vec<f64>,
}

impl ObjectiveTable {
    pub fn from_fn(grid: &GridSpec, mut f: impl FnMut(&[usize]) -> Vec<f64>) -> Result<Self> {
        grid.check_enumerable(ENUMERATION_CAP)?;
        let n = grid.num_states() as usize;
        let mut values = Vec::with_capacity(n * grid.objectives);
        for flat in 0..n {
            let r = f(&grid.coords_of(flat));
            if r.len() != grid.objectives {
                return Err(Error::Dimension {
                    context: "objective table row",
                    expected: grid.objectives,
                    got: r.len(),
                });
            }
            if let Some(x) = r.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::config("landscape.objectives", format!("value {x} outside [0, 1]")));
            }
            values.extend(r);
        }
        Ok(ObjectiveTable {
            objectives: grid.objectives,
            values,
        })
    }

    /// Parses `i_1 .. i_D r_1 .. r_K` lines; the table must cover every grid
    /// point exactly once. Blank lines and `#` comments are ignored.
    pub fn parse(grid: &GridSpec, text: &str) -> Result<Self> {
        let key = "landscape.table";
        grid.check_enumerable(ENUMERATION_CAP)?;
        let n = grid.num_states() as usize;
        let k = grid.objectives;
        let mut values = vec![f64::NAN; n * k];
        let mut seen = vec![false; n];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != grid.dims + k {
                return Err(Error::config(
                    key,
                    format!("line {}: expected {} fields, got {}", lineno + 1, grid.dims + k, fields.len()),
                ));
            }
            let mut coords = Vec::with_capacity(grid.dims);
            for f in &fields[..grid.dims] {
                let c: usize = f
                    .parse()
                    .map_err(|_| Error::config(key, format!("line {}: bad coordinate `{f}`", lineno + 1)))?;
                if c >= grid.side {
                    return Err(Error::config(key, format!("line {}: coordinate {c} off the grid", lineno + 1)));
                }
                coords.push(c);
            }
            let flat = grid.flat_index(&coords);
            if seen[flat] {
                return Err(Error::config(key, format!("line {}: duplicate entry for {coords:?}", lineno + 1)));
            }
            seen[flat] = true;
            for (j, f) in fields[grid.dims..].iter().enumerate() {
                let x: f64 = f
                    .parse()
                    .map_err(|_| Error::config(key, format!("line {}: bad value `{f}`", lineno + 1)))?;
                if !(0.0..=1.0).contains(&x) {
                    return Err(Error::config(key, format!("line {}: value {x} outside [0, 1]", lineno + 1)));
                }
                values[flat * k + j] = x;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::config(
                key,
                format!("missing entry for {:?}", grid.coords_of(missing)),
            ));
        }
        Ok(ObjectiveTable { objectives: k, values })
    }

    pub fn load(grid: &GridSpec, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(grid, &text)
    }

    pub fn to_text(&self, grid: &GridSpec) -> String {
        let mut out = String::new();
        for (flat, row) in self.values.chunks(self.objectives).enumerate() {
            let coords = grid.coords_of(flat);
            let fields: Vec<String> = coords
                .iter()
                .map(|c| c.to_string())
                .chain(row.iter().map(|x| format!("{x:?}")))
                .collect();
            out.push_str(&fields.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn row(&self, flat: usize) -> Option<&[f64]> {
        self.values.get(flat * self.objectives..(flat + 1) * self.objectives)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ObjectiveSource {
    /// `r_k = coords[k] / (H - 1)`.
    LinearCoords,
    Tabulated(ObjectiveTable),
}

/// Region of the `(r_1, r_2)` plane.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    /// Open disk.
    Disk { center: [f64; 2], radius: f64 },
    /// `r_1 + r_2 > limit`.
    SumAbove(f64),
    Union(Vec<Region>),
    Complement(Box<Region>),
}

impl Region {
    pub fn contains(&self, r1: f64, r2: f64) -> bool {
        match self {
            Region::Disk { center, radius } => {
                let (dx, dy) = (r1 - center[0], r2 - center[1]);
                dx * dx + dy * dy < radius * radius
            }
            Region::SumAbove(limit) => r1 + r2 > *limit,
            Region::Union(parts) => parts.iter().any(|p| p.contains(r1, r2)),
            Region::Complement(inner) => !inner.contains(r1, r2),
        }
    }
}

/// Named unreachable-region presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskPreset {
    Unrestrained,
    RestrainedConvex,
    Concave,
    ConcaveSharp,
    MultiConcave,
    #[serde(rename = "4-dots")]
    FourDots,
    #[serde(rename = "16-dots")]
    SixteenDots,
}

impl MaskPreset {
    pub const ALL: [MaskPreset; 7] = [
        MaskPreset::Unrestrained,
        MaskPreset::RestrainedConvex,
        MaskPreset::Concave,
        MaskPreset::ConcaveSharp,
        MaskPreset::MultiConcave,
        MaskPreset::FourDots,
        MaskPreset::SixteenDots,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MaskPreset::Unrestrained => "unrestrained",
            MaskPreset::RestrainedConvex => "restrained-convex",
            MaskPreset::Concave => "concave",
            MaskPreset::ConcaveSharp => "concave-sharp",
            MaskPreset::MultiConcave => "multi-concave",
            MaskPreset::FourDots => "4-dots",
            MaskPreset::SixteenDots => "16-dots",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    /// The masked region of the preset with default parameters.
    pub fn region(self) -> Option<Region> {
        match self {
            MaskPreset::Unrestrained => None,
            MaskPreset::RestrainedConvex => Some(Region::SumAbove(1.25)),
            MaskPreset::Concave => Some(Region::Disk {
                center: [1.0, 1.0],
                radius: 0.8,
            }),
            // Two offset disks; their boundaries cross on the diagonal and
            // leave a sharp spike of reachable space pointing at (1, 1).
            MaskPreset::ConcaveSharp => Some(Region::Union(vec![
                Region::Disk {
                    center: [1.0, 1.2],
                    radius: 0.75,
                },
                Region::Disk {
                    center: [1.2, 1.0],
                    radius: 0.75,
                },
            ])),
            // A straight front `r1 + r2 = 1.25` with two disjoint round bites.
            MaskPreset::MultiConcave => Some(Region::Union(vec![
                Region::SumAbove(1.25),
                Region::Disk {
                    center: [0.85, 0.4],
                    radius: 0.2,
                },
                Region::Disk {
                    center: [0.4, 0.85],
                    radius: 0.2,
                },
            ])),
            MaskPreset::FourDots => Some(dots_region(4, 0.9, 0.06)),
            MaskPreset::SixteenDots => Some(dots_region(16, 0.9, 0.06)),
        }
    }
}

/// Everything except `count` disks evenly spread over the quarter arc of
/// radius `arc_radius` around the origin.
pub fn dots_region(count: usize, arc_radius: f64, radius: f64) -> Region {
    let disks = (0..count)
        .map(|j| {
            let theta = (j as f64 + 0.5) * FRAC_PI_2 / count as f64;
            Region::Disk {
                center: [arc_radius * theta.cos(), arc_radius * theta.sin()],
                radius,
            }
        })
        .collect();
    Region::Complement(Box::new(Region::Union(disks)))
}

/// Objective source plus the unreachable-region mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Landscape {
    pub name: String,
    pub source: ObjectiveSource,
    /// Masked (nulled) region over the first two objectives.
    pub mask: Option<Region>,
}

impl Landscape {
    pub fn preset(preset: MaskPreset) -> Self {
        Landscape {
            name: preset.name().to_string(),
            source: ObjectiveSource::LinearCoords,
            mask: preset.region(),
        }
    }

    pub fn with_source(mut self, source: ObjectiveSource) -> Self {
        self.source = source;
        self
    }

    pub fn is_masked(&self, r: &[f64]) -> bool {
        match &self.mask {
            None => false,
            Some(region) => {
                let r2 = r.get(1).copied().unwrap_or(0.0);
                region.contains(r[0], r2)
            }
        }
    }

    /// Objective values of a grid point before masking.
    pub fn objectives(&self, grid: &GridSpec, coords: &[usize]) -> Result<RewardVector> {
        match &self.source {
            ObjectiveSource::LinearCoords => {
                if grid.objectives > grid.dims {
                    return Err(Error::config(
                        "grid.objectives",
                        format!("linear-coords needs K <= D, got K = {} > D = {}", grid.objectives, grid.dims),
                    ));
                }
                let denom = (grid.side.max(2) - 1) as f64;
                Ok(coords[..grid.objectives]
                    .iter()
                    .map(|&c| c as f64 / denom)
                    .collect())
            }
            ObjectiveSource::Tabulated(table) => table
                .row(grid.flat_index(coords))
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::config("landscape.table", format!("no entry for {coords:?}"))),
        }
    }

    /// `r` unchanged outside the mask, the zero vector inside it.
    pub fn masked_reward(&self, r: &[f64]) -> RewardVector {
        if self.is_masked(r) {
            vec![0.0; r.len()]
        } else {
            r.to_vec()
        }
    }

    pub fn reward(&self, grid: &GridSpec, coords: &[usize]) -> Result<RewardVector> {
        Ok(self.masked_reward(&self.objectives(grid, coords)?))
    }

    pub fn validate_for(&self, grid: &GridSpec) -> Result<()> {
        if grid.objectives < 2 && self.mask.is_some() {
            return Err(Error::config("landscape.preset", "masks need at least two objectives"));
        }
        match &self.source {
            ObjectiveSource::LinearCoords if grid.objectives > grid.dims => Err(Error::config(
                "grid.objectives",
                format!("linear-coords needs K <= D, got K = {} > D = {}", grid.objectives, grid.dims),
            )),
            ObjectiveSource::Tabulated(t) if t.objectives != grid.objectives => Err(Error::Dimension {
                context: "objective table width",
                expected: grid.objectives,
                got: t.objectives,
            }),
            ObjectiveSource::Tabulated(t) if t.values.len() as u128 != grid.num_states() * grid.objectives as u128 => {
                Err(Error::config("landscape.table", "table size does not match the grid"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Terminal {
    pub coords: Vec<usize>,
    /// Masked reward vector.
    pub reward: RewardVector,
    pub masked: bool,
}

/// Every grid point with its masked reward, in flat-index order.
pub fn enumerate_terminals(grid: &GridSpec, landscape: &Landscape) -> Result<Vec<Terminal>> {
    enumerate_terminals_capped(grid, landscape, ENUMERATION_CAP)
}

pub fn enumerate_terminals_capped(grid: &GridSpec, landscape: &Landscape, cap: u64) -> Result<Vec<Terminal>> {
    grid.check_enumerable(cap)?;
    let n = grid.num_states() as usize;
    (0..n)
        .map(|flat| {
            let coords = grid.coords_of(flat);
            let raw = landscape.objectives(grid, &coords)?;
            let masked = landscape.is_masked(&raw);
            let reward = if masked { vec![0.0; raw.len()] } else { raw };
            Ok(Terminal { coords, reward, masked })
        })
        .collect()
}

/// Grid plus landscape with the masked reward of every grid point cached.
#[derive(Clone, Debug)]
pub struct Env {
    grid: GridSpec,
    landscape: Landscape,
    rewards: Vec<f64>,
}

impl Env {
    pub fn new(grid: GridSpec, landscape: Landscape) -> Result<Self> {
        grid.validate()?;
        landscape.validate_for(&grid)?;
        let rewards = enumerate_terminals(&grid, &landscape)?
            .into_iter()
            .flat_map(|t| t.reward)
            .collect();
        Ok(Env {
            grid,
            landscape,
            rewards,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn landscape(&self) -> &Landscape {
        &self.landscape
    }

    /// Masked reward of the terminal at `coords`.
    pub fn reward(&self, coords: &[usize]) -> &[f64] {
        let k = self.grid.objectives;
        let flat = self.grid.flat_index(coords);
        &self.rewards[flat * k..(flat + 1) * k]
    }

    pub fn terminals(&self) -> Result<Vec<Terminal>> {
        enumerate_terminals(&self.grid, &self.landscape)
    }
}

/// Distinct coordinates, used by tests.
pub fn unique_coords(terminals: &[Terminal]) -> usize {
    terminals.iter().map(|t| &t.coords).collect::<HashSet<_>>().len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(d: usize, h: usize) -> GridSpec {
        GridSpec::new(d, h, d.min(2)).unwrap()
    }

    #[test]
    fn initial_states() {
        assert_eq!(grid(2, 4).initial_state().coords, vec![0, 0]);
        assert_eq!(grid(4, 4).initial_state().coords, vec![0; 4]);
        assert_eq!(grid(3, 4).initial_state(), grid(3, 4).initial_state());
        assert!(!grid(2, 4).initial_state().done);
    }

    #[test]
    fn legal_masks() {
        let g = grid(2, 8);
        let s = State { coords: vec![7, 3], done: false };
        assert_eq!(g.legal_action_mask(&s).unwrap(), vec![false, true, true]);
        let s = State { coords: vec![7, 7], done: false };
        assert_eq!(g.legal_action_mask(&s).unwrap(), vec![false, false, true]);
        assert_eq!(g.legal_action_mask(&g.initial_state()).unwrap(), vec![true, true, true]);
        let done = State { coords: vec![0, 0], done: true };
        assert!(matches!(g.legal_action_mask(&done), Err(Error::Contract(_))));
    }

    #[test]
    fn apply_actions() {
        let g = grid(2, 8);
        let s = g.apply(&g.initial_state(), Action::Increment(1)).unwrap();
        assert_eq!(s.coords, vec![0, 1]);
        let s = g.apply(&State { coords: vec![2, 3], done: false }, Action::Stop).unwrap();
        assert_eq!(s, State { coords: vec![2, 3], done: true });
        let edge = State { coords: vec![0, 7], done: false };
        assert!(g.apply(&edge, Action::Increment(1)).is_err());
        assert!(g.apply(&s, Action::Stop).is_err());
    }

    #[test]
    fn parent_sets() {
        let g = grid(2, 8);
        let mut p: Vec<_> = g
            .parents(&State { coords: vec![1, 1], done: false })
            .into_iter()
            .map(|(s, _)| s.coords)
            .collect();
        p.sort();
        assert_eq!(p, vec![vec![0, 1], vec![1, 0]]);
        let p = g.parents(&State { coords: vec![2, 0], done: false });
        assert_eq!(p, vec![(State { coords: vec![1, 0], done: false }, Action::Increment(0))]);
        assert!(g.parents(&g.initial_state()).is_empty());
        let p = g.parents(&State { coords: vec![3, 2], done: true });
        assert_eq!(p, vec![(State { coords: vec![3, 2], done: false }, Action::Stop)]);
    }

    #[test]
    fn linear_objectives() {
        let g = GridSpec::new(2, 9, 2).unwrap();
        let l = Landscape::preset(MaskPreset::Unrestrained);
        assert_eq!(l.objectives(&g, &[4, 8]).unwrap(), vec![0.5, 1.0]);
        assert_eq!(l.objectives(&g, &[0, 0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn tabulated_objectives_exact() {
        let g = GridSpec::new(2, 2, 2).unwrap();
        let text = "0 0 0.1 0.2\n0 1 0.3 0.4\n1 0 0.5 0.6\n# comment\n1 1 0.7 0.8\n";
        let table = ObjectiveTable::parse(&g, text).unwrap();
        let l = Landscape::preset(MaskPreset::Unrestrained).with_source(ObjectiveSource::Tabulated(table.clone()));
        assert_eq!(l.objectives(&g, &[1, 0]).unwrap(), vec![0.5, 0.6]);
        assert_eq!(l.objectives(&g, &[0, 1]).unwrap(), vec![0.3, 0.4]);
        let again = ObjectiveTable::parse(&g, &table.to_text(&g)).unwrap();
        assert_eq!(again, table);
    }

    #[test]
    fn tabulated_errors() {
        let g = GridSpec::new(2, 2, 2).unwrap();
        let missing = "0 0 0.1 0.2\n0 1 0.3 0.4\n1 0 0.5 0.6\n";
        let err = ObjectiveTable::parse(&g, missing).unwrap_err();
        assert!(err.to_string().contains("missing entry"), "{err}");
        let dup = "0 0 0.1 0.2\n0 0 0.1 0.2\n0 1 0.3 0.4\n1 0 0.5 0.6\n1 1 0 0\n";
        assert!(ObjectiveTable::parse(&g, dup).is_err());
        let range = "0 0 1.1 0.2\n0 1 0.3 0.4\n1 0 0.5 0.6\n1 1 0 0\n";
        assert!(ObjectiveTable::parse(&g, range).is_err());
    }

    #[test]
    fn concave_mask_values() {
        let l = Landscape::preset(MaskPreset::Concave);
        assert_eq!(l.masked_reward(&[0.95, 0.95]), vec![0.0, 0.0]);
        assert_eq!(l.masked_reward(&[0.1, 0.1]), vec![0.1, 0.1]);
        // boundary point (1, 0.2) is at distance exactly 0.8: kept
        assert_eq!(l.masked_reward(&[1.0, 0.2]), vec![1.0, 0.2]);
    }

    #[test]
    fn unrestrained_is_identity() {
        let l = Landscape::preset(MaskPreset::Unrestrained);
        for r in [[0.0, 0.0], [1.0, 1.0], [0.3, 0.9]] {
            assert_eq!(l.masked_reward(&r), r.to_vec());
        }
    }

    #[test]
    fn restrained_convex_threshold() {
        let l = Landscape::preset(MaskPreset::RestrainedConvex);
        assert!(!l.is_masked(&[0.625, 0.625]));
        assert!(l.is_masked(&[0.65, 0.625]));
    }

    #[test]
    fn dots_only_keep_disks() {
        let l = Landscape::preset(MaskPreset::FourDots);
        let theta = FRAC_PI_2 / 8.0;
        assert!(!l.is_masked(&[0.9 * theta.cos(), 0.9 * theta.sin()]));
        assert!(l.is_masked(&[0.5, 0.5]));
        assert!(l.is_masked(&[1.0, 1.0]));
    }

    #[test]
    fn enumeration_sizes() {
        let l = Landscape::preset(MaskPreset::Unrestrained);
        let t = enumerate_terminals(&grid(2, 2), &l).unwrap();
        assert_eq!(t.len(), 4);
        let t = enumerate_terminals(&grid(2, 8), &l).unwrap();
        assert_eq!(t.len(), 64);
        assert_eq!(unique_coords(&t), 64);
        let big = GridSpec::new(8, 33, 2).unwrap();
        assert!(matches!(enumerate_terminals(&big, &l), Err(Error::EnumerationCap { .. })));
    }

    #[test]
    fn flat_index_round_trip() {
        let g = GridSpec::new(3, 5, 3).unwrap();
        for flat in 0..125 {
            assert_eq!(g.flat_index(&g.coords_of(flat)), flat);
        }
    }
}
