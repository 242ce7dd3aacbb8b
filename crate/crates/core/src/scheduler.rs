//! Block-to-processor scheduling for the per-block null-space phase.
//!
//! Blocks are split into small, medium and large classes by dimension. Small
//! blocks run on one processor each and are placed by the longest-processing-
//! time rule; medium blocks get a contiguous subgroup sized in proportion to
//! their dimension; large blocks use every processor. A cyclic distribution
//! and an exhaustive optimum serve as baselines.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::seeded_rng;

pub const LOADS_SCHEMA: &str = "nucsolve.loads/1";

/// Exhaustive search refuses spaces larger than this.
pub const BRUTE_FORCE_CAP: f64 = 2e7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("n_procs must be at least 1")]
    NoProcessors,
    #[error("thresholds must satisfy 0 < small_max_dim < medium_max_dim")]
    InvalidThresholds,
    #[error("block {id}: {msg}")]
    InvalidLoad { id: usize, msg: String },
    #[error("assignment does not cover block {0}")]
    UncoveredBlock(usize),
    #[error("assignment uses processor {proc} but n_procs is {n_procs}")]
    ProcessorOutOfRange { proc: usize, n_procs: usize },
    #[error("search space of {size:.3e} assignments exceeds the cap of {BRUTE_FORCE_CAP:e}")]
    SearchTooLarge { size: f64 },
    #[error("unknown load profile '{0}'")]
    UnknownProfile(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockLoad {
    pub id: usize,
    pub dim: usize,
    /// Estimated flop count.
    pub work: f64,
    /// Estimated communication volume per participating processor.
    pub comm_weight: f64,
}

impl BlockLoad {
    /// Dense-factorization work model: `work = dim^3`, `comm = dim^2`.
    pub fn from_dim(id: usize, dim: usize) -> Self {
        let d = dim as f64;
        Self { id, dim, work: d * d * d, comm_weight: d * d }
    }

    fn validate(&self) -> Result<(), ScheduleError> {
        let bad = |msg: &str| Err(ScheduleError::InvalidLoad { id: self.id, msg: msg.into() });
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if !(self.work > 0.0 && self.work.is_finite()) {
            return bad("work must be positive and finite");
        }
        if !(self.comm_weight >= 0.0 && self.comm_weight.is_finite()) {
            return bad("comm_weight must be nonnegative and finite");
        }
        Ok(())
    }
}

pub fn validate_loads(blocks: &[BlockLoad]) -> Result<(), ScheduleError> {
    blocks.iter().try_for_each(BlockLoad::validate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeClassThresholds {
    pub small_max_dim: usize,
    pub medium_max_dim: usize,
}

impl Default for SizeClassThresholds {
    fn default() -> Self {
        Self { small_max_dim: 512, medium_max_dim: 4096 }
    }
}

impl SizeClassThresholds {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        if 0 < self.small_max_dim && self.small_max_dim < self.medium_max_dim {
            Ok(())
        } else {
            Err(ScheduleError::InvalidThresholds)
        }
    }

    pub fn class_of(&self, dim: usize) -> SizeClass {
        if dim <= self.small_max_dim {
            SizeClass::Small
        } else if dim <= self.medium_max_dim {
            SizeClass::Medium
        } else {
            SizeClass::Large
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModelParams {
    /// Communication cost per unit of `comm_weight` per extra processor.
    pub alpha: f64,
}

impl Default for CostModelParams {
    fn default() -> Self {
        Self { alpha: 0.05 }
    }
}

impl CostModelParams {
    /// `t(b, g) = work / g + alpha (g - 1) comm_weight`.
    pub fn block_time(&self, block: &BlockLoad, g: usize) -> f64 {
        let g = g.max(1);
        block.work / g as f64 + self.alpha * (g - 1) as f64 * block.comm_weight
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Greedy,
    Cyclic,
    Optimal,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Greedy => "greedy",
            Policy::Cyclic => "cyclic",
            Policy::Optimal => "optimal",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(Policy::Greedy),
            "cyclic" => Ok(Policy::Cyclic),
            "optimal" => Ok(Policy::Optimal),
            other => Err(format!("unknown policy '{other}' (expected greedy, cyclic or optimal)")),
        }
    }
}

/// Processor set per block, aligned with the input block order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub policy: Policy,
    pub n_procs: usize,
    pub procs: Vec<Vec<usize>>,
}

impl Assignment {
    /// Every block on processor 0.
    pub fn serial(n_blocks: usize) -> Self {
        Self { policy: Policy::Cyclic, n_procs: 1, procs: vec![vec![0]; n_blocks] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleMetrics {
    pub makespan: f64,
    pub per_proc_load: Vec<f64>,
    /// `max / mean` processor load.
    pub imbalance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SizeClasses {
    pub small: Vec<BlockLoad>,
    pub medium: Vec<BlockLoad>,
    pub large: Vec<BlockLoad>,
}

pub fn classify(blocks: &[BlockLoad], thresholds: &SizeClassThresholds) -> SizeClasses {
    let mut out = SizeClasses::default();
    for b in blocks {
        match thresholds.class_of(b.dim) {
            SizeClass::Small => out.small.push(b.clone()),
            SizeClass::Medium => out.medium.push(b.clone()),
            SizeClass::Large => out.large.push(b.clone()),
        }
    }
    out
}

/// Subgroup size for a medium block.
pub fn medium_group_size(dim: usize, thresholds: &SizeClassThresholds, n_procs: usize) -> usize {
    let g = (dim as f64 / thresholds.small_max_dim as f64).round() as usize;
    g.max(2).min(n_procs).max(1)
}

/// Block indices ordered by work descending, then id, then position.
fn by_work_desc(blocks: &[BlockLoad], idx: &mut [usize]) {
    idx.sort_by(|&a, &b| {
        blocks[b].work.total_cmp(&blocks[a].work).then(blocks[a].id.cmp(&blocks[b].id)).then(a.cmp(&b))
    });
}

fn least_loaded(loads: &[f64]) -> usize {
    let mut best = 0;
    for (p, &l) in loads.iter().enumerate() {
        if l < loads[best] {
            best = p;
        }
    }
    best
}

pub fn greedy_assign(
    blocks: &[BlockLoad],
    n_procs: usize,
    thresholds: &SizeClassThresholds,
    cost: &CostModelParams,
) -> Result<Assignment, ScheduleError> {
    if n_procs == 0 {
        return Err(ScheduleError::NoProcessors);
    }
    thresholds.validate()?;
    validate_loads(blocks)?;
    let mut procs = vec![Vec::new(); blocks.len()];
    let mut loads = vec![0.0; n_procs];
    let mut classes: [Vec<usize>; 3] = Default::default();
    for (i, b) in blocks.iter().enumerate() {
        let slot = match thresholds.class_of(b.dim) {
            SizeClass::Large => 0,
            SizeClass::Medium => 1,
            SizeClass::Small => 2,
        };
        classes[slot].push(i);
    }
    for class in classes.iter_mut() {
        by_work_desc(blocks, class);
    }

    for &i in &classes[0] {
        let t = cost.block_time(&blocks[i], n_procs);
        loads.iter_mut().for_each(|l| *l += t);
        procs[i] = (0..n_procs).collect();
    }
    for &i in &classes[1] {
        let g = medium_group_size(blocks[i].dim, thresholds, n_procs);
        let t = cost.block_time(&blocks[i], g);
        // Contiguous window whose busiest processor is least loaded.
        let mut best = (f64::INFINITY, 0);
        for start in 0..=(n_procs - g) {
            let peak = loads[start..start + g].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if peak < best.0 {
                best = (peak, start);
            }
        }
        let start = best.1;
        loads[start..start + g].iter_mut().for_each(|l| *l += t);
        procs[i] = (start..start + g).collect();
    }
    for &i in &classes[2] {
        let p = least_loaded(&loads);
        loads[p] += cost.block_time(&blocks[i], 1);
        procs[i] = vec![p];
    }
    Ok(Assignment { policy: Policy::Greedy, n_procs, procs })
}

pub fn cyclic_assign(blocks: &[BlockLoad], n_procs: usize) -> Result<Assignment, ScheduleError> {
    if n_procs == 0 {
        return Err(ScheduleError::NoProcessors);
    }
    validate_loads(blocks)?;
    Ok(Assignment {
        policy: Policy::Cyclic,
        n_procs,
        procs: (0..blocks.len()).map(|k| vec![k % n_procs]).collect(),
    })
}

pub fn evaluate(
    assignment: &Assignment,
    blocks: &[BlockLoad],
    cost: &CostModelParams,
) -> Result<ScheduleMetrics, ScheduleError> {
    if assignment.n_procs == 0 {
        return Err(ScheduleError::NoProcessors);
    }
    let mut loads = vec![0.0; assignment.n_procs];
    for (k, b) in blocks.iter().enumerate() {
        let set = assignment.procs.get(k).filter(|s| !s.is_empty()).ok_or(ScheduleError::UncoveredBlock(b.id))?;
        let t = cost.block_time(b, set.len());
        for &p in set {
            if p >= assignment.n_procs {
                return Err(ScheduleError::ProcessorOutOfRange { proc: p, n_procs: assignment.n_procs });
            }
            loads[p] += t;
        }
    }
    let makespan = loads.iter().copied().fold(0.0, f64::max);
    let mean = loads.iter().sum::<f64>() / loads.len() as f64;
    let imbalance = if mean > 0.0 { makespan / mean } else { 1.0 };
    Ok(ScheduleMetrics { makespan, per_proc_load: loads, imbalance })
}

/// Minimal-makespan singleton assignment by exhaustive search; among equal
/// makespans the lexicographically smallest processor vector wins.
pub fn brute_force_assign(
    blocks: &[BlockLoad],
    n_procs: usize,
    cost: &CostModelParams,
) -> Result<Assignment, ScheduleError> {
    if n_procs == 0 {
        return Err(ScheduleError::NoProcessors);
    }
    validate_loads(blocks)?;
    let size = (n_procs as f64).powi(blocks.len() as i32);
    if size > BRUTE_FORCE_CAP {
        return Err(ScheduleError::SearchTooLarge { size });
    }
    let times: Vec<f64> = blocks.iter().map(|b| cost.block_time(b, 1)).collect();
    let mut best = (f64::INFINITY, vec![0; blocks.len()]);
    let mut current = vec![0; blocks.len()];
    let mut loads = vec![0.0; n_procs];
    search(&times, 0, 0.0, &mut current, &mut loads, &mut best);
    Ok(Assignment { policy: Policy::Optimal, n_procs, procs: best.1.into_iter().map(|p| vec![p]).collect() })
}

/// Depth-first in lexicographic order; a branch is cut once it cannot beat
/// the incumbent strictly, which preserves the lexicographic tie-break.
fn search(
    times: &[f64],
    k: usize,
    peak: f64,
    current: &mut [usize],
    loads: &mut [f64],
    best: &mut (f64, Vec<usize>),
) {
    if peak >= best.0 {
        return;
    }
    if k == times.len() {
        *best = (peak, current.to_vec());
        return;
    }
    for p in 0..loads.len() {
        loads[p] += times[k];
        current[k] = p;
        search(times, k + 1, peak.max(loads[p]), current, loads, best);
        loads[p] -= times[k];
    }
}

/// Synthetic block-load profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum LoadProfile {
    /// Heavy-tailed dimensions from 1 to just over 36000, as in a
    /// carbon-12 M-scheme calculation at `N_max = 6`.
    C12Nmax6Like { blocks: usize },
    /// `count` blocks with dimensions uniform in `[min, max]`.
    Uniform { min: usize, max: usize, count: usize },
}

pub const C12_DEFAULT_BLOCKS: usize = 2000;
const C12_MAX_DIM: f64 = 36000.0;
const C12_TAIL_SHAPE: f64 = 0.6;

impl FromStr for LoadProfile {
    type Err = ScheduleError;

    /// Accepts `c12_nmax6_like`, `c12_nmax6_like(blocks)` and
    /// `uniform(min,max,count)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || ScheduleError::UnknownProfile(s.to_string());
        let s = s.trim();
        let (name, args) = match s.split_once('(') {
            Some((name, rest)) => {
                let inner = rest.strip_suffix(')').ok_or_else(unknown)?;
                let args = inner
                    .split(',')
                    .map(|a| a.trim().parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| unknown())?;
                (name.trim(), args)
            }
            None => (s, Vec::new()),
        };
        match (name, args.as_slice()) {
            ("c12_nmax6_like", []) => Ok(LoadProfile::C12Nmax6Like { blocks: C12_DEFAULT_BLOCKS }),
            ("c12_nmax6_like", &[blocks]) if blocks >= 2 => Ok(LoadProfile::C12Nmax6Like { blocks }),
            ("uniform", &[min, max, count]) if 1 <= min && min <= max => {
                Ok(LoadProfile::Uniform { min, max, count })
            }
            _ => Err(unknown()),
        }
    }
}

impl fmt::Display for LoadProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadProfile::C12Nmax6Like { blocks } => write!(f, "c12_nmax6_like({blocks})"),
            LoadProfile::Uniform { min, max, count } => write!(f, "uniform({min},{max},{count})"),
        }
    }
}

pub fn synth_loads(profile: &LoadProfile, seed: u64) -> Vec<BlockLoad> {
    let mut rng = seeded_rng(seed, 0x4c44);
    let dims: Vec<usize> = match *profile {
        LoadProfile::Uniform { min, max, count } => (0..count).map(|_| rng.random_range(min..=max)).collect(),
        LoadProfile::C12Nmax6Like { blocks } => {
            // Truncated Pareto on [1, 36000] by inversion.
            let a = C12_TAIL_SHAPE;
            let tail = C12_MAX_DIM.powf(-a);
            let mut dims: Vec<usize> = (0..blocks)
                .map(|_| {
                    let u: f64 = rng.random();
                    let x = (1.0 - u * (1.0 - tail)).powf(-1.0 / a);
                    (x.floor() as usize).clamp(1, C12_MAX_DIM as usize)
                })
                .collect();
            dims[0] = 1;
            dims[1] = C12_MAX_DIM as usize + rng.random_range(1..=1000);
            dims.shuffle(&mut rng);
            dims
        }
    };
    dims.into_iter().enumerate().map(|(id, dim)| BlockLoad::from_dim(id, dim)).collect()
}

/// JSON document holding a list of block loads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadsDocument {
    pub schema: String,
    pub blocks: Vec<BlockLoad>,
}

impl LoadsDocument {
    pub fn new(blocks: Vec<BlockLoad>) -> Self {
        Self { schema: LOADS_SCHEMA.to_string(), blocks }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_works(works: &[f64]) -> Vec<BlockLoad> {
        works.iter().enumerate().map(|(id, &work)| BlockLoad { id, dim: 1, work, comm_weight: 0.0 }).collect()
    }

    #[test]
    fn classify_examples() {
        let t = SizeClassThresholds::default();
        let blocks: Vec<BlockLoad> = [1, 100, 40000].iter().enumerate().map(|(i, &d)| BlockLoad::from_dim(i, d)).collect();
        let c = classify(&blocks, &t);
        assert_eq!(c.small.iter().map(|b| b.dim).collect::<Vec<_>>(), vec![1, 100]);
        assert!(c.medium.is_empty());
        assert_eq!(c.large[0].dim, 40000);
        let edge = vec![BlockLoad::from_dim(0, 512); 3];
        assert_eq!(classify(&edge, &t).small.len(), 3);
    }

    #[test]
    fn lpt_example() {
        let blocks = small_works(&[4.0, 3.0, 3.0, 2.0, 2.0]);
        let cost = CostModelParams::default();
        let a = greedy_assign(&blocks, 2, &SizeClassThresholds::default(), &cost).unwrap();
        let m = evaluate(&a, &blocks, &cost).unwrap();
        assert_eq!(m.makespan, 8.0);
        assert_eq!(m.per_proc_load, vec![8.0, 6.0]);
        let c = evaluate(&cyclic_assign(&blocks, 2).unwrap(), &blocks, &cost).unwrap();
        assert_eq!(c.per_proc_load, vec![9.0, 5.0]);
        let o = brute_force_assign(&blocks, 2, &cost).unwrap();
        assert_eq!(evaluate(&o, &blocks, &cost).unwrap().makespan, 7.0);
        assert_eq!(o.procs, vec![vec![0], vec![0], vec![1], vec![1], vec![1]]);
    }

    #[test]
    fn cost_formula() {
        let b = BlockLoad { id: 0, dim: 600, work: 10.0, comm_weight: 1.0 };
        let cost = CostModelParams { alpha: 1.0 };
        assert_eq!(cost.block_time(&b, 1), 10.0);
        assert_eq!(cost.block_time(&b, 2), 6.0);
        let a = Assignment { policy: Policy::Greedy, n_procs: 2, procs: vec![vec![0, 1]] };
        assert_eq!(evaluate(&a, &[b], &cost).unwrap().per_proc_load, vec![6.0, 6.0]);
    }

    #[test]
    fn classes_get_their_processor_sets() {
        let t = SizeClassThresholds::default();
        let blocks: Vec<BlockLoad> =
            [10, 2000, 5000, 20, 1000].iter().enumerate().map(|(i, &d)| BlockLoad::from_dim(i, d)).collect();
        let a = greedy_assign(&blocks, 8, &t, &CostModelParams::default()).unwrap();
        assert_eq!(a.procs[2], (0..8).collect::<Vec<_>>());
        assert_eq!(a.procs[1].len(), 4);
        assert_eq!(a.procs[4].len(), 2);
        assert_eq!(a.procs[0].len(), 1);
        assert!(a.procs[1].windows(2).all(|w| w[1] == w[0] + 1));
    }

    #[test]
    fn errors() {
        let blocks = small_works(&[1.0]);
        assert_eq!(cyclic_assign(&blocks, 0), Err(ScheduleError::NoProcessors));
        let many = small_works(&[1.0; 30]);
        assert!(matches!(brute_force_assign(&many, 4, &CostModelParams::default()), Err(ScheduleError::SearchTooLarge { .. })));
        let a = Assignment { policy: Policy::Cyclic, n_procs: 1, procs: vec![] };
        assert_eq!(evaluate(&a, &blocks, &CostModelParams::default()), Err(ScheduleError::UncoveredBlock(0)));
        assert!("weird".parse::<LoadProfile>().is_err());
        let bad = [BlockLoad { id: 3, dim: 1, work: 0.0, comm_weight: 0.0 }];
        assert!(matches!(cyclic_assign(&bad, 1), Err(ScheduleError::InvalidLoad { id: 3, .. })));
    }

    #[test]
    fn profiles() {
        let p: LoadProfile = "c12_nmax6_like".parse().unwrap();
        let loads = synth_loads(&p, 1);
        assert_eq!(loads.len(), C12_DEFAULT_BLOCKS);
        assert_eq!(loads.iter().map(|b| b.dim).min(), Some(1));
        assert!(loads.iter().map(|b| b.dim).max().unwrap() > 36000);
        assert_ne!(loads, synth_loads(&p, 2));
        assert_eq!(loads, synth_loads(&p, 1));
        let u = synth_loads(&"uniform(10,10,5)".parse().unwrap(), 0);
        assert!(u.iter().all(|b| b.dim == 10) && u.len() == 5);
        assert_eq!(p.to_string().parse::<LoadProfile>().unwrap(), p);
    }
}
