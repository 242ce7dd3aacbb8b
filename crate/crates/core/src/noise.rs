//! Computational-noise estimation from forward-difference tables.
//!
//! A scalar function is sampled at `m + 1` equally spaced points along a
//! line. For i.i.d. noise of standard deviation `sigma`, the `k`-th forward
//! differences of the samples have variance `sigma^2 / gamma_k` with
//! `gamma_k = (k!)^2 / (2k)!`, while a smooth underlying function contributes
//! terms that vanish as `h^k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_M: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("need m >= 4 difference levels, got {0}")]
    TooFewSamples(usize),
    #[error("step h must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("direction must be a nonzero vector of length {expected}")]
    BadDirection { expected: usize },
    #[error("evaluation failed at sample {index}: {message}")]
    Evaluator { index: usize, message: String },
    #[error("no points to map")]
    NoPoints,
}

/// `columns[k][i]` is the `k`-th forward difference starting at sample `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceTable {
    pub columns: Vec<Vec<f64>>,
}

impl DifferenceTable {
    /// Highest difference order, `values.len() - 1`.
    pub fn order(&self) -> usize {
        self.columns.len() - 1
    }
}

/// Builds the table `T[i][k] = T[i+1][k-1] - T[i][k-1]`. Requires at least
/// two values.
pub fn difference_table(values: &[f64]) -> DifferenceTable {
    assert!(values.len() >= 2, "difference table needs at least two values");
    let mut columns = vec![values.to_vec()];
    for _ in 1..values.len() {
        let prev = columns.last().expect("nonempty");
        let next: Vec<f64> = prev.windows(2).map(|w| w[1] - w[0]).collect();
        columns.push(next);
    }
    DifferenceTable { columns }
}

/// `(k!)^2 / (2k)!`, evaluated as `k! / prod_{j=1}^{k} (k + j)` with one
/// rounding while both products are exact integers.
pub fn gamma(k: usize) -> f64 {
    let num: f64 = (1..=k).map(|j| j as f64).product();
    let den: f64 = (1..=k).map(|j| (k + j) as f64).product();
    num / den
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    pub sigma_abs: f64,
    /// `sigma_abs / |f(x)|`; absent when `f(x) = 0`.
    pub sigma_rel: Option<f64>,
    /// Difference order whose estimate was selected.
    pub order: Option<usize>,
    pub reliable: bool,
    pub advisory: Option<String>,
    pub samples: Vec<f64>,
}

impl NoiseEstimate {
    pub fn f0(&self) -> f64 {
        self.samples[0]
    }
}

/// Per-order estimates `sigma_k`, `k = 1..=m`.
pub fn order_estimates(table: &DifferenceTable) -> Vec<f64> {
    (1..=table.order())
        .map(|k| {
            let col = &table.columns[k];
            let mean_sq = col.iter().map(|v| v * v).sum::<f64>() / col.len() as f64;
            (gamma(k) * mean_sq).sqrt()
        })
        .collect()
}

fn sign_changes(col: &[f64]) -> usize {
    col.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
}

/// Applies the selection rule to samples already taken. Order `k` is
/// accepted when `sigma_k` and `sigma_{k+1}` agree within a factor of 4 and
/// the `k`-th differences change sign at least `(m - k)/2 - 1` times.
pub fn estimate_from_samples(samples: Vec<f64>) -> NoiseEstimate {
    let table = difference_table(&samples);
    let m = table.order();
    let sigmas = order_estimates(&table);
    let f0 = samples[0];
    let rel = |s: f64| (f0 != 0.0).then(|| s / f0.abs());
    for k in 1..m {
        let (a, b) = (sigmas[k - 1], sigmas[k]);
        let (lo, hi) = (a.min(b), a.max(b));
        let agree = lo > 0.0 && hi <= 4.0 * lo;
        let changes = sign_changes(&table.columns[k]) as f64;
        if agree && changes >= (m - k) as f64 / 2.0 - 1.0 {
            return NoiseEstimate {
                sigma_abs: a,
                sigma_rel: rel(a),
                order: Some(k),
                reliable: true,
                advisory: None,
                samples,
            };
        }
    }
    let all_equal = samples.iter().all(|v| *v == f0);
    let (sigma_abs, advisory) = if all_equal {
        (0.0, "samples are identical: h may be too small, increase it")
    } else {
        (sigmas[m - 1], "differences are dominated by smooth variation: h may be too large, decrease it")
    };
    NoiseEstimate {
        sigma_abs,
        sigma_rel: rel(sigma_abs),
        order: None,
        reliable: false,
        advisory: Some(advisory.to_string()),
        samples,
    }
}

/// Samples `f` at `x + i h d` for `i = 0..=m` (exactly `m + 1` calls, in
/// order) and estimates its noise level.
pub fn ecnoise<F>(mut f: F, x: &[f64], direction: &[f64], h: f64, m: usize) -> Result<NoiseEstimate, NoiseError>
where
    F: FnMut(&[f64]) -> Result<f64, String>,
{
    if m < 4 {
        return Err(NoiseError::TooFewSamples(m));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(NoiseError::BadStep(h));
    }
    if direction.len() != x.len() || direction.iter().all(|v| *v == 0.0) {
        return Err(NoiseError::BadDirection { expected: x.len() });
    }
    let mut samples = Vec::with_capacity(m + 1);
    let mut point = vec![0.0; x.len()];
    for i in 0..=m {
        for ((p, xi), di) in point.iter_mut().zip(x).zip(direction) {
            *p = xi + i as f64 * h * di;
        }
        let v = f(&point).map_err(|message| NoiseError::Evaluator { index: i, message })?;
        samples.push(v);
    }
    Ok(estimate_from_samples(samples))
}

/// How each point's sampling direction is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionRule {
    /// Gaussian unit vector from a generator seeded by `(seed, point id)`.
    Random { seed: u64 },
    /// Unit vector along one coordinate.
    Coordinate(usize),
}

impl DirectionRule {
    pub fn direction(&self, id: usize, n: usize) -> Vec<f64> {
        match *self {
            DirectionRule::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(id as u64);
                let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                v.into_iter().map(|a| a / norm).collect()
            }
            DirectionRule::Coordinate(j) => (0..n).map(|i| if i == j % n { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Default step `1e-4 * max(1, |x|)`.
pub fn default_step(x: &[f64]) -> f64 {
    1e-4 * x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRow {
    pub id: usize,
    pub result: Result<NoiseEstimate, NoiseError>,
}

/// One [`ecnoise`] call per point. Points are split across `workers`
/// threads; the output order and values do not depend on `workers`.
pub fn noise_map<F>(
    f: &F,
    points: &[Vec<f64>],
    rule: DirectionRule,
    h: Option<f64>,
    m: usize,
    workers: usize,
) -> Result<Vec<NoiseRow>, NoiseError>
where
    F: Fn(&[f64]) -> Result<f64, String> + Sync,
{
    if points.is_empty() {
        return Err(NoiseError::NoPoints);
    }
    let one = |id: usize| {
        let x = &points[id];
        let d = rule.direction(id, x.len());
        NoiseRow { id, result: ecnoise(f, x, &d, h.unwrap_or_else(|| default_step(x)), m) }
    };
    let workers = workers.clamp(1, points.len());
    if workers == 1 {
        return Ok((0..points.len()).map(one).collect());
    }
    let mut rows: Vec<NoiseRow> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let one = &one;
                s.spawn(move || (w..points.len()).step_by(workers).map(one).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("noise worker panicked")).collect()
    });
    rows.sort_by_key(|r| r.id);
    Ok(rows)
}
