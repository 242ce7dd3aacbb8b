//! Derivative-free bound-constrained nonlinear least squares.
//!
//! [`pounders_minimize`] keeps one quadratic interpolation model per residual
//! and combines them into a Gauss-Newton-like master model of
//! `f = sum r_i^2`; [`pounder_minimize`] runs the same trust-region
//! framework on a single model of `f`. Both accept an evaluation history for
//! warm starts.

mod families;
mod history;
pub mod interp;
mod problem;
mod solver;
pub mod trust;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use families::{exponential_fit_truth, BuiltProblem, ProblemFamily, ProblemSpec, PROBLEM_SCHEMA};
pub use history::{read_history, read_history_file, write_history, write_trace};
pub use problem::{chi2, sum_of_squares, EvaluationRecord, ResidualProblem, Simulator};
pub use solver::{design_master_model, experimental_design, minimize, pounder_minimize, pounders_minimize};

#[derive(Debug, Error)]
pub enum DfoError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("evaluation failed at x = {x:?}: {message}")]
    Evaluator { x: Vec<f64>, message: String },
    #[error("inconsistent history: {0}")]
    InconsistentHistory(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed problem spec: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// One model per residual.
    Pounders,
    /// One model of the aggregate `f`.
    Pounder,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Pounders => "pounders",
            Algorithm::Pounder => "pounder",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pounders" => Ok(Algorithm::Pounders),
            "pounder" => Ok(Algorithm::Pounder),
            other => Err(format!("unknown algorithm '{other}' (expected pounders or pounder)")),
        }
    }
}

/// Trust-region and interpolation settings. `None` fields are resolved from
/// the starting point and problem size by [`DfoOptions::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfoOptions {
    /// Initial radius; default `0.1 * max(1, |x0|_inf)`.
    pub delta0: Option<f64>,
    /// Stop once the radius drops below this; default `1e-8 * max(1, |x0|)`.
    pub delta_min: Option<f64>,
    /// Largest radius; default `1e3 * delta0`.
    pub delta_max: Option<f64>,
    pub max_evals: usize,
    pub eta_accept: f64,
    pub gamma_shrink: f64,
    pub gamma_grow: f64,
    /// Predicted decreases at or below this are treated as zero.
    pub noise_floor: f64,
    /// Scaled radius for points that certify a fully linear model; default `sqrt(n)`.
    pub valid_radius: Option<f64>,
    /// Scaled radius for any interpolation point; default `max(10, sqrt(n))`.
    pub extra_radius: Option<f64>,
    /// Minimum scaled component along a missing direction.
    pub pivot: f64,
    /// Interpolation points including the center; default `2n + 1`.
    pub max_points: Option<usize>,
    /// Largest accepted condition number of the scaled interpolation system.
    pub cond_max: f64,
}

impl Default for DfoOptions {
    fn default() -> Self {
        Self {
            delta0: None,
            delta_min: None,
            delta_max: None,
            max_evals: 500,
            eta_accept: 0.0,
            gamma_shrink: 0.5,
            gamma_grow: 2.0,
            noise_floor: 0.0,
            valid_radius: None,
            extra_radius: None,
            pivot: 1e-3,
            max_points: None,
            cond_max: 1e6,
        }
    }
}

/// [`DfoOptions`] with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedOptions {
    pub delta0: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub max_evals: usize,
    pub eta_accept: f64,
    pub gamma_shrink: f64,
    pub gamma_grow: f64,
    pub noise_floor: f64,
    pub valid_radius: f64,
    pub extra_radius: f64,
    pub pivot: f64,
    pub max_points: usize,
    pub cond_max: f64,
}

impl DfoOptions {
    pub fn resolve(&self, x0: &[f64]) -> Result<ResolvedOptions, DfoError> {
        let n = x0.len();
        let inf_norm = x0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let two_norm = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
        let delta0 = self.delta0.unwrap_or(0.1 * inf_norm.max(1.0));
        let delta_min = self.delta_min.unwrap_or(1e-8 * two_norm.max(1.0));
        let delta_max = self.delta_max.unwrap_or(1e3 * delta0);
        let sqrt_n = (n as f64).sqrt();
        let r = ResolvedOptions {
            delta0,
            delta_min,
            delta_max,
            max_evals: self.max_evals,
            eta_accept: self.eta_accept,
            gamma_shrink: self.gamma_shrink,
            gamma_grow: self.gamma_grow,
            noise_floor: self.noise_floor,
            valid_radius: self.valid_radius.unwrap_or(sqrt_n),
            extra_radius: self.extra_radius.unwrap_or(sqrt_n.max(10.0)),
            pivot: self.pivot,
            max_points: self.max_points.unwrap_or(2 * n + 1),
            cond_max: self.cond_max,
        };
        let bad = |msg: &str| Err(DfoError::InvalidOptions(msg.to_string()));
        if !(r.delta0 > 0.0 && r.delta0.is_finite()) {
            return bad("delta0 must be positive and finite");
        }
        if !(r.delta_min > 0.0 && r.delta_min < r.delta0) {
            return bad("delta_min must satisfy 0 < delta_min < delta0");
        }
        if r.delta_max < r.delta0 {
            return bad("delta_max must be at least delta0");
        }
        if r.max_evals == 0 {
            return bad("max_evals must be at least 1");
        }
        if !(0.0..1.0).contains(&r.eta_accept) {
            return bad("eta_accept must lie in [0, 1)");
        }
        if !(r.gamma_shrink > 0.0 && r.gamma_shrink < 1.0) || r.gamma_grow < 1.0 {
            return bad("gamma_shrink must lie in (0, 1) and gamma_grow must be at least 1");
        }
        if r.noise_floor < 0.0 || !(r.pivot > 0.0 && r.pivot < 1.0) || r.cond_max <= 1.0 {
            return bad("noise_floor must be >= 0, pivot in (0, 1) and cond_max > 1");
        }
        if r.valid_radius < 1.0 || r.extra_radius < r.valid_radius || r.max_points < n + 1 {
            return bad("need valid_radius >= 1, extra_radius >= valid_radius and max_points >= n + 1");
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum Termination {
    BudgetExhausted,
    RadiusBelowMinimum,
    EvaluatorFailure { x: Vec<f64>, message: String },
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::BudgetExhausted => f.write_str("budget exhausted"),
            Termination::RadiusBelowMinimum => f.write_str("trust-region radius below minimum"),
            Termination::EvaluatorFailure { message, .. } => write!(f, "evaluator failure: {message}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub algorithm: Algorithm,
    pub best_x: Vec<f64>,
    pub best_f: f64,
    pub best_residuals: Vec<f64>,
    /// New evaluations only, indexed from 0.
    pub trace: Vec<EvaluationRecord>,
    pub termination: Termination,
    pub iterations: usize,
    /// History records that entered the candidate pool.
    pub history_used: usize,
    /// Best `f` among the history records, if any.
    pub history_best: Option<f64>,
    /// New evaluations spent before the solver had an accepted center
    /// (`0` for a warm start, `1` for a cold one).
    pub evals_before_first_accept: usize,
    /// Largest relative interpolation error of any model built.
    pub max_interpolation_error: f64,
    /// Every evaluated point was inside the bounds.
    pub bounds_respected: bool,
}

impl FitResult {
    /// Running best `f` after each new evaluation, counting the history.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = self.history_best.unwrap_or(f64::INFINITY);
        self.trace
            .iter()
            .map(|r| {
                best = best.min(r.f);
                best
            })
            .collect()
    }

    /// Number of new evaluations after which the running best is `<= target`.
    pub fn evals_to_reach(&self, target: f64) -> Option<usize> {
        if self.history_best.is_some_and(|b| b <= target) {
            return Some(0);
        }
        self.best_so_far().iter().position(|&b| b <= target).map(|i| i + 1)
    }
}
