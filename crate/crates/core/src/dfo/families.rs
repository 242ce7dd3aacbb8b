//! Built-in synthetic problem families described by a small JSON spec.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::problem::ResidualProblem;
use super::DfoError;

pub const PROBLEM_SCHEMA: &str = "nucsolve.problem/1";

/// Number of exponential terms in the exponential-fit family.
const EXP_TERMS: usize = 4;
const EXP_OBSERVABLES: usize = 40;
const EXP_SIGMA: f64 = 1e-2;
const EXP_TRUTH: [f64; 2 * EXP_TERMS] = [1.0, 0.2, 0.8, 0.7, 0.6, 1.5, 0.4, 3.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemFamily {
    /// `r = b - A x` with Gaussian `A` (`o x n`) and `b`; starts at `x = 0`.
    Linear { n: usize, o: usize },
    /// Sum of independent Rosenbrock pairs `10 (x_{2k+1} - x_{2k}^2)`, `1 - x_{2k}`.
    Rosenbrock {
        #[serde(default = "two")]
        n: usize,
    },
    /// Four decaying exponentials `sum a_k exp(-b_k t)` fitted to 40 noisy,
    /// weighted data points; `x = (a_1, b_1, ..., a_4, b_4)`.
    ExponentialFit,
    /// `r = 2 - x` on `x <= 1`.
    BoundQuadratic,
    /// Single observable `sum x_j^2` with datum 0.
    Quadratic { n: usize },
}

fn two() -> usize {
    2
}

/// A problem family plus the seed that fixes its random data and the
/// amplitude of additive simulator noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub schema: String,
    pub family: ProblemFamily,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of the deterministic pseudo-random noise added to
    /// every simulated observable.
    #[serde(default)]
    pub noise: f64,
}

/// A constructed problem with its starting point and, for the linear
/// family, the matrix and right-hand side.
#[derive(Debug)]
pub struct BuiltProblem {
    pub problem: ResidualProblem,
    pub x0: Vec<f64>,
    pub linear: Option<(DMatrix<f64>, DVector<f64>)>,
}

impl ProblemSpec {
    pub fn new(family: ProblemFamily, seed: u64, noise: f64) -> Self {
        Self { schema: PROBLEM_SCHEMA.to_string(), family, seed, noise }
    }

    pub fn from_json(text: &str) -> Result<Self, DfoError> {
        let spec: Self = serde_json::from_str(text)?;
        if spec.schema != PROBLEM_SCHEMA {
            return Err(DfoError::InvalidProblem(format!("unsupported problem schema '{}'", spec.schema)));
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, DfoError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn build(&self) -> Result<BuiltProblem, DfoError> {
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(DfoError::InvalidProblem("noise must be finite and nonnegative".into()));
        }
        let noisy = Noise { amplitude: self.noise, seed: self.seed };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut gauss = || -> f64 { rng.sample(StandardNormal) };
        let unbounded = |n: usize| (vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n]);
        match self.family {
            ProblemFamily::Linear { n, o } => {
                if n == 0 || o < n {
                    return Err(DfoError::InvalidProblem("linear family needs 1 <= n <= o".into()));
                }
                let a = DMatrix::from_fn(o, n, |_, _| gauss());
                let b = DVector::from_fn(o, |_, _| gauss());
                let am = a.clone();
                let sim = move |x: &[f64]| {
                    let s = &am * DVector::from_column_slice(x);
                    Ok(noisy.apply(x, s.as_slice().to_vec()))
                };
                let (l, u) = unbounded(n);
                let problem = ResidualProblem::new(sim, b.as_slice().to_vec(), vec![1.0; o], l, u)?;
                Ok(BuiltProblem { problem, x0: vec![0.0; n], linear: Some((a, b)) })
            }
            ProblemFamily::Rosenbrock { n } => {
                if n == 0 || n % 2 != 0 {
                    return Err(DfoError::InvalidProblem("rosenbrock family needs an even n".into()));
                }
                let sim = move |x: &[f64]| {
                    let s: Vec<f64> = x
                        .chunks(2)
                        .flat_map(|p| [-10.0 * (p[1] - p[0] * p[0]), p[0]])
                        .collect();
                    Ok(noisy.apply(x, s))
                };
                let data: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.0 } else { 1.0 }).collect();
                let (l, u) = unbounded(n);
                let problem = ResidualProblem::new(sim, data, vec![1.0; n], l, u)?;
                let x0 = (0..n).map(|i| if i % 2 == 0 { -1.2 } else { 1.0 }).collect();
                Ok(BuiltProblem { problem, x0, linear: None })
            }
            ProblemFamily::ExponentialFit => {
                let times: Vec<f64> =
                    (0..EXP_OBSERVABLES).map(|i| 8.0 * i as f64 / (EXP_OBSERVABLES - 1) as f64).collect();
                let exact = exponentials(&EXP_TRUTH, &times);
                let data: Vec<f64> = exact.iter().map(|s| s + EXP_SIGMA * gauss()).collect();
                let x0: Vec<f64> = EXP_TRUTH.iter().map(|v| v * (0.6 * (gauss() * 0.5).tanh()).exp()).collect();
                let sim = move |x: &[f64]| Ok(noisy.apply(x, exponentials(x, &times)));
                let n = EXP_TRUTH.len();
                let lower = (0..n).map(|j| if j % 2 == 0 { 0.0 } else { 0.05 }).collect();
                let upper = (0..n).map(|j| if j % 2 == 0 { 5.0 } else { 10.0 }).collect();
                let problem = ResidualProblem::new(sim, data, vec![EXP_SIGMA; EXP_OBSERVABLES], lower, upper)?;
                Ok(BuiltProblem { problem, x0, linear: None })
            }
            ProblemFamily::BoundQuadratic => {
                let sim = move |x: &[f64]| Ok(noisy.apply(x, vec![x[0]]));
                let problem =
                    ResidualProblem::new(sim, vec![2.0], vec![1.0], vec![f64::NEG_INFINITY], vec![1.0])?;
                Ok(BuiltProblem { problem, x0: vec![0.0], linear: None })
            }
            ProblemFamily::Quadratic { n } => {
                if n == 0 {
                    return Err(DfoError::InvalidProblem("quadratic family needs n >= 1".into()));
                }
                let sim = move |x: &[f64]| Ok(noisy.apply(x, vec![x.iter().map(|v| v * v).sum()]));
                let (l, u) = unbounded(n);
                let problem = ResidualProblem::new(sim, vec![0.0], vec![1.0], l, u)?;
                Ok(BuiltProblem { problem, x0: vec![0.5; n], linear: None })
            }
        }
    }
}

/// Parameters generating the exponential-fit data, in `x` order.
pub fn exponential_fit_truth() -> Vec<f64> {
    EXP_TRUTH.to_vec()
}

fn exponentials(x: &[f64], times: &[f64]) -> Vec<f64> {
    times.iter().map(|t| x.chunks(2).map(|p| p[0] * (-p[1] * t).exp()).sum()).collect()
}

/// Additive noise that is a deterministic function of `(seed, x)`, so
/// repeated evaluations at the same point agree.
#[derive(Debug, Clone, Copy)]
struct Noise {
    amplitude: f64,
    seed: u64,
}

impl Noise {
    fn apply(&self, x: &[f64], mut s: Vec<f64>) -> Vec<f64> {
        if self.amplitude == 0.0 {
            return s;
        }
        let mut h = self.seed ^ 0x6a09_e667_f3bc_c908;
        for v in x {
            h = mix(h ^ v.to_bits());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        for v in &mut s {
            *v += self.amplitude * rng.sample::<f64, _>(StandardNormal);
        }
        s
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfo::chi2;

    #[test]
    fn spec_round_trips_through_json() {
        let spec = ProblemSpec::new(ProblemFamily::Linear { n: 3, o: 5 }, 7, 0.0);
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(ProblemSpec::from_json(&text).unwrap(), spec);
        let short = r#"{"schema":"nucsolve.problem/1","family":{"kind":"rosenbrock"}}"#;
        assert_eq!(ProblemSpec::from_json(short).unwrap().family, ProblemFamily::Rosenbrock { n: 2 });
        assert!(ProblemSpec::from_json(r#"{"schema":"x","family":{"kind":"bound_quadratic"}}"#).is_err());
    }

    #[test]
    fn rosenbrock_vanishes_at_its_minimizer() {
        let built = ProblemSpec::new(ProblemFamily::Rosenbrock { n: 4 }, 0, 0.0).build().unwrap();
        assert_eq!(chi2(&built.problem, &[1.0; 4]).unwrap().0, 0.0);
        let (f, r) = chi2(&built.problem, &built.x0).unwrap();
        assert!((r[0] - 10.0 * (1.0 - 1.44)).abs() < 1e-12);
        assert!((f - 2.0 * 24.2).abs() < 1e-9);
    }

    #[test]
    fn noise_is_deterministic_in_x() {
        let built = ProblemSpec::new(ProblemFamily::Quadratic { n: 2 }, 3, 1e-3).build().unwrap();
        let a = built.problem.simulate(&[0.1, 0.2]).unwrap();
        let b = built.problem.simulate(&[0.1, 0.2]).unwrap();
        let c = built.problem.simulate(&[0.1, 0.2000001]).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!((a[0] - 0.05).abs() < 1e-2);
    }

    #[test]
    fn exponential_fit_has_expected_shape() {
        let built = ProblemSpec::new(ProblemFamily::ExponentialFit, 1, 1e-6).build().unwrap();
        assert_eq!((built.problem.n(), built.problem.o()), (8, 40));
        assert!(built.problem.is_feasible(&built.x0));
        let (f_truth, _) = chi2(&built.problem, &exponential_fit_truth()).unwrap();
        assert!(f_truth > 5.0 && f_truth < 100.0, "chi2 at truth {f_truth}");
    }
}
