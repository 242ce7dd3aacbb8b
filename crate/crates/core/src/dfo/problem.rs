use serde::{Deserialize, Serialize};

use super::DfoError;

/// Black-box simulator returning the `o` observables at `x`.
pub trait Simulator: Send + Sync {
    fn simulate(&self, x: &[f64]) -> Result<Vec<f64>, String>;
}

impl<F> Simulator for F
where
    F: Fn(&[f64]) -> Result<Vec<f64>, String> + Send + Sync,
{
    fn simulate(&self, x: &[f64]) -> Result<Vec<f64>, String> {
        self(x)
    }
}

/// Weighted least-squares fit of simulated observables to data,
/// `f(x) = sum_i ((d_i - s_i(x)) / sigma_i)^2` over the box `l <= x <= u`.
pub struct ResidualProblem {
    simulator: Box<dyn Simulator>,
    pub data: Vec<f64>,
    pub sigma: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl std::fmt::Debug for ResidualProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResidualProblem")
            .field("n", &self.n())
            .field("o", &self.o())
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .finish_non_exhaustive()
    }
}

impl ResidualProblem {
    pub fn new(
        simulator: impl Simulator + 'static,
        data: Vec<f64>,
        sigma: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, DfoError> {
        let invalid = |msg: String| Err(DfoError::InvalidProblem(msg));
        if lower.is_empty() {
            return invalid("at least one parameter is required".into());
        }
        if lower.len() != upper.len() {
            return invalid(format!("{} lower bounds but {} upper bounds", lower.len(), upper.len()));
        }
        if data.is_empty() || data.len() != sigma.len() {
            return invalid(format!("{} data values but {} weights", data.len(), sigma.len()));
        }
        if let Some(j) = (0..lower.len()).find(|&j| !(lower[j] < upper[j]) || lower[j].is_nan()) {
            return invalid(format!(
                "bounds of parameter {j} must satisfy lower < upper (got {} and {}); drop fixed parameters",
                lower[j], upper[j]
            ));
        }
        if let Some(i) = sigma.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return invalid(format!("sigma[{i}] must be positive and finite"));
        }
        if data.iter().any(|d| !d.is_finite()) {
            return invalid("data values must be finite".into());
        }
        Ok(Self { simulator: Box::new(simulator), data, sigma, lower, upper })
    }

    pub fn n(&self) -> usize {
        self.lower.len()
    }

    pub fn o(&self) -> usize {
        self.data.len()
    }

    /// Raw simulator output, shape-checked.
    pub fn simulate(&self, x: &[f64]) -> Result<Vec<f64>, DfoError> {
        let fail = |message: String| DfoError::Evaluator { x: x.to_vec(), message };
        if x.len() != self.n() {
            return Err(fail(format!("expected {} parameters, got {}", self.n(), x.len())));
        }
        let s = self.simulator.simulate(x).map_err(fail)?;
        if s.len() != self.o() {
            return Err(fail(format!("simulator returned {} observables, expected {}", s.len(), self.o())));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(fail("simulator returned a non-finite value".into()));
        }
        Ok(s)
    }

    /// Residuals `r_i = (d_i - s_i(x)) / sigma_i`; one simulator call.
    pub fn residuals(&self, x: &[f64]) -> Result<Vec<f64>, DfoError> {
        let s = self.simulate(x)?;
        Ok(self.data.iter().zip(&s).zip(&self.sigma).map(|((d, s), w)| (d - s) / w).collect())
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.lower.iter().zip(&self.upper)).map(|(v, (l, u))| v.clamp(*l, *u)).collect()
    }

    pub fn is_feasible(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| l <= v && v <= u)
    }
}

pub fn sum_of_squares(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// `(f, r)` at `x`: exactly one simulator call.
pub fn chi2(problem: &ResidualProblem, x: &[f64]) -> Result<(f64, Vec<f64>), DfoError> {
    let r = problem.residuals(x)?;
    Ok((sum_of_squares(&r), r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub index: usize,
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    pub f: f64,
}

impl EvaluationRecord {
    pub fn new(index: usize, x: Vec<f64>, residuals: Vec<f64>) -> Self {
        let f = sum_of_squares(&residuals);
        Self { index, x, residuals, f }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(values: Vec<f64>) -> impl Simulator {
        move |_: &[f64]| Ok(values.clone())
    }

    #[test]
    fn chi2_examples() {
        let p = ResidualProblem::new(constant(vec![0.0, 0.0]), vec![1.0, 2.0], vec![1.0, 2.0], vec![-1.0], vec![1.0])
            .unwrap();
        assert_eq!(chi2(&p, &[0.0]).unwrap(), (2.0, vec![1.0, 1.0]));
        let same =
            ResidualProblem::new(constant(vec![1.0, 2.0]), vec![1.0, 2.0], vec![1.0, 1.0], vec![-1.0], vec![1.0])
                .unwrap();
        assert_eq!(chi2(&same, &[0.0]).unwrap().0, 0.0);
        let doubled =
            ResidualProblem::new(constant(vec![0.0, 0.0]), vec![1.0, 2.0], vec![2.0, 4.0], vec![-1.0], vec![1.0])
                .unwrap();
        assert_eq!(chi2(&doubled, &[0.0]).unwrap().0, 0.5);
    }

    #[test]
    fn invalid_problems() {
        let mk = |l: f64, u: f64, s: f64| {
            ResidualProblem::new(constant(vec![0.0]), vec![0.0], vec![s], vec![l], vec![u])
        };
        assert!(mk(1.0, 0.0, 1.0).is_err());
        assert!(mk(1.0, 1.0, 1.0).is_err());
        assert!(mk(0.0, 1.0, 0.0).is_err());
        assert!(mk(f64::NEG_INFINITY, f64::INFINITY, 1.0).is_ok());
    }

    #[test]
    fn evaluator_errors_carry_x() {
        let failing = |_: &[f64]| -> Result<Vec<f64>, String> { Err("boom".into()) };
        let p = ResidualProblem::new(failing, vec![0.0], vec![1.0], vec![0.0], vec![1.0]).unwrap();
        match chi2(&p, &[0.5]) {
            Err(DfoError::Evaluator { x, message }) => {
                assert_eq!(x, vec![0.5]);
                assert_eq!(message, "boom");
            }
            other => panic!("unexpected {other:?}"),
        }
        let short = ResidualProblem::new(constant(vec![]), vec![0.0], vec![1.0], vec![0.0], vec![1.0]).unwrap();
        assert!(chi2(&short, &[0.5]).is_err());
    }
}
