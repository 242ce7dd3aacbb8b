//! Interpolation sets and minimum-Frobenius-norm quadratic models.
//!
//! Displacements from the center are scaled by the trust-region radius
//! before any linear algebra, so pivot and conditioning thresholds are
//! radius independent.

use nalgebra::{DMatrix, DVector};

/// `c + g^T s + 1/2 s^T H s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub c: f64,
    pub g: DVector<f64>,
    pub h: DMatrix<f64>,
}

impl Quadratic {
    pub fn zero(n: usize) -> Self {
        Self { c: 0.0, g: DVector::zeros(n), h: DMatrix::zeros(n, n) }
    }

    pub fn eval(&self, s: &DVector<f64>) -> f64 {
        self.c + self.g.dot(s) + 0.5 * s.dot(&(&self.h * s))
    }
}

/// Selects up to `n` displacements (by position in `candidates`) that are
/// sufficiently affinely independent: each accepted scaled displacement
/// `d / delta` has norm at most `radius` and keeps a component of at least
/// `pivot` orthogonal to those already accepted.
///
/// Returns the accepted positions and an orthonormal basis of the directions
/// still missing.
pub fn affine_points(
    n: usize,
    candidates: &[DVector<f64>],
    delta: f64,
    radius: f64,
    pivot: f64,
) -> (Vec<usize>, DMatrix<f64>) {
    let mut chosen = Vec::new();
    let mut complement = DMatrix::<f64>::identity(n, n);
    for (pos, d) in candidates.iter().enumerate() {
        if complement.ncols() == 0 {
            break;
        }
        let scaled = d / delta;
        if scaled.norm() > radius * (1.0 + 1e-10) || scaled.norm() == 0.0 {
            continue;
        }
        let coeffs = complement.transpose() * &scaled;
        if coeffs.norm() < pivot {
            continue;
        }
        chosen.push(pos);
        complement = shrink_complement(&complement, &coeffs);
    }
    (chosen, complement)
}

/// Orthonormal basis of `span(q)` orthogonal to `q * v`.
fn shrink_complement(q: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let k = q.ncols();
    let u = v / v.norm();
    // Householder reflector mapping u to e_1; its trailing columns span u's
    // orthogonal complement in R^k.
    let mut w = u.clone();
    let alpha = if u[0] >= 0.0 { -1.0 } else { 1.0 };
    w[0] -= alpha;
    let wn = w.norm();
    let mut refl = DMatrix::<f64>::identity(k, k);
    if wn > 0.0 {
        let w = w / wn;
        refl -= 2.0 * &w * w.transpose();
    }
    q * refl.columns(1, k - 1)
}

/// Outcome of fitting models to one interpolation set.
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub models: Vec<Quadratic>,
    /// Largest `|m(y) - value| / max|value|` over points and models.
    pub interpolation_error: f64,
}

/// Interpolation system on a fixed set of scaled displacements, shared by
/// every model fitted on that set.
pub struct InterpolationSystem {
    /// Scaled displacements, excluding the center.
    y: Vec<DVector<f64>>,
    delta: f64,
    n: usize,
    /// Orthonormal basis of the null space of `P^T`.
    z: DMatrix<f64>,
    /// Factor of the reduced system `Z^T A Z` (absent when no extra points).
    reduced: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    a: DMatrix<f64>,
    p: DMatrix<f64>,
}

impl InterpolationSystem {
    /// Condition number of the reduced system, `1` for a linear-only set.
    pub fn condition(displacements: &[DVector<f64>], delta: f64) -> Option<f64> {
        let sys = Self::new(displacements, delta)?;
        let Some(_) = &sys.reduced else { return Some(1.0) };
        let m = sys.z.transpose() * &sys.a * &sys.z;
        let eig = m.symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e.abs()), hi.max(e.abs())));
        (lo > 0.0).then(|| hi / lo)
    }

    /// `None` when the points are not poised: fewer than `n` affinely
    /// independent displacements, or a singular reduced system.
    pub fn new(displacements: &[DVector<f64>], delta: f64) -> Option<Self> {
        let n = displacements.first()?.len();
        let m = displacements.len();
        if m < n {
            return None;
        }
        let y: Vec<DVector<f64>> = displacements.iter().map(|d| d / delta).collect();
        let rows = m + 1;
        let mut p = DMatrix::zeros(rows, n + 1);
        p[(0, 0)] = 1.0;
        for (j, yj) in y.iter().enumerate() {
            p[(j + 1, 0)] = 1.0;
            p.view_mut((j + 1, 1), (1, n)).copy_from(&yj.transpose());
        }
        let mut a = DMatrix::zeros(rows, rows);
        for (j, yj) in y.iter().enumerate() {
            for (k, yk) in y.iter().enumerate() {
                let d = yj.dot(yk);
                a[(j + 1, k + 1)] = 0.5 * d * d;
            }
        }
        let qr = p.clone().qr();
        let r = qr.r();
        let rmax = r.diagonal().amax();
        if r.diagonal().iter().any(|d| d.abs() <= 1e-12 * rmax.max(1.0)) {
            return None;
        }
        let mut q_full = DMatrix::<f64>::identity(rows, rows);
        qr.q_tr_mul(&mut q_full);
        let z = q_full.rows(n + 1, rows - n - 1).transpose();
        let reduced = if z.ncols() > 0 {
            let mm = z.transpose() * &a * &z;
            Some(nalgebra::Cholesky::new((&mm + mm.transpose()) * 0.5)?)
        } else {
            None
        };
        Some(Self { y, delta, n, z, reduced, a, p })
    }

    /// Fits one model per column of `values` (rows: center first, then the
    /// displacements in order). Each model's Hessian is `prev` plus the
    /// minimum-Frobenius-norm correction that interpolates the values.
    pub fn fit(&self, values: &DMatrix<f64>, prev: &[DMatrix<f64>]) -> ModelFit {
        let n = self.n;
        let rows = self.y.len() + 1;
        let d2 = self.delta * self.delta;
        let mut models = Vec::with_capacity(values.ncols());
        let mut worst: f64 = 0.0;
        for col in 0..values.ncols() {
            let hs_prev = &prev[col] * d2;
            let mut b = DVector::zeros(rows);
            b[0] = values[(0, col)];
            for (j, yj) in self.y.iter().enumerate() {
                b[j + 1] = values[(j + 1, col)] - 0.5 * yj.dot(&(&hs_prev * yj));
            }
            let lambda = match &self.reduced {
                Some(chol) => &self.z * chol.solve(&(self.z.transpose() * &b)),
                None => DVector::zeros(rows),
            };
            let rhs = &b - &self.a * &lambda;
            let cg = self.p.clone().svd(true, true).solve(&rhs, 1e-14).expect("SVD computed with U and V");
            let mut dh = DMatrix::zeros(n, n);
            for (j, yj) in self.y.iter().enumerate() {
                dh += lambda[j + 1] * yj * yj.transpose();
            }
            let hs = hs_prev + dh;
            let scaled = Quadratic { c: cg[0], g: cg.rows(1, n).into_owned(), h: hs };
            let scale = values.column(col).amax().max(f64::MIN_POSITIVE);
            worst = worst.max((scaled.c - values[(0, col)]).abs() / scale);
            for (j, yj) in self.y.iter().enumerate() {
                worst = worst.max((scaled.eval(yj) - values[(j + 1, col)]).abs() / scale);
            }
            models.push(Quadratic { c: scaled.c, g: scaled.g / self.delta, h: scaled.h / d2 });
        }
        ModelFit { models, interpolation_error: worst }
    }
}
