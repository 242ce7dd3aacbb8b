use nalgebra::DMatrix;

use super::SpectralError;
use crate::linalg::axpy_mat;
use crate::sparse::SymmetricOperatorBlock;

/// Polynomial filter `p` with `p(lambda) = 1` and `|p| < 1` on the unwanted
/// part of the spectrum.
///
/// The unwanted set is `[lo, hi]` minus the open window
/// `(lambda - radius, lambda + radius)`. With `s = (w - lambda)^2` it maps to
/// the single interval `[radius^2, s_max]`, on which `p` is a Chebyshev
/// polynomial in `s` normalized to one at `s = 0`. This covers a target at the
/// edge of the spectrum and one in its interior the same way.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFilter {
    pub lambda: f64,
    pub lo: f64,
    pub hi: f64,
    pub radius: f64,
    center: f64,
    half_width: f64,
    /// Chebyshev coefficients in the mapped variable
    /// `t = (s - center) / half_width`.
    pub coefficients: Vec<f64>,
}

impl SpectralFilter {
    /// `degree` is the degree in `w`; odd values are rounded up.
    pub fn new(lambda: f64, lo: f64, hi: f64, radius: f64, degree: usize) -> Result<Self, SpectralError> {
        if !(lo <= lambda && lambda <= hi) {
            return Err(SpectralError::LambdaOutsideBounds { lambda, lo, hi });
        }
        if !(radius > 0.0) || degree == 0 {
            return Err(SpectralError::InvalidOption(
                "filter needs radius > 0 and degree >= 1".into(),
            ));
        }
        let s_lo = radius * radius;
        let s_hi = (lo - lambda).powi(2).max((hi - lambda).powi(2));
        if s_hi <= s_lo {
            // Nothing unwanted inside [lo, hi]: p = 1.
            return Ok(Self {
                lambda,
                lo,
                hi,
                radius,
                center: 0.0,
                half_width: 1.0,
                coefficients: vec![1.0],
            });
        }
        let center = 0.5 * (s_hi + s_lo);
        let half_width = 0.5 * (s_hi - s_lo);
        let d = degree.div_ceil(2);
        let t0 = -center / half_width;
        let mut coefficients = vec![0.0; d + 1];
        coefficients[d] = 1.0 / chebyshev(d, t0);
        Ok(Self { lambda, lo, hi, radius, center, half_width, coefficients })
    }

    /// Filter for a block with bounds from Gershgorin discs.
    pub fn for_block(
        block: &SymmetricOperatorBlock,
        lambda: f64,
        radius: f64,
        degree: usize,
    ) -> Result<Self, SpectralError> {
        let (lo, hi) = block.gershgorin_bounds();
        Self::new(lambda, lo, hi, radius, degree)
    }

    /// Degree in `w`.
    pub fn degree(&self) -> usize {
        2 * (self.coefficients.len() - 1)
    }

    fn mapped(&self, w: f64) -> f64 {
        ((w - self.lambda).powi(2) - self.center) / self.half_width
    }

    /// `p(w)` by Clenshaw's recurrence.
    pub fn eval(&self, w: f64) -> f64 {
        let t = self.mapped(w);
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coefficients.iter().skip(1).rev() {
            let b0 = c + 2.0 * t * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        self.coefficients[0] + t * b1 - b2
    }

    /// Unwanted part of `[lo, hi]`, as at most two closed intervals.
    pub fn unwanted_intervals(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        if self.lambda - self.radius >= self.lo {
            out.push((self.lo, self.lambda - self.radius));
        }
        if self.lambda + self.radius <= self.hi {
            out.push((self.lambda + self.radius, self.hi));
        }
        out
    }

    /// `max |p|` over the unwanted set (the per-application damping factor).
    pub fn damping(&self) -> f64 {
        if self.coefficients.len() == 1 {
            return 1.0;
        }
        self.coefficients.last().copied().unwrap_or(1.0).abs()
    }

    /// `p(A) X` via the three-term recurrence in `t(A)`.
    pub fn apply(&self, block: &SymmetricOperatorBlock, x: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.coefficients.len() - 1;
        if d == 0 {
            return x * self.coefficients[0];
        }
        // The recurrence runs on transposed blocks to keep the sparse
        // products contiguous.
        let xt = x.transpose();
        let mut acc = &xt * self.coefficients[0];
        let mut tmp = DMatrix::zeros(xt.nrows(), xt.ncols());
        let (scale, offset) = (1.0 / self.half_width, -self.center / self.half_width);
        let mut t_of = |v: &DMatrix<f64>, out: &mut DMatrix<f64>| {
            block.apply_transposed_into(v, self.lambda, &mut tmp);
            block.apply_transposed_into(&tmp, self.lambda, out);
            axpy_mat(out, offset, v, scale);
        };
        let mut prev = xt.clone();
        let mut cur = DMatrix::zeros(xt.nrows(), xt.ncols());
        t_of(&xt, &mut cur);
        if self.coefficients[1] != 0.0 {
            axpy_mat(&mut acc, self.coefficients[1], &cur, 1.0);
        }
        let mut next = DMatrix::zeros(xt.nrows(), xt.ncols());
        for k in 2..=d {
            t_of(&cur, &mut next);
            axpy_mat(&mut next, -1.0, &prev, 2.0);
            if self.coefficients[k] != 0.0 {
                axpy_mat(&mut acc, self.coefficients[k], &next, 1.0);
            }
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        acc.transpose()
    }
}

/// `T_k(t)`, valid for any real `t`.
pub(crate) fn chebyshev(k: usize, t: f64) -> f64 {
    let (mut a, mut b) = (1.0, t);
    if k == 0 {
        return 1.0;
    }
    for _ in 1..k {
        let c = 2.0 * t * b - a;
        a = b;
        b = c;
    }
    b
}
