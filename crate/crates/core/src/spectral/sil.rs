use nalgebra::{DMatrix, LU, Dyn};

use super::{NullSpaceAlgorithm, NullSpaceBasis, SpectralError, DEFAULT_DENSE_CAP};
use crate::krylov::{block_lanczos, BlockOperator};
use crate::linalg::{gaussian_matrix, hcat, orthonormalize, seeded_rng};
use crate::sparse::SymmetricOperatorBlock;

#[derive(Debug, Clone, PartialEq)]
pub struct SilOptions {
    /// Shift is placed at `lambda + shift_offset`.
    pub shift_offset: f64,
    /// Maximum block Lanczos steps per restart.
    pub k_max: usize,
    /// Relative residual tolerance against `||A||_F`.
    pub tol: f64,
    /// Initial block size; doubles whenever a restart fills its block.
    pub block_size: usize,
    pub dense_cap: usize,
    pub seed: u64,
}

impl Default for SilOptions {
    fn default() -> Self {
        Self { shift_offset: 0.5, k_max: 60, tol: 1e-12, block_size: 8, dense_cap: DEFAULT_DENSE_CAP, seed: 0 }
    }
}

/// `(A - sigma I)^-1`, factored once.
struct ShiftInverse {
    lu: LU<f64, Dyn, Dyn>,
}

impl BlockOperator for ShiftInverse {
    fn dim(&self) -> usize {
        self.lu.l().nrows()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu.solve(x).expect("factorization checked for singularity")
    }
}

impl ShiftInverse {
    fn new(block: &SymmetricOperatorBlock, sigma: f64) -> Result<Self, SpectralError> {
        let n = block.dim();
        let mut a = block.to_dense();
        for i in 0..n {
            a[(i, i)] -= sigma;
        }
        let scale = a.amax().max(f64::MIN_POSITIVE);
        let lu = a.lu();
        let u = lu.u();
        let min_pivot = (0..n).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
        if !(min_pivot > n as f64 * f64::EPSILON * scale) {
            return Err(SpectralError::ShiftHitEigenvalue { shift: sigma });
        }
        Ok(Self { lu })
    }
}

/// Null space by shift-invert block Lanczos.
///
/// With `sigma = lambda + offset`, null vectors of `A - lambda I` are the
/// eigenvectors of `(A - sigma I)^-1` with eigenvalue `tau = -1 / offset`.
/// Each restart runs block Lanczos (deflated against what is already found)
/// until the Ritz values near `tau` are resolved; a restart that fills its
/// whole block triggers another with twice the block size.
pub fn sil_nullspace(
    block: &SymmetricOperatorBlock,
    lambda: f64,
    opts: &SilOptions,
) -> Result<NullSpaceBasis, SpectralError> {
    let n = block.dim();
    if n > opts.dense_cap {
        return Err(SpectralError::BlockTooLarge { dim: n, cap: opts.dense_cap });
    }
    if !(opts.shift_offset != 0.0 && opts.tol > 0.0 && opts.k_max > 0 && opts.block_size > 0) {
        return Err(SpectralError::InvalidOption(
            "SIL needs nonzero shift_offset, tol > 0, k_max > 0 and block_size > 0".into(),
        ));
    }
    let sigma = lambda + opts.shift_offset;
    let op = ShiftInverse::new(block, sigma)?;
    let tau = -1.0 / opts.shift_offset;
    let window = 0.5 * tau.abs();
    let a_norm = block.frobenius_norm().max(f64::MIN_POSITIVE);
    let null_tol = opts.tol * a_norm;
    let mut rng = seeded_rng(opts.seed, 0x5349);

    let mut locked = DMatrix::zeros(n, 0);
    let mut p = opts.block_size.min(n);
    let mut total_steps = 0;
    loop {
        let room = n - locked.ncols();
        if room == 0 {
            break;
        }
        p = p.min(room);
        let start = gaussian_matrix(&mut rng, n, p);
        let mut history: Vec<usize> = Vec::new();
        let (ritz, resolved) = block_lanczos(&op, &start, &locked, opts.k_max, &mut rng, |ritz| {
            let near: Vec<usize> =
                (0..ritz.len()).filter(|&i| (ritz.values[i] - tau).abs() <= window).collect();
            let converged = near
                .iter()
                .filter(|&&i| ritz.residual(i) <= opts.tol * tau.abs())
                .count();
            history.push(converged);
            if ritz.exhausted || converged >= p {
                return true;
            }
            let stable = history.len() >= 3 && history[history.len() - 3..].iter().all(|&c| c == converged);
            stable && converged == near.len()
        });
        total_steps += ritz.steps;

        let candidates: Vec<usize> =
            (0..ritz.len()).filter(|&i| (ritz.values[i] - tau).abs() <= window).collect();
        let vecs = ritz.vectors(&candidates);
        let residuals = block.apply_shifted(&vecs, lambda);
        let keep: Vec<usize> = (0..candidates.len())
            .filter(|&c| residuals.column(c).norm() <= null_tol)
            .collect();
        let mut found = DMatrix::zeros(n, keep.len());
        for (c, &k) in keep.iter().enumerate() {
            found.set_column(c, &vecs.column(k));
        }
        let found = orthonormalize(&found, &locked, 1e-6);
        let new = found.ncols();
        locked = hcat(&locked, &found);

        if !resolved {
            let partial = NullSpaceBasis::from_vectors(block, lambda, NullSpaceAlgorithm::Sil, &locked);
            return Err(SpectralError::NotConverged {
                steps: total_steps,
                found: partial.rank(),
                partial: Box::new(partial),
            });
        }
        if new < p {
            break;
        }
        p *= 2;
    }
    Ok(NullSpaceBasis::from_vectors(block, lambda, NullSpaceAlgorithm::Sil, &locked))
}
