use nalgebra::{DMatrix, QR};

use super::{shifted_residual, NullSpaceAlgorithm, NullSpaceBasis, SpectralError, DEFAULT_DENSE_CAP};
use crate::linalg::{gaussian_matrix, seeded_rng};
use crate::sparse::SymmetricOperatorBlock;

#[derive(Debug, Clone, PartialEq)]
pub struct RqrOptions {
    /// Relative rank threshold: diagonal entries of the triangular factor at
    /// or below `rank_tol * ||A - lambda I||_F` count as zero. Defaults to
    /// `dim * eps`.
    pub rank_tol: Option<f64>,
    /// Number of random mixing columns before oversampling. Defaults to `dim`.
    pub sketch_width: Option<usize>,
    pub oversampling: usize,
    pub dense_cap: usize,
    pub seed: u64,
}

impl Default for RqrOptions {
    fn default() -> Self {
        Self { rank_tol: None, sketch_width: None, oversampling: 8, dense_cap: DEFAULT_DENSE_CAP, seed: 0 }
    }
}

const MAX_ATTEMPTS: usize = 3;

/// Null space by randomized rank-revealing QR.
///
/// `B = A - lambda I` is densified and mixed by a Haar-random orthonormal
/// `V` (first QR, of a Gaussian matrix). The unpivoted QR of `B V` (second QR)
/// then has its negligible diagonal entries trailing with probability one, and
/// since `B` is symmetric its null space is the orthogonal complement of its
/// range: the trailing columns of the full orthogonal factor.
pub fn rqr_nullspace(
    block: &SymmetricOperatorBlock,
    lambda: f64,
    opts: &RqrOptions,
) -> Result<NullSpaceBasis, SpectralError> {
    let n = block.dim();
    if n > opts.dense_cap {
        return Err(SpectralError::BlockTooLarge { dim: n, cap: opts.dense_cap });
    }
    let mut b = block.to_dense();
    for i in 0..n {
        b[(i, i)] -= lambda;
    }
    let b_norm = b.norm();
    let rank_tol = opts.rank_tol.unwrap_or(n as f64 * f64::EPSILON);
    if !(rank_tol > 0.0) {
        return Err(SpectralError::InvalidOption("rank_tol must be positive".into()));
    }
    let cutoff = rank_tol * b_norm;
    let mut width = opts.sketch_width.map_or(n, |w| (w + opts.oversampling).min(n)).max(1);

    let mut rng = seeded_rng(opts.seed, 0x5251);
    for _ in 0..MAX_ATTEMPTS {
        let omega = gaussian_matrix(&mut rng, n, width);
        let v = QR::new(omega).q();
        let qr = QR::new(&b * &v);
        let diag: Vec<f64> = qr.r().diagonal().iter().map(|d| d.abs()).collect();
        let rank = diag.iter().filter(|&&d| d > cutoff).count();
        if rank == width && width < n {
            // The sketch may not have captured the full range.
            width = n;
            continue;
        }
        if diag[..rank].iter().any(|&d| d <= cutoff) {
            continue;
        }
        let null_dim = n - rank;
        if null_dim == 0 {
            return Ok(NullSpaceBasis::empty(block, lambda, NullSpaceAlgorithm::Rqr));
        }
        let mut qt = DMatrix::<f64>::identity(n, n);
        qr.q_tr_mul(&mut qt);
        let z = qt.rows(rank, null_dim).transpose();
        let residual_norm = shifted_residual(block, lambda, &z);
        return Ok(NullSpaceBasis {
            block_label: block.label().to_string(),
            lambda,
            algorithm: NullSpaceAlgorithm::Rqr,
            vectors: z,
            residual_norm,
        });
    }
    Err(SpectralError::RankNotRevealed { attempts: MAX_ATTEMPTS })
}
