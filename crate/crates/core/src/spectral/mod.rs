//! Null spaces of shifted symmetric blocks.
//!
//! Given a block `A` and a known eigenvalue `lambda`, each solver returns an
//! orthonormal basis of `{z : (A - lambda I) z = 0}`:
//!
//! * [`rqr_nullspace`]: randomized QR of the densified shifted block,
//! * [`sil_nullspace`]: block Lanczos on `(A - (lambda + offset) I)^-1`,
//! * [`pasi_nullspace`]: subspace iteration on a polynomial filter `p(A)`
//!   with `p(lambda) = 1`,
//! * [`dense_null_oracle`]: full eigendecomposition, used as a reference.
//!
//! An empty basis (`r = 0`) is a normal outcome, not an error.

mod filter;
mod pasi;
mod rqr;
mod sil;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use filter::SpectralFilter;
pub use pasi::{pasi_nullspace, PasiOptions};
pub use rqr::{rqr_nullspace, RqrOptions};
pub use sil::{sil_nullspace, SilOptions};

use crate::linalg::{orthonormalize, sym_eig_sorted};
use crate::sparse::SymmetricOperatorBlock;

/// Largest block the dense paths will densify by default.
pub const DEFAULT_DENSE_CAP: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("block too large for dense path: dim {dim} exceeds cap {cap}")]
    BlockTooLarge { dim: usize, cap: usize },
    #[error("shift hit an eigenvalue (shift {shift}); retry with a new offset")]
    ShiftHitEigenvalue { shift: f64 },
    #[error("no convergence after {steps} steps; {found} null vectors found")]
    NotConverged { steps: usize, found: usize, partial: Box<NullSpaceBasis> },
    #[error("lambda {lambda} outside spectrum bounds [{lo}, {hi}]")]
    LambdaOutsideBounds { lambda: f64, lo: f64, hi: f64 },
    #[error("rank not revealed by randomized QR after {attempts} attempts")]
    RankNotRevealed { attempts: usize },
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullSpaceAlgorithm {
    Rqr,
    Sil,
    Pasi,
    Dense,
}

impl NullSpaceAlgorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Rqr => "rqr",
            Self::Sil => "sil",
            Self::Pasi => "pasi",
            Self::Dense => "dense",
        }
    }
}

impl std::str::FromStr for NullSpaceAlgorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rqr" => Ok(Self::Rqr),
            "sil" => Ok(Self::Sil),
            "pasi" => Ok(Self::Pasi),
            "dense" => Ok(Self::Dense),
            other => Err(format!("unknown null-space algorithm '{other}'")),
        }
    }
}

/// Orthonormal basis of the null space of one shifted block.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSpaceBasis {
    pub block_label: String,
    pub lambda: f64,
    pub algorithm: NullSpaceAlgorithm,
    /// `dim x r`, orthonormal columns.
    pub vectors: DMatrix<f64>,
    /// `max_j ||(A - lambda I) z_j||_2`, zero for an empty basis.
    pub residual_norm: f64,
}

impl NullSpaceBasis {
    pub fn empty(block: &SymmetricOperatorBlock, lambda: f64, algorithm: NullSpaceAlgorithm) -> Self {
        Self {
            block_label: block.label().to_string(),
            lambda,
            algorithm,
            vectors: DMatrix::zeros(block.dim(), 0),
            residual_norm: 0.0,
        }
    }

    /// Wraps `vectors`, re-orthonormalizing them and measuring the residual
    /// against `block`.
    pub fn from_vectors(
        block: &SymmetricOperatorBlock,
        lambda: f64,
        algorithm: NullSpaceAlgorithm,
        vectors: &DMatrix<f64>,
    ) -> Self {
        let q = orthonormalize(vectors, &DMatrix::zeros(block.dim(), 0), 1e-6);
        let residual_norm = shifted_residual(block, lambda, &q);
        Self {
            block_label: block.label().to_string(),
            lambda,
            algorithm,
            vectors: q,
            residual_norm,
        }
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn rank(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.rank() == 0
    }
}

/// `max_j ||(A - lambda I) v_j||_2`.
pub fn shifted_residual(block: &SymmetricOperatorBlock, lambda: f64, v: &DMatrix<f64>) -> f64 {
    if v.ncols() == 0 {
        return 0.0;
    }
    let r = block.apply_shifted(v, lambda);
    (0..r.ncols()).map(|c| r.column(c).norm()).fold(0.0, f64::max)
}

/// Full eigendecomposition of a block, reusable across shifts.
#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    label: String,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl DenseSpectrum {
    pub fn new(block: &SymmetricOperatorBlock, cap: usize) -> Result<Self, SpectralError> {
        if block.dim() > cap {
            return Err(SpectralError::BlockTooLarge { dim: block.dim(), cap });
        }
        let (eigenvalues, eigenvectors) = sym_eig_sorted(&block.to_dense());
        Ok(Self { label: block.label().to_string(), eigenvalues, eigenvectors })
    }

    /// Number of eigenvalues with `|mu - lambda| <= tol`.
    pub fn count_near(&self, lambda: f64, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|&&mu| (mu - lambda).abs() <= tol).count()
    }

    pub fn null_basis(&self, block: &SymmetricOperatorBlock, lambda: f64, tol: f64) -> NullSpaceBasis {
        let idx: Vec<usize> = (0..self.eigenvalues.len())
            .filter(|&i| (self.eigenvalues[i] - lambda).abs() <= tol)
            .collect();
        let mut v = DMatrix::zeros(self.eigenvectors.nrows(), idx.len());
        for (c, &i) in idx.iter().enumerate() {
            v.set_column(c, &self.eigenvectors.column(i));
        }
        let residual_norm = shifted_residual(block, lambda, &v);
        NullSpaceBasis {
            block_label: self.label.clone(),
            lambda,
            algorithm: NullSpaceAlgorithm::Dense,
            vectors: v,
            residual_norm,
        }
    }
}

/// Reference null space from a full symmetric eigendecomposition: the
/// eigenvectors whose eigenvalues lie within `tol` of `lambda`.
pub fn dense_null_oracle(
    block: &SymmetricOperatorBlock,
    lambda: f64,
    tol: f64,
) -> Result<NullSpaceBasis, SpectralError> {
    Ok(DenseSpectrum::new(block, DEFAULT_DENSE_CAP)?.null_basis(block, lambda, tol))
}

/// Principal angles between two subspaces, in radians, descending.
///
/// Small angles come from the sines of the residual `(I - B1 B1^T) B2`, large
/// ones from the cosines `svd(B1^T B2)`; arccos alone cannot resolve angles
/// below about `1e-8`.
pub fn principal_angles(b1: &NullSpaceBasis, b2: &NullSpaceBasis) -> Result<Vec<f64>, SpectralError> {
    principal_angles_raw(&b1.vectors, &b2.vectors)
}

pub fn principal_angles_raw(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Vec<f64>, SpectralError> {
    if x.nrows() != y.nrows() {
        return Err(SpectralError::DimensionMismatch { left: x.nrows(), right: y.nrows() });
    }
    let (big, small) = if x.ncols() >= y.ncols() { (x, y) } else { (y, x) };
    let k = small.ncols();
    if k == 0 {
        return Ok(Vec::new());
    }
    let cross = big.transpose() * small;
    let mut cos: Vec<f64> = cross.singular_values().iter().map(|s| s.clamp(0.0, 1.0)).collect();
    cos.sort_by(|a, b| b.total_cmp(a));
    let resid = small - big * &cross;
    let mut sin: Vec<f64> = resid.singular_values().iter().map(|s| s.clamp(0.0, 1.0)).collect();
    sin.sort_by(|a, b| a.total_cmp(b));
    sin.resize(k, 0.0);
    let mut angles: Vec<f64> = (0..k)
        .map(|i| if cos[i] * cos[i] >= 0.5 { sin[i].asin() } else { cos[i].acos() })
        .map(|a| a.clamp(0.0, std::f64::consts::FRAC_PI_2))
        .collect();
    angles.sort_by(|a, b| b.total_cmp(a));
    Ok(angles)
}

/// Largest principal angle, `0` when either basis is empty.
pub fn max_principal_angle(b1: &NullSpaceBasis, b2: &NullSpaceBasis) -> Result<f64, SpectralError> {
    Ok(principal_angles(b1, b2)?.first().copied().unwrap_or(0.0))
}
