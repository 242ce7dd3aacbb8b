use nalgebra::DMatrix;

use super::{NullSpaceAlgorithm, NullSpaceBasis, SpectralError, SpectralFilter};
use crate::linalg::{gaussian_matrix, hcat, orthonormalize, seeded_rng, select_columns, sym_eig_sorted};
use crate::sparse::SymmetricOperatorBlock;

#[derive(Debug, Clone, PartialEq)]
pub struct PasiOptions {
    /// Interval containing the spectrum; Gershgorin bounds when `None`.
    pub spectrum_bounds: Option<(f64, f64)>,
    /// Half-width of the window around `lambda` that the filter does not
    /// damp. Any other eigenvalue must lie at least this far from `lambda`.
    pub exclusion_radius: f64,
    pub degree: usize,
    pub block_size: usize,
    pub max_iters: usize,
    /// Relative residual tolerance against `||A||_F`.
    pub tol: f64,
    pub seed: u64,
}

impl Default for PasiOptions {
    fn default() -> Self {
        Self {
            spectrum_bounds: None,
            exclusion_radius: 2.0,
            degree: 50,
            block_size: 8,
            max_iters: 2000,
            tol: 1e-12,
            seed: 0,
        }
    }
}

/// Null space by polynomial-accelerated subspace iteration.
///
/// Each sweep applies the filter `p(A)` to the active block, orthonormalizes
/// it against the locked vectors, and does a Rayleigh-Ritz step with `A`.
/// Ritz vectors whose shifted residual meets the tolerance are locked and
/// replaced by fresh random directions. When an entire block has been locked
/// the block size doubles. The iteration stops once no vector has locked for
/// as many sweeps as the filter needs to resolve a null direction from a
/// random start.
pub fn pasi_nullspace(
    block: &SymmetricOperatorBlock,
    lambda: f64,
    opts: &PasiOptions,
) -> Result<NullSpaceBasis, SpectralError> {
    let n = block.dim();
    if !(opts.tol > 0.0 && opts.block_size > 0 && opts.max_iters > 0) {
        return Err(SpectralError::InvalidOption(
            "PASI needs tol > 0, block_size > 0 and max_iters > 0".into(),
        ));
    }
    let (lo, hi) = opts.spectrum_bounds.unwrap_or_else(|| block.gershgorin_bounds());
    let filter = SpectralFilter::new(lambda, lo, hi, opts.exclusion_radius, opts.degree)?;
    let a_norm = block.frobenius_norm().max(f64::MIN_POSITIVE);
    let null_tol = opts.tol * a_norm;
    let patience = stall_limit(filter.damping(), n, opts.tol);
    let mut rng = seeded_rng(opts.seed, 0x5041);

    let mut locked = DMatrix::zeros(n, 0);
    let mut b = opts.block_size.min(n);
    let mut x = orthonormalize(&gaussian_matrix(&mut rng, n, b), &locked, 1e-8);
    let mut locked_this_block = 0;
    let mut since_lock = 0;
    let mut iters = 0;

    while locked.ncols() < n {
        if iters == opts.max_iters {
            let partial = NullSpaceBasis::from_vectors(block, lambda, NullSpaceAlgorithm::Pasi, &locked);
            return Err(SpectralError::NotConverged {
                steps: iters,
                found: partial.rank(),
                partial: Box::new(partial),
            });
        }
        iters += 1;

        let y = orthonormalize(&filter.apply(block, &x), &locked, 1e-12);
        let rr = rayleigh_ritz(block, lambda, &y);
        let (ritz, residuals) = (&rr.vectors, &rr.shifted_residuals);
        let mut order: Vec<usize> = (0..ritz.ncols()).collect();
        order.sort_by(|&i, &j| residuals[i].total_cmp(&residuals[j]).then(i.cmp(&j)));
        let (null_idx, rest_idx): (Vec<usize>, Vec<usize>) =
            order.iter().partition(|&&i| residuals[i] <= null_tol);
        let newly = select_columns(ritz, &null_idx);
        let rest = select_columns(ritz, &rest_idx);
        // A converged non-null Ritz pair means every more dominant direction
        // of p(A), in particular any null direction, is already well resolved
        // in the span. Every other eigenvalue is at least `radius` away, so a
        // shifted residual below `radius / 2` forces a large null component;
        // without such a vector nothing is left to find.
        let candidate = rest_idx.iter().any(|&i| residuals[i] < 0.5 * opts.exclusion_radius);
        let certified = rest_idx.iter().any(|&i| rr.eigen_residuals[i] <= opts.tol.sqrt() * a_norm);
        let newly = orthonormalize(&newly, &locked, 1e-6);
        locked = hcat(&locked, &newly);
        locked_this_block += newly.ncols();

        if newly.ncols() > 0 {
            since_lock = 0;
        } else {
            since_lock += 1;
            if since_lock >= patience || (certified && !candidate) {
                break;
            }
        }

        let room = n - locked.ncols();
        if room == 0 {
            break;
        }
        if locked_this_block >= b {
            // Whole block converged to null vectors: restart with twice as many.
            b = (2 * b).min(room);
            locked_this_block = 0;
            since_lock = 0;
            x = orthonormalize(&gaussian_matrix(&mut rng, n, b), &locked, 1e-8);
        } else {
            let keep = orthonormalize(&rest, &locked, 1e-8);
            let want = b.min(room);
            x = if keep.ncols() < want {
                let fresh = gaussian_matrix(&mut rng, n, want - keep.ncols());
                hcat(&keep, &orthonormalize(&fresh, &hcat(&locked, &keep), 1e-8))
            } else {
                keep.columns(0, want).into_owned()
            };
            if newly.ncols() > 0 {
                since_lock = 0;
            }
        }
    }
    Ok(NullSpaceBasis::from_vectors(block, lambda, NullSpaceAlgorithm::Pasi, &locked))
}

struct RitzPairs {
    vectors: DMatrix<f64>,
    /// `||(A - lambda I) z||`
    shifted_residuals: Vec<f64>,
    /// `||(A - theta I) z||`
    eigen_residuals: Vec<f64>,
}

/// Ritz pairs of `A` on the span of the orthonormal `y`.
fn rayleigh_ritz(block: &SymmetricOperatorBlock, lambda: f64, y: &DMatrix<f64>) -> RitzPairs {
    if y.ncols() == 0 {
        return RitzPairs {
            vectors: y.clone(),
            shifted_residuals: Vec::new(),
            eigen_residuals: Vec::new(),
        };
    }
    let ay = block.apply(y);
    let h = y.transpose() * &ay;
    let (values, s) = sym_eig_sorted(&h);
    let z = y * &s;
    let az = &ay * &s;
    let mut shifted_residuals = Vec::with_capacity(values.len());
    let mut eigen_residuals = Vec::with_capacity(values.len());
    for (c, &theta) in values.iter().enumerate() {
        let (zc, azc) = (z.column(c), az.column(c));
        shifted_residuals.push((azc - zc * lambda).norm());
        eigen_residuals.push((azc - zc * theta).norm());
    }
    RitzPairs { vectors: z, shifted_residuals, eigen_residuals }
}

/// Sweeps without a new lock after which the remaining block is taken to
/// contain no null direction: enough filter applications to shrink a random
/// start's non-null part below `tol`.
fn stall_limit(damping: f64, n: usize, tol: f64) -> usize {
    if !(damping < 1.0) {
        return usize::MAX;
    }
    let reach = (1e4 * (n as f64).sqrt() / tol).ln();
    (reach / -damping.ln()).ceil().max(3.0) as usize
}
