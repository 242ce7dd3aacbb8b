//! Small dense helpers shared by the eigensolvers and the fitting code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Deterministic generator for a `(seed, stream)` pair.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    // Column-major fill keeps the draw order independent of nalgebra internals.
    let mut m = DMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending and the
/// eigenvector columns permuted to match.
pub fn sym_eig_sorted(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Removes the components of `x` along the (orthonormal) columns of `basis`,
/// twice, in place.
pub fn project_out(x: &mut DMatrix<f64>, basis: &DMatrix<f64>) {
    if basis.ncols() == 0 || x.ncols() == 0 {
        return;
    }
    for _ in 0..2 {
        let coeffs = basis.transpose() * &*x;
        x.gemm(-1.0, basis, &coeffs, 1.0);
    }
}

/// Orthonormalizes the columns of `x` against `against` and each other.
///
/// Columns that lose more than `1 - drop_tol` of their norm to the projection
/// are dropped, so the result may have fewer columns than `x`.
pub fn orthonormalize(x: &DMatrix<f64>, against: &DMatrix<f64>, drop_tol: f64) -> DMatrix<f64> {
    if x.ncols() == 0 {
        return x.clone();
    }
    let norms0 = column_norms(x);
    if norms0.iter().all(|v| *v > 0.0 && v.is_finite()) && x.ncols() <= x.nrows() {
        let mut y = x.clone();
        project_out(&mut y, against);
        if let Some(q) = cholesky_qr(&y, &norms0, drop_tol.max(1e-6)) {
            let mut q = q;
            project_out(&mut q, against);
            let ones = vec![1.0; q.ncols()];
            if let Some(q2) = cholesky_qr(&q, &ones, 0.5) {
                return q2;
            }
        }
        let qr = y.qr();
        let full_rank = qr.r().diagonal().iter().zip(&norms0).all(|(d, n0)| d.abs() > drop_tol * n0);
        if full_rank {
            let mut q = qr.q();
            project_out(&mut q, against);
            return q.qr().q();
        }
    }
    orthonormalize_columnwise(x, against, drop_tol)
}

/// `Q = Y R^-1` with `R^T R = Y^T Y`. Declines (`None`) unless every
/// diagonal entry of `R` exceeds `min_ratio` times the matching `norms`
/// entry, which keeps the Gram matrix well enough conditioned.
fn cholesky_qr(y: &DMatrix<f64>, norms: &[f64], min_ratio: f64) -> Option<DMatrix<f64>> {
    let gram = y.transpose() * y;
    let l = gram.cholesky()?.unpack();
    if !l.diagonal().iter().zip(norms).all(|(d, n)| *d > min_ratio * n) {
        return None;
    }
    let qt = l.solve_lower_triangular(&y.transpose())?;
    Some(qt.transpose())
}

fn orthonormalize_columnwise(x: &DMatrix<f64>, against: &DMatrix<f64>, drop_tol: f64) -> DMatrix<f64> {
    let n = x.nrows();
    let mut kept: Vec<DVector<f64>> = Vec::with_capacity(x.ncols());
    for c in 0..x.ncols() {
        let mut v = x.column(c).into_owned();
        let norm0 = v.norm();
        if norm0 == 0.0 || !norm0.is_finite() {
            continue;
        }
        for _ in 0..2 {
            if against.ncols() > 0 {
                let coeffs = against.transpose() * &v;
                v.gemv(-1.0, against, &coeffs, 1.0);
            }
            for q in &kept {
                let d = q.dot(&v);
                v.axpy(-d, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > drop_tol * norm0 {
            kept.push(v / norm);
        }
    }
    let mut out = DMatrix::zeros(n, kept.len());
    for (c, v) in kept.iter().enumerate() {
        out.set_column(c, v);
    }
    out
}

/// The listed columns of `x`, in the given order.
pub fn select_columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), idx.len());
    for (c, &i) in idx.iter().enumerate() {
        out.set_column(c, &x.column(i));
    }
    out
}

/// `y <- a x + b y` for matrices of equal shape.
pub fn axpy_mat(y: &mut DMatrix<f64>, a: f64, x: &DMatrix<f64>, b: f64) {
    y.zip_apply(x, |yi, xi| *yi = a * xi + b * *yi);
}

/// Appends the columns of `extra` to `base`.
pub fn hcat(base: &DMatrix<f64>, extra: &DMatrix<f64>) -> DMatrix<f64> {
    if base.ncols() == 0 {
        return extra.clone();
    }
    if extra.ncols() == 0 {
        return base.clone();
    }
    let mut out = DMatrix::zeros(base.nrows(), base.ncols() + extra.ncols());
    out.columns_mut(0, base.ncols()).copy_from(base);
    out.columns_mut(base.ncols(), extra.ncols()).copy_from(extra);
    out
}

/// `max |Q^T Q - I|` over all entries.
pub fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let k = q.ncols();
    if k == 0 {
        return 0.0;
    }
    let g = q.transpose() * q;
    (g - DMatrix::<f64>::identity(k, k)).amax()
}

/// Column 2-norms.
pub fn column_norms(x: &DMatrix<f64>) -> Vec<f64> {
    (0..x.ncols()).map(|c| x.column(c).norm()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormalize_drops_dependent_columns() {
        let x = DMatrix::from_column_slice(3, 3, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let q = orthonormalize(&x, &DMatrix::zeros(3, 0), 1e-10);
        assert_eq!(q.ncols(), 2);
        assert!(orthonormality_defect(&q) < 1e-15);
    }

    #[test]
    fn eig_sorted_ascending() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 2.0]));
        let (vals, vecs) = sym_eig_sorted(&a);
        assert_eq!(vals, vec![-1.0, 2.0, 3.0]);
        assert_eq!(vecs[(1, 0)].abs(), 1.0);
    }

    #[test]
    fn rng_streams_are_reproducible() {
        let a = gaussian_matrix(&mut seeded_rng(7, 1), 4, 2);
        let b = gaussian_matrix(&mut seeded_rng(7, 1), 4, 2);
        let c = gaussian_matrix(&mut seeded_rng(7, 2), 4, 2);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
