//! Block Lanczos with full reorthogonalization.
//!
//! The Krylov basis `V` and its image `W = op(V)` are kept explicitly, so the
//! projected matrix `V^T W` and every Ritz residual `||W s - theta V s||` are
//! exact rather than recurrence estimates. Columns that become dependent are
//! replaced by fresh random directions, which keeps the iteration going past
//! invariant subspaces.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::linalg::{gaussian_matrix, hcat, orthonormalize, project_out, sym_eig_sorted};

/// A symmetric linear operator applied to blocks of vectors.
pub trait BlockOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64>;
}

impl BlockOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self * x
    }
}

/// Current Rayleigh-Ritz state of a Krylov run.
pub struct RitzSet {
    /// Ritz values, ascending.
    pub values: Vec<f64>,
    coeffs: DMatrix<f64>,
    basis: DMatrix<f64>,
    image: DMatrix<f64>,
    pub steps: usize,
    /// The Krylov space filled the whole (deflated) space.
    pub exhausted: bool,
}

impl RitzSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        &self.basis * self.coeffs.column(i)
    }

    pub fn residual(&self, i: usize) -> f64 {
        let s = self.coeffs.column(i);
        let mut r = &self.image * s;
        r.gemv(-self.values[i], &self.basis, &s, 1.0);
        r.norm()
    }

    pub fn vectors(&self, idx: &[usize]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.basis.nrows(), idx.len());
        for (c, &i) in idx.iter().enumerate() {
            out.set_column(c, &self.vector(i));
        }
        out
    }
}

/// Runs block Lanczos on `op`, deflated against the orthonormal columns of
/// `locked`, starting from `start`.
///
/// `stop` is consulted after every step; the run also ends when the Krylov
/// space cannot grow further or after `max_steps` block steps. The returned
/// flag is `true` when `stop` accepted the state.
pub fn block_lanczos<O, R, F>(
    op: &O,
    start: &DMatrix<f64>,
    locked: &DMatrix<f64>,
    max_steps: usize,
    rng: &mut R,
    mut stop: F,
) -> (RitzSet, bool)
where
    O: BlockOperator + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(&RitzSet) -> bool,
{
    let n = op.dim();
    let capacity = n.saturating_sub(locked.ncols());
    let block = start.ncols().max(1);
    let mut basis = DMatrix::zeros(n, 0);
    let mut image = DMatrix::zeros(n, 0);
    let mut h = DMatrix::zeros(0, 0);
    let mut q = orthonormalize(start, locked, 1e-8);
    let mut state = RitzSet {
        values: Vec::new(),
        coeffs: DMatrix::zeros(0, 0),
        basis: basis.clone(),
        image: image.clone(),
        steps: 0,
        exhausted: capacity == 0,
    };
    if capacity == 0 {
        return (state, true);
    }

    for step in 1..=max_steps {
        if q.ncols() == 0 {
            state.exhausted = true;
            let accepted = stop(&state);
            return (state, accepted);
        }
        let mut aq = op.apply(&q);
        project_out(&mut aq, locked);

        // Grow the projected matrix by one block row/column.
        let d_old = basis.ncols();
        let k = q.ncols();
        let cross = basis.transpose() * &aq;
        let diag = q.transpose() * &aq;
        let mut h_new = DMatrix::zeros(d_old + k, d_old + k);
        h_new.view_mut((0, 0), (d_old, d_old)).copy_from(&h);
        h_new.view_mut((0, d_old), (d_old, k)).copy_from(&cross);
        h_new.view_mut((d_old, 0), (k, d_old)).copy_from(&cross.transpose());
        let diag_sym = (&diag + diag.transpose()) * 0.5;
        h_new.view_mut((d_old, d_old), (k, k)).copy_from(&diag_sym);
        h = h_new;

        basis = hcat(&basis, &q);
        image = hcat(&image, &aq);

        let (values, coeffs) = sym_eig_sorted(&h);
        state = RitzSet {
            values,
            coeffs,
            basis: basis.clone(),
            image: image.clone(),
            steps: step,
            exhausted: basis.ncols() >= capacity,
        };
        if stop(&state) {
            return (state, true);
        }
        if state.exhausted {
            return (state, false);
        }

        // Next block: residual of the recurrence, fully reorthogonalized.
        let mut next = aq;
        project_out(&mut next, &basis);
        let scale = next.amax().max(f64::MIN_POSITIVE);
        let mut q_next = orthonormalize(&next, &hcat(locked, &basis), 1e-10 * scale.min(1.0));
        let room = capacity - basis.ncols();
        if q_next.ncols() < block.min(room) {
            let fill = gaussian_matrix(rng, n, block.min(room) - q_next.ncols());
            let extra = orthonormalize(&fill, &hcat(&hcat(locked, &basis), &q_next), 1e-8);
            q_next = hcat(&q_next, &extra);
        }
        if q_next.ncols() > room {
            q_next = q_next.columns(0, room).into_owned();
        }
        q = q_next;
    }
    (state, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::seeded_rng;

    #[test]
    fn finds_repeated_eigenvalue_with_block() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 2.0, 3.0, 4.0, 5.0]));
        let mut rng = seeded_rng(3, 0);
        let start = gaussian_matrix(&mut rng, 6, 2);
        let (ritz, _) = block_lanczos(&a, &start, &DMatrix::zeros(6, 0), 10, &mut rng, |_| false);
        assert!(ritz.exhausted);
        assert!((ritz.values[0] - 1.0).abs() < 1e-12);
        assert!((ritz.values[1] - 1.0).abs() < 1e-12);
        assert!(ritz.residual(0) < 1e-12);
    }
}
