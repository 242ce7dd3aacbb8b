//! Fixed-J spectrum: per-block null spaces of `J^2 - J(J+1) I`, projection of
//! the Hamiltonian onto their span, Lanczos on the projected matrix and
//! back-transformation to the full basis. A brute-force selection from full
//! per-block diagonalization serves as the reference.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::krylov::block_lanczos;
use crate::linalg::{gaussian_matrix, seeded_rng, sym_eig_sorted};
use crate::scheduler::Assignment;
use crate::spectral::{
    dense_null_oracle, pasi_nullspace, rqr_nullspace, sil_nullspace, NullSpaceAlgorithm, NullSpaceBasis,
    PasiOptions, RqrOptions, SilOptions, SpectralError, DEFAULT_DENSE_CAP,
};
use crate::spin::{BlockedOperator, HalfInt};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("no states with requested J = {0}")]
    NoStatesWithJ(HalfInt),
    #[error("block {label}: {source}")]
    Block { label: String, source: SpectralError },
    #[error("assignment covers {got} blocks but the operator has {expected}")]
    AssignmentMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("requested {k} eigenpairs of a {dim}-dimensional matrix")]
    TooManyEigenpairs { k: usize, dim: usize },
    #[error("Lanczos did not converge after {steps} block steps")]
    LanczosNotConverged { steps: usize },
    #[error("block of dimension {dim} exceeds the dense cap {cap}")]
    BlockTooLarge { dim: usize, cap: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub algorithm: NullSpaceAlgorithm,
    pub rqr: RqrOptions,
    pub sil: SilOptions,
    pub pasi: PasiOptions,
    /// Eigenvalue window of the dense algorithm.
    pub dense_tol: f64,
    /// Base seed; each block derives its own from it and its position.
    pub seed: u64,
    pub workers: usize,
    /// Lanczos tolerance relative to `||Hp||_F`.
    pub lanczos_tol: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            algorithm: NullSpaceAlgorithm::Pasi,
            rqr: RqrOptions::default(),
            sil: SilOptions::default(),
            pasi: PasiOptions::default(),
            dense_tol: 1e-8,
            seed: 0,
            workers: 1,
            lanczos_tol: 1e-11,
        }
    }
}

fn block_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add((k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn null_basis_for_block(
    block: &crate::sparse::SymmetricOperatorBlock,
    m: HalfInt,
    j: HalfInt,
    k: usize,
    opts: &PipelineOptions,
) -> Result<NullSpaceBasis, SpectralError> {
    let lambda = j.casimir();
    let algo = opts.algorithm;
    if m.abs() > j {
        return Ok(NullSpaceBasis::empty(block, lambda, algo));
    }
    let seed = block_seed(opts.seed, k);
    match algo {
        NullSpaceAlgorithm::Rqr => rqr_nullspace(block, lambda, &RqrOptions { seed, ..opts.rqr.clone() }),
        NullSpaceAlgorithm::Sil => sil_nullspace(block, lambda, &SilOptions { seed, ..opts.sil.clone() }),
        NullSpaceAlgorithm::Pasi => {
            let (lo, hi) = opts.pasi.spectrum_bounds.unwrap_or_else(|| block.gershgorin_bounds());
            if !(lo <= lambda && lambda <= hi) {
                // Outside a valid enclosure, so not an eigenvalue.
                return Ok(NullSpaceBasis::empty(block, lambda, algo));
            }
            pasi_nullspace(block, lambda, &PasiOptions { seed, spectrum_bounds: Some((lo, hi)), ..opts.pasi.clone() })
        }
        NullSpaceAlgorithm::Dense => dense_null_oracle(block, lambda, opts.dense_tol),
    }
}

/// One null-space basis per block of `jsq`, in block order.
///
/// Each block runs on worker `first processor % workers` of its assigned
/// set. Blocks with `|M| > J` hold no such states and get empty bases.
pub fn build_projector(
    jsq: &BlockedOperator,
    j: HalfInt,
    assignment: &Assignment,
    opts: &PipelineOptions,
) -> Result<Vec<NullSpaceBasis>, PipelineError> {
    let blocks = jsq.blocks();
    if assignment.procs.len() != blocks.len() {
        return Err(PipelineError::AssignmentMismatch { expected: blocks.len(), got: assignment.procs.len() });
    }
    let workers = opts.workers.max(1);
    let owner: Vec<usize> =
        assignment.procs.iter().map(|set| set.first().copied().unwrap_or(0) % workers).collect();

    let mut results: Vec<Option<Result<NullSpaceBasis, SpectralError>>> = vec![None; blocks.len()];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let owner = &owner;
                scope.spawn(move || {
                    (0..blocks.len())
                        .filter(|&k| owner[k] == w)
                        .map(|k| (k, null_basis_for_block(&blocks[k].1, blocks[k].0, j, k, opts)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (k, r) in h.join().expect("null-space worker panicked") {
                results[k] = Some(r);
            }
        }
    });

    let mut out = Vec::with_capacity(blocks.len());
    for (k, r) in results.into_iter().enumerate() {
        let r = r.expect("every block is owned by a worker");
        out.push(r.map_err(|source| PipelineError::Block { label: blocks[k].1.label().to_string(), source })?);
    }
    if out.iter().all(|b| b.rank() == 0) {
        return Err(PipelineError::NoStatesWithJ(j));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedHamiltonian {
    pub matrix: DMatrix<f64>,
    pub j: Option<HalfInt>,
    /// Null-space dimension of each block, in block order.
    pub ranks: Vec<usize>,
    pub labels: Vec<String>,
}

impl ProjectedHamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `Hp = Z^T H Z`, assembled block by block and symmetrized.
pub fn project_hamiltonian(h: &BlockedOperator, z: &[NullSpaceBasis]) -> Result<ProjectedHamiltonian, PipelineError> {
    if h.len() != z.len() {
        return Err(PipelineError::DimensionMismatch(format!("{} H blocks, {} bases", h.len(), z.len())));
    }
    let total: usize = z.iter().map(NullSpaceBasis::rank).sum();
    let mut matrix = DMatrix::zeros(total, total);
    let mut offset = 0;
    for ((_, hb), zb) in h.blocks().iter().zip(z) {
        if hb.dim() != zb.dim() {
            return Err(PipelineError::DimensionMismatch(format!(
                "block {}: H has dim {}, basis has {}",
                hb.label(),
                hb.dim(),
                zb.dim()
            )));
        }
        let r = zb.rank();
        if r == 0 {
            continue;
        }
        let p = zb.vectors.transpose() * hb.apply(&zb.vectors);
        let p = (&p + p.transpose()) * 0.5;
        matrix.view_mut((offset, offset), (r, r)).copy_from(&p);
        offset += r;
    }
    let lambda = z.iter().find(|b| b.rank() > 0).map(|b| b.lambda);
    Ok(ProjectedHamiltonian {
        matrix,
        j: lambda.and_then(j_from_casimir),
        ranks: z.iter().map(NullSpaceBasis::rank).collect(),
        labels: z.iter().map(|b| b.block_label.clone()).collect(),
    })
}

/// Recovers `J` from `J(J+1)`.
pub fn j_from_casimir(lambda: f64) -> Option<HalfInt> {
    let j = (-1.0 + (1.0 + 4.0 * lambda).sqrt()) / 2.0;
    HalfInt::from_f64((2.0 * j).round() / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpairs {
    /// Ascending.
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub residuals: Vec<f64>,
}

/// The `k` lowest eigenpairs of a symmetric matrix by block Lanczos with
/// full reorthogonalization.
///
/// The block holds at least `k` vectors, which is enough to resolve any
/// degeneracy among the wanted eigenvalues.
pub fn lanczos_lowest(hp: &DMatrix<f64>, k: usize, tol: f64, seed: u64) -> Result<Eigenpairs, PipelineError> {
    let n = hp.nrows();
    if hp.ncols() != n {
        return Err(PipelineError::DimensionMismatch("matrix is not square".into()));
    }
    if k > n {
        return Err(PipelineError::TooManyEigenpairs { k, dim: n });
    }
    if k == 0 {
        return Ok(Eigenpairs { values: Vec::new(), vectors: DMatrix::zeros(n, 0), residuals: Vec::new() });
    }
    let norm = hp.norm().max(f64::MIN_POSITIVE);
    let block = (k + 2).min(n);
    let mut rng = seeded_rng(seed, 0x4c5a);
    let start = gaussian_matrix(&mut rng, n, block);
    let max_steps = n.div_ceil(block) + 1;
    let (ritz, converged) = block_lanczos(hp, &start, &DMatrix::zeros(n, 0), max_steps, &mut rng, |r| {
        r.len() >= k && (0..k).all(|i| r.residual(i) <= tol * norm)
    });
    let idx: Vec<usize> = (0..k.min(ritz.len())).collect();
    let residuals: Vec<f64> = idx.iter().map(|&i| ritz.residual(i)).collect();
    if !(converged || (ritz.exhausted && residuals.len() == k && residuals.iter().all(|&r| r <= tol * norm))) {
        return Err(PipelineError::LanczosNotConverged { steps: ritz.steps });
    }
    let mut vectors = ritz.vectors(&idx);
    normalize_signs(&mut vectors);
    Ok(Eigenpairs { values: idx.iter().map(|&i| ritz.values[i]).collect(), vectors, residuals })
}

/// Makes the largest-magnitude entry of each column positive.
fn normalize_signs(v: &mut DMatrix<f64>) {
    for mut c in v.column_iter_mut() {
        let pivot = c.iter().copied().fold(0.0, |acc: f64, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            c.neg_mut();
        }
    }
}

/// `v = Z y` in the concatenated full basis.
pub fn backtransform(z: &[NullSpaceBasis], y: &DVector<f64>) -> Result<DVector<f64>, PipelineError> {
    let cols: usize = z.iter().map(NullSpaceBasis::rank).sum();
    if y.len() != cols {
        return Err(PipelineError::DimensionMismatch(format!("y has {} entries, Z has {cols} columns", y.len())));
    }
    let rows: usize = z.iter().map(NullSpaceBasis::dim).sum();
    let mut v = DVector::zeros(rows);
    let (mut row, mut col) = (0, 0);
    for b in z {
        let (d, r) = (b.dim(), b.rank());
        if r > 0 {
            let part = &b.vectors * y.rows(col, r);
            v.rows_mut(row, d).copy_from(&part);
        }
        row += d;
        col += r;
    }
    Ok(v)
}

/// `A v` for a block-diagonal operator and a vector in the full basis.
pub fn apply_blocked(op: &BlockedOperator, v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    let mut row = 0;
    for (_, b) in op.blocks() {
        let d = b.dim();
        let mut y = vec![0.0; d];
        b.matvec_into(&v.as_slice()[row..row + d], &mut y);
        out.rows_mut(row, d).copy_from_slice(&y);
        row += d;
    }
    out
}

/// Frobenius norm of a block-diagonal operator.
pub fn blocked_frobenius(op: &BlockedOperator) -> f64 {
    op.blocks().iter().map(|(_, b)| b.frobenius_norm().powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateReport {
    pub energy: f64,
    /// `||H v - E v||`
    pub h_residual: f64,
    /// `|<v|J^2|v> - J(J+1)|`
    pub jsq_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub j: HalfInt,
    pub states: Vec<StateReport>,
    /// Wave functions in the concatenated full basis, one per column.
    pub wavefunctions: DMatrix<f64>,
    /// Eigenvectors of the projected Hamiltonian (empty for the brute-force
    /// reference).
    pub projected_vectors: DMatrix<f64>,
    /// Null-space dimension per block.
    pub ranks: Vec<usize>,
}

impl SpectrumResult {
    pub fn energies(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.energy).collect()
    }
}

fn state_reports(
    h: &BlockedOperator,
    jsq: &BlockedOperator,
    lambda: f64,
    energies: &[f64],
    wavefunctions: &DMatrix<f64>,
) -> Vec<StateReport> {
    energies
        .iter()
        .enumerate()
        .map(|(c, &energy)| {
            let v = wavefunctions.column(c).into_owned();
            let hv = apply_blocked(h, &v);
            let jv = apply_blocked(jsq, &v);
            StateReport {
                energy,
                h_residual: (hv - &v * energy).norm(),
                jsq_residual: (v.dot(&jv) - lambda).abs(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseTimings {
    pub projector: Duration,
    pub projection: Duration,
    pub diagonalization: Duration,
}

/// The `k` lowest states of total angular momentum `j`.
///
/// Fewer than `k` states are returned when the `J` subspace is smaller.
pub fn fixed_j_spectrum(
    h: &BlockedOperator,
    jsq: &BlockedOperator,
    j: HalfInt,
    k: usize,
    assignment: &Assignment,
    opts: &PipelineOptions,
) -> Result<(SpectrumResult, PhaseTimings), PipelineError> {
    let mut timings = PhaseTimings::default();
    let t = Instant::now();
    let z = build_projector(jsq, j, assignment, opts)?;
    timings.projector = t.elapsed();

    let t = Instant::now();
    let hp = project_hamiltonian(h, &z)?;
    timings.projection = t.elapsed();

    let t = Instant::now();
    let k = k.min(hp.dim());
    let pairs = lanczos_lowest(&hp.matrix, k, opts.lanczos_tol, opts.seed)?;
    let mut wavefunctions = DMatrix::zeros(jsq.total_dim(), k);
    for c in 0..k {
        let v = backtransform(&z, &pairs.vectors.column(c).into_owned())?;
        wavefunctions.set_column(c, &v);
    }
    timings.diagonalization = t.elapsed();

    let states = state_reports(h, jsq, j.casimir(), &pairs.values, &wavefunctions);
    Ok((
        SpectrumResult { j, states, wavefunctions, projected_vectors: pairs.vectors, ranks: hp.ranks },
        timings,
    ))
}

/// Reference spectrum: diagonalize every `H` block densely, keep the lowest
/// `k_many` eigenvectors per block (all when `None`), and select those with
/// `|<v|J^2|v> - J(J+1)| <= tol`.
///
/// Degenerate `H` eigenspaces are rotated onto `J^2` eigenvectors first, so
/// the selection does not depend on an arbitrary basis of the eigenspace.
pub fn brute_force_filter(
    h: &BlockedOperator,
    jsq: &BlockedOperator,
    j: HalfInt,
    k_many: Option<usize>,
    tol: f64,
) -> Result<SpectrumResult, PipelineError> {
    if h.len() != jsq.len() {
        return Err(PipelineError::DimensionMismatch(format!("{} H blocks, {} J^2 blocks", h.len(), jsq.len())));
    }
    let lambda = j.casimir();
    let total = jsq.total_dim();
    let mut picked: Vec<(f64, usize, DVector<f64>)> = Vec::new();
    let mut ranks = Vec::with_capacity(h.len());
    let mut row = 0;
    for (bi, ((_, hb), (_, jb))) in h.blocks().iter().zip(jsq.blocks()).enumerate() {
        let d = hb.dim();
        if d > DEFAULT_DENSE_CAP {
            return Err(PipelineError::BlockTooLarge { dim: d, cap: DEFAULT_DENSE_CAP });
        }
        if jb.dim() != d {
            return Err(PipelineError::DimensionMismatch(format!("block {}", hb.label())));
        }
        let (vals, vecs) = sym_eig_sorted(&hb.to_dense());
        let keep = k_many.unwrap_or(d).min(d);
        let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let cluster_tol = 1e-9 * scale;
        let jd = jb.to_dense();
        let mut count = 0;
        let mut start = 0;
        while start < keep {
            let mut end = start + 1;
            while end < d && vals[end] - vals[end - 1] <= cluster_tol {
                end += 1;
            }
            let v = vecs.columns(start, end - start).into_owned();
            let jp = v.transpose() * &jd * &v;
            let (mus, u) = sym_eig_sorted(&((&jp + jp.transpose()) * 0.5));
            let rotated = &v * u;
            let energy = vals[start..end].iter().sum::<f64>() / (end - start) as f64;
            for (c, mu) in mus.iter().enumerate() {
                if (mu - lambda).abs() <= tol {
                    let mut full = DVector::zeros(total);
                    full.rows_mut(row, d).copy_from(&rotated.column(c));
                    picked.push((energy, bi, full));
                    count += 1;
                }
            }
            start = end;
        }
        ranks.push(count);
        row += d;
    }
    picked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let energies: Vec<f64> = picked.iter().map(|p| p.0).collect();
    let mut wavefunctions = DMatrix::zeros(total, picked.len());
    for (c, p) in picked.iter().enumerate() {
        wavefunctions.set_column(c, &p.2);
    }
    normalize_signs(&mut wavefunctions);
    let states = state_reports(h, jsq, lambda, &energies, &wavefunctions);
    Ok(SpectrumResult { j, states, wavefunctions, projected_vectors: DMatrix::zeros(0, 0), ranks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::SpinChain;

    fn serial(op: &BlockedOperator) -> Assignment {
        Assignment::serial(op.len())
    }

    #[test]
    fn two_spin_singlet() {
        let chain = SpinChain { n: 2, couplings: vec![1.0], periodic: false };
        let (h, jsq) = (chain.hamiltonian().unwrap(), chain.jsq().unwrap());
        let z = build_projector(&jsq, HalfInt::ZERO, &serial(&jsq), &PipelineOptions::default()).unwrap();
        assert_eq!(z.iter().map(NullSpaceBasis::rank).collect::<Vec<_>>(), vec![0, 1, 0]);
        let hp = project_hamiltonian(&h, &z).unwrap();
        assert!((hp.matrix[(0, 0)] + 0.75).abs() < 1e-12);
        let bf = brute_force_filter(&h, &jsq, HalfInt::ZERO, None, 1e-8).unwrap();
        assert_eq!(bf.energies().len(), 1);
        assert!((bf.energies()[0] + 0.75).abs() < 1e-12);
    }

    #[test]
    fn four_spin_projector_ranks_and_missing_j() {
        let jsq = SpinChain::uniform(4, 1.0, true).jsq().unwrap();
        let z = build_projector(&jsq, HalfInt::from_int(1), &serial(&jsq), &PipelineOptions::default()).unwrap();
        assert_eq!(z.iter().map(NullSpaceBasis::rank).collect::<Vec<_>>(), vec![0, 3, 3, 3, 0]);
        assert_eq!(
            build_projector(&jsq, HalfInt::from_int(3), &serial(&jsq), &PipelineOptions::default()),
            Err(PipelineError::NoStatesWithJ(HalfInt::from_int(3)))
        );
    }

    #[test]
    fn lanczos_examples() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert_eq!(lanczos_lowest(&d, 2, 1e-12, 0).unwrap().values.len(), 2);
        let v = lanczos_lowest(&d, 2, 1e-12, 0).unwrap().values;
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - 2.0).abs() < 1e-12);
        let one = DMatrix::from_element(1, 1, -0.75);
        assert_eq!(lanczos_lowest(&one, 1, 1e-12, 0).unwrap().values, vec![-0.75]);
        assert!(matches!(lanczos_lowest(&one, 2, 1e-12, 0), Err(PipelineError::TooManyEigenpairs { .. })));

        let mut rng = seeded_rng(9, 0);
        let g = gaussian_matrix(&mut rng, 50, 50);
        let a = (&g + g.transpose()) * 0.5;
        let (dense, _) = sym_eig_sorted(&a);
        let l = lanczos_lowest(&a, 5, 1e-12, 3).unwrap();
        assert_eq!(l.values.len(), 5);
        for (got, want) in l.values.iter().zip(&dense) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn backtransform_first_column() {
        let jsq = SpinChain::uniform(4, 1.0, true).jsq().unwrap();
        let z = build_projector(&jsq, HalfInt::ZERO, &serial(&jsq), &PipelineOptions::default()).unwrap();
        let mut y = DVector::zeros(2);
        y[0] = 1.0;
        let v = backtransform(&z, &y).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-12);
        assert_eq!(v.rows(5, 6).into_owned(), z[2].vectors.column(0).into_owned());
        assert!(backtransform(&z, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn ring_of_four_matches_reference() {
        let chain = SpinChain::uniform(4, 1.0, true);
        let (h, jsq) = (chain.hamiltonian().unwrap(), chain.jsq().unwrap());
        let (res, _) =
            fixed_j_spectrum(&h, &jsq, HalfInt::ZERO, 2, &serial(&jsq), &PipelineOptions::default()).unwrap();
        let bf = brute_force_filter(&h, &jsq, HalfInt::ZERO, None, 1e-8).unwrap();
        assert_eq!(bf.energies().len(), 2);
        for (a, b) in res.energies().iter().zip(bf.energies()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((res.energies()[0] + 2.0).abs() < 1e-10);
        assert!(res.energies()[1].abs() < 1e-10);
        assert!(res.states.iter().all(|s| s.jsq_residual < 1e-9 && s.h_residual < 1e-9));
    }

    #[test]
    fn identity_hamiltonian_reference() {
        let chain = SpinChain::uniform(4, 0.0, true);
        let jsq = chain.jsq().unwrap();
        let ident = BlockedOperator::new(
            jsq.blocks()
                .iter()
                .map(|(m, b)| (*m, crate::sparse::SymmetricOperatorBlock::diagonal(b.label(), &vec![1.0; b.dim()]).unwrap()))
                .collect(),
        )
        .unwrap();
        let bf = brute_force_filter(&ident, &jsq, HalfInt::from_int(1), None, 1e-8).unwrap();
        assert_eq!(bf.energies().len(), 9);
        assert!(bf.energies().iter().all(|&e| e == 1.0));
        let z = build_projector(&jsq, HalfInt::from_int(1), &serial(&jsq), &PipelineOptions::default()).unwrap();
        let hp = project_hamiltonian(&ident, &z).unwrap();
        assert!((hp.matrix - DMatrix::<f64>::identity(9, 9)).amax() < 1e-12);
    }
}
