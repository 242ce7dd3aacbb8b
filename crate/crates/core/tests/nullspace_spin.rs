//! Null-space algorithms on the spin-model J^2 blocks against the dense
//! oracle and the combinatorial multiplicity.

use nucsolve::linalg::orthonormality_defect;
use nucsolve::spectral::{
    dense_null_oracle, max_principal_angle, pasi_nullspace, rqr_nullspace, shifted_residual, sil_nullspace,
    NullSpaceBasis, PasiOptions, RqrOptions, SilOptions,
};
use nucsolve::spin::{build_basis, build_jsq_block, multiplicity, projections, HalfInt};

fn all_three(block: &nucsolve::sparse::SymmetricOperatorBlock, lambda: f64) -> [NullSpaceBasis; 3] {
    [
        rqr_nullspace(block, lambda, &RqrOptions::default()).unwrap(),
        sil_nullspace(block, lambda, &SilOptions::default()).unwrap(),
        pasi_nullspace(block, lambda, &PasiOptions::default()).unwrap(),
    ]
}

#[test]
fn every_block_and_spin_up_to_eight_particles() {
    for n in 1..=8u32 {
        for m in projections(n) {
            let block = build_jsq_block(&build_basis(n, m).unwrap());
            let a_norm = block.frobenius_norm();
            for twice_j in (m.twice().abs()..=n as i32).step_by(2) {
                let j = HalfInt::from_twice(twice_j);
                let lambda = j.casimir();
                let expected = multiplicity(n, j).unwrap() as usize;
                let oracle = dense_null_oracle(&block, lambda, 1e-8).unwrap();
                assert_eq!(oracle.rank(), expected, "oracle n={n} M={m} J={j}");
                let bases = all_three(&block, lambda);
                for b in &bases {
                    assert_eq!(b.rank(), expected, "{:?} n={n} M={m} J={j}", b.algorithm);
                    assert!(orthonormality_defect(&b.vectors) <= 1e-10);
                    assert!(shifted_residual(&block, lambda, &b.vectors) <= 1e-8 * a_norm);
                }
                for (x, y) in [(0, 1), (0, 2), (1, 2)] {
                    assert!(max_principal_angle(&bases[x], &bases[y]).unwrap() <= 1e-8);
                }
            }
        }
    }
}

#[test]
fn spins_absent_from_a_block_give_empty_bases() {
    // |M| = 2 block of 4 spins holds only the J = 2 multiplet.
    let block = build_jsq_block(&build_basis(4, HalfInt::from_int(2)).unwrap());
    let lambda = HalfInt::from_int(1).casimir();
    let pasi = PasiOptions { spectrum_bounds: Some((0.0, 6.0)), ..Default::default() };
    for b in [
        rqr_nullspace(&block, lambda, &RqrOptions::default()).unwrap(),
        sil_nullspace(&block, lambda, &SilOptions::default()).unwrap(),
        pasi_nullspace(&block, lambda, &pasi).unwrap(),
    ] {
        assert_eq!(b.rank(), 0);
        assert_eq!(b.residual_norm, 0.0);
    }
}

#[test]
fn documented_examples() {
    let b4 = build_jsq_block(&build_basis(4, HalfInt::ZERO).unwrap());
    assert_eq!(rqr_nullspace(&b4, 0.0, &RqrOptions { rank_tol: Some(1e-10), ..Default::default() }).unwrap().rank(), 2);
    assert_eq!(sil_nullspace(&b4, 2.0, &SilOptions::default()).unwrap().rank(), 3);
    let b6 = build_jsq_block(&build_basis(6, HalfInt::ZERO).unwrap());
    assert_eq!(pasi_nullspace(&b6, 0.0, &PasiOptions::default()).unwrap().rank(), 5);
}

#[test]
fn seeds_reproduce_bitwise() {
    let block = build_jsq_block(&build_basis(8, HalfInt::ZERO).unwrap());
    let run = |seed| {
        (
            rqr_nullspace(&block, 2.0, &RqrOptions { seed, ..Default::default() }).unwrap(),
            sil_nullspace(&block, 2.0, &SilOptions { seed, ..Default::default() }).unwrap(),
            pasi_nullspace(&block, 2.0, &PasiOptions { seed, ..Default::default() }).unwrap(),
        )
    };
    assert_eq!(run(5), run(5));
}
