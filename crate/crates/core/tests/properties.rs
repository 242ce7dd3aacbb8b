//! Property-based invariants across the modules.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use nucsolve::dfo::trust::{box_qp, model_value};
use nucsolve::dfo::{read_history, write_history, EvaluationRecord, ProblemFamily, ProblemSpec};
use nucsolve::mm::{read_symmetric, write_symmetric};
use nucsolve::noise::{difference_table, ecnoise, estimate_from_samples};
use nucsolve::scheduler::{
    brute_force_assign, cyclic_assign, evaluate, greedy_assign, BlockLoad, CostModelParams, SizeClassThresholds,
};
use nucsolve::sparse::SymmetricOperatorBlock;
use nucsolve::spin::{binomial, build_basis, build_heisenberg, build_jsq_block, multiplicity, projections, HalfInt};

fn loads(dims: &[usize]) -> Vec<BlockLoad> {
    dims.iter().enumerate().map(|(k, &d)| BlockLoad::from_dim(k, d)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn greedy_covers_every_block(dims in prop::collection::vec(1usize..8000, 1..40), n_procs in 1usize..70) {
        let blocks = loads(&dims);
        let cost = CostModelParams::default();
        let a = greedy_assign(&blocks, n_procs, &SizeClassThresholds::default(), &cost).unwrap();
        prop_assert_eq!(a.procs.len(), blocks.len());
        for set in &a.procs {
            prop_assert!(!set.is_empty());
            prop_assert!(set.iter().all(|&p| p < n_procs));
            let mut sorted = set.clone();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), set.len());
        }
        let m = evaluate(&a, &blocks, &cost).unwrap();
        let peak = m.per_proc_load.iter().copied().fold(0.0, f64::max);
        prop_assert_eq!(m.makespan, peak);
        prop_assert!(m.imbalance >= 1.0 - 1e-12);
        prop_assert_eq!(a, greedy_assign(&blocks, n_procs, &SizeClassThresholds::default(), &cost).unwrap());
    }

    #[test]
    fn cyclic_is_round_robin(dims in prop::collection::vec(1usize..5000, 1..40), n_procs in 1usize..20) {
        let a = cyclic_assign(&loads(&dims), n_procs).unwrap();
        for (k, set) in a.procs.iter().enumerate() {
            prop_assert_eq!(set, &vec![k % n_procs]);
        }
    }

    #[test]
    fn lpt_is_within_graham_bound(dims in prop::collection::vec(1usize..=512, 1..=9), n_procs in 1usize..=3) {
        let blocks = loads(&dims);
        let cost = CostModelParams::default();
        let greedy = evaluate(&greedy_assign(&blocks, n_procs, &SizeClassThresholds::default(), &cost).unwrap(), &blocks, &cost)
            .unwrap()
            .makespan;
        let opt = evaluate(&brute_force_assign(&blocks, n_procs, &cost).unwrap(), &blocks, &cost).unwrap().makespan;
        let bound = 4.0 / 3.0 - 1.0 / (3.0 * n_procs as f64);
        prop_assert!(opt <= greedy * (1.0 + 1e-12));
        prop_assert!(greedy <= bound * opt * (1.0 + 1e-12), "greedy {} opt {}", greedy, opt);
    }

    #[test]
    fn heisenberg_commutes_with_total_spin(n in 2u32..=7, periodic: bool, seed in 0u64..1000) {
        let bonds = nucsolve::spin::bonds(n, periodic).len();
        let couplings: Vec<f64> = (0..bonds).map(|b| ((seed + 7 * b as u64) % 13) as f64 / 4.0 - 1.5).collect();
        for m in projections(n) {
            let basis = build_basis(n, m).unwrap();
            let h = build_heisenberg(&basis, &couplings, periodic).unwrap();
            let j = build_jsq_block(&basis);
            prop_assert!(h.commutator_max(&j) <= 1e-12);
        }
    }

    #[test]
    fn matrix_market_round_trip(dim in 1usize..12, entries in prop::collection::vec((0usize..12, 0usize..12, -1e3f64..1e3), 0..30)) {
        let mut seen = std::collections::BTreeMap::new();
        for (i, j, v) in entries {
            let (i, j) = (i % dim, j % dim);
            seen.insert((i.min(j), i.max(j)), v);
        }
        let block = SymmetricOperatorBlock::from_triplets("b", dim, seen.into_iter().map(|((i, j), v)| (i, j, v))).unwrap();
        let mut buf = Vec::new();
        write_symmetric(&block, &mut buf).unwrap();
        let back = read_symmetric(buf.as_slice(), "b").unwrap();
        prop_assert_eq!(back.to_dense(), block.to_dense());
    }

    #[test]
    fn noise_estimate_scales_and_shifts(raw in prop::collection::vec(-4096i64..4096, 9), c in -50.0f64..50.0, shift in -64i32..64) {
        prop_assume!(c.abs() > 1e-3);
        // Dyadic samples keep every shifted value exactly representable.
        let samples: Vec<f64> = raw.iter().map(|&v| v as f64 * 2f64.powi(-16)).collect();
        let base = estimate_from_samples(samples.clone());
        let scaled = estimate_from_samples(samples.iter().map(|v| c * v).collect());
        let shifted = estimate_from_samples(samples.iter().map(|v| v + shift as f64).collect());
        prop_assert_eq!(shifted.sigma_abs, base.sigma_abs);
        prop_assert_eq!(shifted.order, base.order);
        let expected = c.abs() * base.sigma_abs;
        prop_assert!((scaled.sigma_abs - expected).abs() <= 1e-12 * expected.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn differences_annihilate_low_degree_polynomials(coeffs in prop::collection::vec(-8i32..8, 1..5)) {
        let p = |t: f64| coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c as f64);
        let values: Vec<f64> = (0..9).map(|i| p(i as f64)).collect();
        let table = difference_table(&values);
        prop_assert!(table.columns[coeffs.len()].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ecnoise_calls_exactly_m_plus_one_times(m in 4usize..14, h in 1e-6f64..1e-1) {
        let mut calls = 0;
        let f = |x: &[f64]| { calls += 1; Ok(x[0] * x[0] + x[1]) };
        let est = ecnoise(f, &[0.3, -0.2], &[0.6, 0.8], h, m).unwrap();
        prop_assert_eq!(calls, m + 1);
        prop_assert_eq!(est.samples.len(), m + 1);
    }

    #[test]
    fn box_qp_is_feasible_and_decreases_the_model(
        g in prop::collection::vec(-10.0f64..10.0, 3),
        b in prop::collection::vec(-3.0f64..3.0, 9),
        lo in prop::collection::vec(0.0f64..2.0, 3),
        hi in prop::collection::vec(0.0f64..2.0, 3),
    ) {
        let b = DMatrix::from_row_slice(3, 3, &b);
        let h = &b + b.transpose();
        let g = DVector::from_vec(g);
        let lo = -DVector::from_vec(lo);
        let hi = DVector::from_vec(hi);
        let s = box_qp(&g, &h, &lo, &hi);
        for i in 0..3 {
            prop_assert!(lo[i] <= s[i] && s[i] <= hi[i]);
        }
        prop_assert!(model_value(&g, &h, &s) <= 1e-12);
    }

    #[test]
    fn history_round_trip(rows in prop::collection::vec((prop::collection::vec(-1e6f64..1e6, 2), prop::collection::vec(-1e3f64..1e3, 3)), 1..10)) {
        let records: Vec<EvaluationRecord> =
            rows.into_iter().enumerate().map(|(i, (x, r))| EvaluationRecord::new(i, x, r)).collect();
        let mut buf = Vec::new();
        write_history(&mut buf, &records).unwrap();
        prop_assert_eq!(read_history(buf.as_slice()).unwrap(), records);
    }

    #[test]
    fn problem_spec_json_round_trip(n in 1usize..5, extra in 0usize..5, seed: u64, noise in 0.0f64..1e-3) {
        let spec = ProblemSpec::new(ProblemFamily::Linear { n, o: n + extra }, seed, noise);
        let text = serde_json::to_string(&spec).unwrap();
        prop_assert_eq!(ProblemSpec::from_json(&text).unwrap(), spec);
    }
}

#[test]
fn multiplets_fill_the_hilbert_space() {
    for n in 1..=20u32 {
        let mut states = 0u64;
        for twice_j in ((n % 2) as i32..=n as i32).step_by(2) {
            let j = HalfInt::from_twice(twice_j);
            states += (twice_j as u64 + 1) * multiplicity(n, j).unwrap();
        }
        assert_eq!(states, 1u64 << n, "n = {n}");
        let dims: u64 = projections(n).iter().map(|&m| build_basis(n, m).map(|b| b.dim() as u64).unwrap_or(0)).sum();
        if n <= 16 {
            assert_eq!(dims, 1u64 << n);
        }
        assert_eq!(binomial(n, n / 2), binomial(n, n - n / 2));
    }
}
