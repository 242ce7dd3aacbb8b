//! Null space of a shifted `J^2` block with each algorithm, compared against
//! the dense oracle.
//!
//! ```text
//! cargo run --release --example nullspace_algorithms -- 10
//! ```

use std::time::Instant;

use nucsolve::spectral::{
    dense_null_oracle, max_principal_angle, pasi_nullspace, rqr_nullspace, shifted_residual, sil_nullspace,
    PasiOptions, RqrOptions, SilOptions,
};
use nucsolve::spin::{build_basis, build_jsq_block, multiplicity, HalfInt};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: u32 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let m = HalfInt::from_twice((n % 2) as i32);
    let block = build_jsq_block(&build_basis(n, m)?);
    println!("{n} spins, M = {m}, block dimension {}", block.dim());

    for twice_j in (m.twice()..=n as i32).step_by(2) {
        let j = HalfInt::from_twice(twice_j);
        let lambda = j.casimir();
        let reference = dense_null_oracle(&block, lambda, 1e-8)?;
        println!("J = {j}: expected rank {}", multiplicity(n, j)?);
        let t = Instant::now();
        let rqr = rqr_nullspace(&block, lambda, &RqrOptions::default())?;
        let t_rqr = t.elapsed();
        let t = Instant::now();
        let sil = sil_nullspace(&block, lambda, &SilOptions::default())?;
        let t_sil = t.elapsed();
        let t = Instant::now();
        let pasi = pasi_nullspace(&block, lambda, &PasiOptions::default())?;
        let t_pasi = t.elapsed();
        for (basis, elapsed) in [(&rqr, t_rqr), (&sil, t_sil), (&pasi, t_pasi)] {
            let angle = max_principal_angle(basis, &reference)?;
            println!(
                "  {:>5}: rank {:>3}  residual {:.2e}  angle to oracle {:.2e}  {:?}",
                basis.algorithm.name(),
                basis.rank(),
                shifted_residual(&block, lambda, &basis.vectors),
                angle,
                elapsed
            );
        }
    }
    Ok(())
}
