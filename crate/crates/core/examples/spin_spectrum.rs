//! Lowest states of fixed total spin of a Heisenberg ring, from the
//! projected pipeline and from brute-force diagonalization.
//!
//! ```text
//! cargo run --release --example spin_spectrum -- 10 1
//! ```

use nucsolve::pipeline::{brute_force_filter, fixed_j_spectrum, PipelineOptions};
use nucsolve::scheduler::{greedy_assign, BlockLoad, CostModelParams, SizeClassThresholds};
use nucsolve::spin::{HalfInt, SpinChain};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: u32 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10);
    let j: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1.0);
    let j = HalfInt::from_f64(j).ok_or("J must be a multiple of 1/2")?;

    let chain = SpinChain::uniform(n, 1.0, true);
    let jsq = chain.jsq()?;
    let h = chain.hamiltonian()?;
    let loads: Vec<BlockLoad> = jsq.dims().into_iter().enumerate().map(|(k, d)| BlockLoad::from_dim(k, d)).collect();
    let assignment = greedy_assign(&loads, 4, &SizeClassThresholds::default(), &CostModelParams::default())?;
    let opts = PipelineOptions { workers: 4, ..PipelineOptions::default() };

    let (spectrum, timings) = fixed_j_spectrum(&h, &jsq, j, 5, &assignment, &opts)?;
    let reference = brute_force_filter(&h, &jsq, j, None, 1e-6)?;
    println!("ring of {n} spins, J = {j}, null-space ranks per M block {:?}", spectrum.ranks);
    println!("{:>3} {:>18} {:>18} {:>10} {:>10}", "k", "projected", "brute force", "|Hv-Ev|", "J^2 dev");
    for (k, s) in spectrum.states.iter().enumerate() {
        let r = reference.states.get(k).map_or(f64::NAN, |r| r.energy);
        println!("{k:>3} {:>18.12} {r:>18.12} {:>10.1e} {:>10.1e}", s.energy, s.h_residual, s.jsq_residual);
    }
    println!("{timings:?}");
    Ok(())
}
