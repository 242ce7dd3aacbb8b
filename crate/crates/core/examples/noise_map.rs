//! Estimates the noise level of a function with injected Gaussian noise at
//! a set of points.
//!
//! ```text
//! cargo run --release --example noise_map -- 1e-6
//! ```

use nucsolve::noise::{noise_map, DirectionRule, DEFAULT_M};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sigma: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1e-6);
    let f = move |x: &[f64]| -> Result<f64, String> {
        let seed = x.iter().fold(0u64, |h, v| h.rotate_left(17) ^ v.to_bits());
        let e: f64 = ChaCha8Rng::seed_from_u64(seed).sample(StandardNormal);
        Ok(x[0].sin() + x[1] * x[1] + sigma * e)
    };
    let points: Vec<Vec<f64>> = (0..8).map(|i| vec![0.3 * i as f64, 1.0 - 0.2 * i as f64]).collect();
    let rows = noise_map(&f, &points, DirectionRule::Random { seed: 1 }, Some(1e-3), DEFAULT_M, 4)?;
    println!("injected sigma {sigma:.1e}");
    for row in rows {
        match row.result {
            Ok(est) => println!(
                "point {:>2}: sigma {:.3e}  order {:?}  reliable {}",
                row.id, est.sigma_abs, est.order, est.reliable
            ),
            Err(e) => println!("point {:>2}: {e}", row.id),
        }
    }
    Ok(())
}
