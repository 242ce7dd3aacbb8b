//! Fits the exponential-decay family with both trust-region algorithms and
//! then warm-starts a second fit from an experimental design.
//!
//! ```text
//! cargo run --release --example pounders_fit
//! ```

use nucsolve::dfo::{
    experimental_design, pounder_minimize, pounders_minimize, write_trace, DfoOptions, ProblemFamily, ProblemSpec,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let built = ProblemSpec::new(ProblemFamily::ExponentialFit, 3, 0.0).build()?;
    let problem = &built.problem;
    let options = DfoOptions { max_evals: 300, ..DfoOptions::default() };

    let cold = pounders_minimize(problem, &built.x0, &options, &[])?;
    let single = pounder_minimize(problem, &built.x0, &options, &[])?;
    let target = 1.1 * cold.best_f;
    for r in [&cold, &single] {
        println!(
            "{:>8}: best f {:.6e} after {} evaluations ({}); reaches {target:.4e} at {:?}",
            r.algorithm.to_string(),
            r.best_f,
            r.trace.len(),
            r.termination,
            r.evals_to_reach(target)
        );
    }

    let design = experimental_design(problem, &built.x0, 2 * problem.n() + 1, 11)?;
    let warm = pounders_minimize(problem, &built.x0, &options, &design)?;
    println!(
        "    warm: {} design points, best f {:.6e}, reaches target at {:?}",
        design.len(),
        warm.best_f,
        warm.evals_to_reach(target)
    );
    println!("best parameters {:.4?}", cold.best_x);

    println!("first lines of the cold trace:");
    let mut buf = Vec::new();
    write_trace(&mut buf, &cold)?;
    for line in String::from_utf8(buf)?.lines().take(6) {
        println!("  {line}");
    }
    Ok(())
}
