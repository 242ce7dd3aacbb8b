//! Greedy versus cyclic block-to-processor assignment on a synthetic
//! heavy-tailed load profile.
//!
//! ```text
//! cargo run --release --example schedule_compare -- 496
//! ```

use nucsolve::scheduler::{
    classify, cyclic_assign, evaluate, greedy_assign, synth_loads, CostModelParams, LoadProfile,
    SizeClassThresholds, C12_DEFAULT_BLOCKS,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n_procs: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(496);
    let thresholds = SizeClassThresholds::default();
    let cost = CostModelParams::default();
    let profile = LoadProfile::C12Nmax6Like { blocks: C12_DEFAULT_BLOCKS };

    println!("{profile} on {n_procs} processors");
    println!("{:>5} {:>6} {:>6} {:>6} {:>14} {:>14} {:>8}", "seed", "small", "medium", "large", "greedy", "cyclic", "ratio");
    for seed in 0..5 {
        let loads = synth_loads(&profile, seed);
        let classes = classify(&loads, &thresholds);
        let greedy = evaluate(&greedy_assign(&loads, n_procs, &thresholds, &cost)?, &loads, &cost)?;
        let cyclic = evaluate(&cyclic_assign(&loads, n_procs)?, &loads, &cost)?;
        println!(
            "{seed:>5} {:>6} {:>6} {:>6} {:>14.4e} {:>14.4e} {:>8.4}",
            classes.small.len(),
            classes.medium.len(),
            classes.large.len(),
            greedy.makespan,
            cyclic.makespan,
            greedy.makespan / cyclic.makespan
        );
    }
    Ok(())
}
