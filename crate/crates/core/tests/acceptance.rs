//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails if
//! any criterion fails.
//!
//! ```text
//! cargo test --test acceptance -- --nocapture
//! ```

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

use nucsolve::dfo::{
    experimental_design, pounder_minimize, pounders_minimize, DfoOptions, FitResult, ProblemFamily, ProblemSpec,
    ResidualProblem,
};
use nucsolve::noise::{ecnoise, estimate_from_samples, gamma, DirectionRule};
use nucsolve::pipeline::{blocked_frobenius, brute_force_filter, fixed_j_spectrum, PipelineOptions};
use nucsolve::scheduler::{
    brute_force_assign, cyclic_assign, evaluate, greedy_assign, synth_loads, BlockLoad, CostModelParams,
    LoadProfile, SizeClassThresholds, C12_DEFAULT_BLOCKS,
};
use nucsolve::spectral::{
    max_principal_angle, DenseSpectrum, DEFAULT_DENSE_CAP, pasi_nullspace, rqr_nullspace, sil_nullspace, NullSpaceAlgorithm,
    NullSpaceBasis, PasiOptions, RqrOptions, SilOptions,
};
use nucsolve::spin::{build_basis, build_jsq_block, multiplicity, projections, HalfInt, SpinChain};

const RANK_TOL: f64 = 1e-8;
const ANGLE_TOL: f64 = 1e-8;
const ENERGY_TOL: f64 = 1e-8;
const RESIDUAL_TOL: f64 = 1e-8;
const SCHEDULE_RATIO: f64 = 0.75;
const LINEAR_TOL: f64 = 1e-6;
const ROSENBROCK_TOL: f64 = 1e-10;
const INTERP_TOL: f64 = 1e-10;
const NOISE_HIT_RATE: f64 = 0.9;
const INVARIANCE_TOL: f64 = 1e-12;
const RUNTIME_BUDGETS: [(u32, Duration); 3] =
    [(1, Duration::from_secs(120)), (3, Duration::from_secs(300)), (5, Duration::from_secs(300))];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn three_bases(block: &nucsolve::sparse::SymmetricOperatorBlock, lambda: f64) -> [NullSpaceBasis; 3] {
    [
        rqr_nullspace(block, lambda, &RqrOptions::default()).unwrap(),
        sil_nullspace(block, lambda, &SilOptions::default()).unwrap(),
        pasi_nullspace(block, lambda, &PasiOptions::default()).unwrap(),
    ]
}

fn multiplicity_exactness() -> Outcome {
    let mut failures = Vec::new();
    let mut checked = 0;
    for n in [2u32, 4, 6, 8, 10, 12] {
        // The M = 0 block holds every J of an even particle number.
        let block = build_jsq_block(&build_basis(n, HalfInt::from_int(0)).unwrap());
        let dense = DenseSpectrum::new(&block, DEFAULT_DENSE_CAP).unwrap();
        for j in 0..=(n as i32 / 2) {
            let j = HalfInt::from_int(j);
            let lambda = j.casimir();
            let expected = multiplicity(n, j).unwrap() as usize;
            let oracle = dense.count_near(lambda, RANK_TOL);
            for b in three_bases(&block, lambda) {
                checked += 1;
                if b.rank() != expected || oracle != expected {
                    failures.push(format!("n={n} J={j} {}: {} vs {expected} (oracle {oracle})", b.algorithm.name(), b.rank()));
                }
            }
        }
    }
    outcome(failures.is_empty(), format!("{checked} ranks checked, mismatches {failures:?}"))
}

fn subspace_agreement() -> Outcome {
    let mut worst = 0.0f64;
    let mut pairs = 0;
    for n in 1..=10u32 {
        for m in projections(n) {
            let block = build_jsq_block(&build_basis(n, m).unwrap());
            if block.dim() > 256 {
                continue;
            }
            for twice_j in (m.twice().abs()..=n as i32).step_by(2) {
                let bases = three_bases(&block, HalfInt::from_twice(twice_j).casimir());
                for (x, y) in [(0, 1), (0, 2), (1, 2)] {
                    worst = worst.max(max_principal_angle(&bases[x], &bases[y]).unwrap());
                    pairs += 1;
                }
            }
        }
    }
    outcome(worst <= ANGLE_TOL, format!("{pairs} basis pairs, max angle {worst:.2e} (tol {ANGLE_TOL:e})"))
}

fn pipeline_matches_brute_force() -> Outcome {
    let mut failures = Vec::new();
    let mut worst_energy = 0.0f64;
    let mut worst_residual = 0.0f64;
    let mut cases = 0;
    for n in 2..=10u32 {
        let js: Vec<HalfInt> = if n % 2 == 0 {
            vec![HalfInt::from_int(0), HalfInt::from_int(1), HalfInt::from_twice(n as i32)]
        } else {
            vec![HalfInt::from_twice(1), HalfInt::from_twice(3), HalfInt::from_twice(n as i32)]
        };
        let shapes: &[bool] = if n >= 3 { &[false, true] } else { &[false] };
        for &periodic in shapes {
            let chain = SpinChain::uniform(n, 1.0, periodic);
            let (jsq, h) = (chain.jsq().unwrap(), chain.hamiltonian().unwrap());
            let h_norm = blocked_frobenius(&h);
            let loads: Vec<BlockLoad> =
                jsq.dims().into_iter().enumerate().map(|(k, d)| BlockLoad::from_dim(k, d)).collect();
            let assignment =
                greedy_assign(&loads, 3, &SizeClassThresholds::default(), &CostModelParams::default()).unwrap();
            for &j in &js {
                let reference = brute_force_filter(&h, &jsq, j, None, 1e-6).unwrap();
                for algorithm in [NullSpaceAlgorithm::Rqr, NullSpaceAlgorithm::Sil, NullSpaceAlgorithm::Pasi] {
                    cases += 1;
                    let opts = PipelineOptions { algorithm, workers: 2, seed: n as u64, ..PipelineOptions::default() };
                    let (got, _) = fixed_j_spectrum(&h, &jsq, j, 5, &assignment, &opts).unwrap();
                    let want = reference.energies();
                    let count = want.len().min(5);
                    let tag = format!("n={n} periodic={periodic} J={j} {}", algorithm.name());
                    if got.states.len() != count {
                        failures.push(format!("{tag}: {} states, expected {count}", got.states.len()));
                        continue;
                    }
                    for (s, e) in got.states.iter().zip(&want) {
                        worst_energy = worst_energy.max((s.energy - e).abs());
                        worst_residual = worst_residual.max(s.h_residual / h_norm).max(s.jsq_residual);
                        if (s.energy - e).abs() > ENERGY_TOL
                            || s.h_residual > RESIDUAL_TOL * h_norm
                            || s.jsq_residual > RESIDUAL_TOL
                        {
                            failures.push(tag.clone());
                        }
                    }
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{cases} cases, max energy gap {worst_energy:.2e}, max residual {worst_residual:.2e}, failures {failures:?}"
        ),
    )
}

fn scheduler_quality() -> Outcome {
    let thresholds = SizeClassThresholds::default();
    let cost = CostModelParams::default();
    let profile = LoadProfile::C12Nmax6Like { blocks: C12_DEFAULT_BLOCKS };
    let mut ratios = Vec::new();
    for n_procs in [120usize, 496] {
        let (mut greedy, mut cyclic) = (0.0, 0.0);
        for seed in 0..100 {
            let loads = synth_loads(&profile, seed);
            greedy += evaluate(&greedy_assign(&loads, n_procs, &thresholds, &cost).unwrap(), &loads, &cost)
                .unwrap()
                .makespan;
            cyclic += evaluate(&cyclic_assign(&loads, n_procs).unwrap(), &loads, &cost).unwrap().makespan;
        }
        ratios.push((n_procs, greedy / cyclic));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_bound = 0.0f64;
    let mut instances = 0;
    for blocks in 1..=12usize {
        for n_procs in 1..=4usize {
            for _ in 0..4 {
                let loads: Vec<BlockLoad> =
                    (0..blocks).map(|k| BlockLoad::from_dim(k, rng.random_range(1..=512))).collect();
                let g = evaluate(&greedy_assign(&loads, n_procs, &thresholds, &cost).unwrap(), &loads, &cost)
                    .unwrap()
                    .makespan;
                let opt =
                    evaluate(&brute_force_assign(&loads, n_procs, &cost).unwrap(), &loads, &cost).unwrap().makespan;
                let bound = 4.0 / 3.0 - 1.0 / (3.0 * n_procs as f64);
                worst_bound = worst_bound.max(g / opt / bound);
                instances += 1;
            }
        }
    }
    let pass = ratios.iter().all(|r| r.1 <= SCHEDULE_RATIO) && worst_bound <= 1.0 + 1e-12;
    outcome(
        pass,
        format!(
            "mean greedy/cyclic {} (gate {SCHEDULE_RATIO}); {instances} small instances, worst greedy/(bound*opt) {worst_bound:.4}",
            ratios.iter().map(|(p, r)| format!("{p} procs {r:.4}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

/// Invariants every DFO run must satisfy.
#[derive(Default)]
struct DfoAudit {
    runs: usize,
    worst_interp: f64,
    monotone: bool,
    in_bounds: bool,
}

impl DfoAudit {
    fn new() -> Self {
        Self { monotone: true, in_bounds: true, ..Default::default() }
    }

    fn record(&mut self, problem: &ResidualProblem, r: &FitResult) {
        self.runs += 1;
        self.worst_interp = self.worst_interp.max(r.max_interpolation_error);
        self.monotone &= r.best_so_far().windows(2).all(|w| w[1] <= w[0]);
        self.in_bounds &= r.bounds_respected && r.trace.iter().all(|e| problem.is_feasible(&e.x));
    }
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

fn pounders_vs_pounder(audit: &mut DfoAudit) -> Outcome {
    let budget = 500;
    let opts = DfoOptions { max_evals: budget, ..DfoOptions::default() };
    let (mut s_evals, mut p_evals, mut w_evals) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..10 {
        let built = ProblemSpec::new(ProblemFamily::ExponentialFit, seed, 1e-6).build().unwrap();
        let problem = &built.problem;
        let s = pounders_minimize(problem, &built.x0, &opts, &[]).unwrap();
        let p = pounder_minimize(problem, &built.x0, &opts, &[]).unwrap();
        let design = experimental_design(problem, &built.x0, 2 * problem.n() + 1, seed).unwrap();
        let w = pounders_minimize(problem, &built.x0, &opts, &design).unwrap();
        let target = 1.1 * s.best_f.min(p.best_f);
        let reach = |r: &FitResult| r.evals_to_reach(target).unwrap_or(budget + 1);
        s_evals.push(reach(&s));
        p_evals.push(reach(&p));
        w_evals.push(reach(&w));
        for r in [&s, &p, &w] {
            audit.record(problem, r);
        }
    }
    let (ms, mp, mw) = (median(s_evals.clone()), median(p_evals.clone()), median(w_evals.clone()));
    outcome(
        ms <= 0.5 * mp && mw <= ms,
        format!(
            "median evals to 1.1 f_ref: pounders {ms}, pounder {mp}, warm pounders {mw} (pounders {s_evals:?}, pounder {p_evals:?}, warm {w_evals:?})"
        ),
    )
}

fn dfo_correctness(audit: &mut DfoAudit) -> Outcome {
    let opts = DfoOptions::default();
    let mut notes = Vec::new();
    let mut pass = true;
    let mut worst_linear = 0.0f64;
    for seed in 0..5 {
        let built = ProblemSpec::new(ProblemFamily::Linear { n: 3, o: 5 }, seed, 0.0).build().unwrap();
        let (a, b) = built.linear.clone().unwrap();
        let x_star = (a.transpose() * &a).lu().solve(&(a.transpose() * b)).unwrap();
        for r in [
            pounders_minimize(&built.problem, &built.x0, &opts, &[]).unwrap(),
            pounder_minimize(&built.problem, &built.x0, &opts, &[]).unwrap(),
        ] {
            worst_linear = worst_linear.max((DVector::from_vec(r.best_x.clone()) - &x_star).norm());
            audit.record(&built.problem, &r);
        }
    }
    pass &= worst_linear <= LINEAR_TOL;
    notes.push(format!("linear max |x - x*| {worst_linear:.2e}"));

    let built = ProblemSpec::new(ProblemFamily::Rosenbrock { n: 4 }, 0, 0.0).build().unwrap();
    let r = pounders_minimize(&built.problem, &built.x0, &opts, &[]).unwrap();
    audit.record(&built.problem, &r);
    pass &= r.best_f <= ROSENBROCK_TOL;
    notes.push(format!("rosenbrock-sum f {:.2e}", r.best_f));

    let built = ProblemSpec::new(ProblemFamily::BoundQuadratic, 0, 0.0).build().unwrap();
    for r in [
        pounders_minimize(&built.problem, &built.x0, &opts, &[]).unwrap(),
        pounder_minimize(&built.problem, &built.x0, &opts, &[]).unwrap(),
    ] {
        audit.record(&built.problem, &r);
        pass &= r.best_x == vec![1.0];
        notes.push(format!("{} bound x {:?}", r.algorithm, r.best_x));
    }
    outcome(pass, notes.join("; "))
}

fn interpolation_invariant(audit: &DfoAudit) -> Outcome {
    outcome(
        audit.worst_interp <= INTERP_TOL && audit.monotone && audit.in_bounds,
        format!(
            "{} runs, max interpolation error {:.2e}, best-f monotone {}, bounds respected {}",
            audit.runs, audit.worst_interp, audit.monotone, audit.in_bounds
        ),
    )
}

fn noise_recovery() -> Outcome {
    let mut rates = Vec::new();
    for sigma in [1e-7, 1e-5, 1e-3] {
        let mut hits = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d = DirectionRule::Random { seed }.direction(0, 3);
            let f = |p: &[f64]| -> Result<f64, String> {
                let e: f64 = rng.sample(StandardNormal);
                Ok(1.0 + p.iter().map(|v| v * v).sum::<f64>() + sigma * e)
            };
            let est = ecnoise(f, &x, &d, nucsolve::noise::default_step(&x), 8).unwrap();
            if est.sigma_abs >= sigma / 2.0 && est.sigma_abs <= 2.0 * sigma {
                hits += 1;
            }
        }
        rates.push((sigma, hits as f64 / 100.0));
    }

    let factorial = |k: u64| (1..=k).product::<u64>() as f64;
    let gamma_exact = (1..=6u64).all(|k| gamma(k as usize) == factorial(k) * factorial(k) / factorial(2 * k));

    // Samples on a dyadic grid keep the shifted values exactly representable.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let base: Vec<f64> = (0..9).map(|_| (rng.random_range(-1000i64..1000) as f64) * 2f64.powi(-20)).collect();
    let s0 = estimate_from_samples(base.clone()).sigma_abs;
    let mut worst = 0.0f64;
    for c in [-3.0, 0.5, 7.25, 1e3] {
        let scaled = estimate_from_samples(base.iter().map(|v| c * v).collect()).sigma_abs;
        worst = worst.max((scaled - c.abs() * s0).abs() / (c.abs() * s0));
    }
    for shift in [1.0, -64.0, 4096.0] {
        let shifted = estimate_from_samples(base.iter().map(|v| v + shift).collect()).sigma_abs;
        worst = worst.max((shifted - s0).abs() / s0);
    }

    let pass = rates.iter().all(|r| r.1 >= NOISE_HIT_RATE) && gamma_exact && worst <= INVARIANCE_TOL;
    outcome(
        pass,
        format!(
            "within factor 2: {}; gamma exact for k <= 6: {gamma_exact}; scale/shift max rel dev {worst:.1e}",
            rates.iter().map(|(s, r)| format!("sigma {s:e} {:.0}%", 100.0 * r)).collect::<Vec<_>>().join(", ")
        ),
    )
}

/// Report without its `runtime` section, plus the listed side files.
fn run_cli(args: &[String], files: &[&Path]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_nucsolve")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} exited with {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    let mut report: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    report.as_object_mut().ok_or("report is not an object")?.remove("runtime");
    let mut bytes = serde_json::to_vec(&report).unwrap();
    for f in files {
        bytes.extend(std::fs::read(f).map_err(|e| format!("{}: {e}", f.display()))?);
    }
    Ok(bytes)
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let s = |path: &Path| path.to_str().unwrap().to_string();
    std::fs::write(p("exp.json"), r#"{"schema": "nucsolve.problem/1", "family": {"kind": "exponential_fit"}, "seed": 2, "noise": 1e-6}"#)
        .unwrap();
    std::fs::write(p("quad.json"), r#"{"schema": "nucsolve.problem/1", "family": {"kind": "quadratic", "n": 2}, "seed": 5, "noise": 1e-5}"#)
        .unwrap();
    std::fs::write(p("points.csv"), "x0,x1\n0.1,0.2\n-0.5,1.0\n2.0,-1.5\n0.0,0.0\n1.5,0.75\n").unwrap();
    let max_workers = std::thread::available_parallelism().map_or(4, |n| n.get()).max(3);

    let export_dir = p("export");
    let export_files: Vec<_> = (-6..=6).step_by(2).flat_map(|m| [format!("jsq_m{m}.mtx"), format!("h_m{m}.mtx")]).collect();
    let export_paths: Vec<_> = std::iter::once(export_dir.join("manifest.json"))
        .chain(export_files.iter().map(|f| export_dir.join(f)))
        .collect();

    struct Case {
        name: &'static str,
        args: Vec<String>,
        files: Vec<std::path::PathBuf>,
        uses_workers: bool,
    }
    let words = |v: &[&str]| v.iter().map(|a| a.to_string()).collect::<Vec<_>>();
    let cases = vec![
        Case {
            name: "fixedj",
            args: words(&["fixedj", "--n", "8", "--periodic", "--j", "1", "--n-procs", "4", "--seed", "7", "--oracle"]),
            files: vec![],
            uses_workers: true,
        },
        Case {
            name: "schedule",
            args: words(&["schedule", "--profile", "c12_nmax6_like", "--n-procs", "120", "--compare", "--seed", "1", "--assignment"]),
            files: vec![],
            uses_workers: false,
        },
        Case {
            name: "fit",
            args: [
                words(&["fit", "--compare", "--max-evals", "120", "--seed", "3", "--problem"]),
                vec![s(&p("exp.json")), "--trace".into(), s(&p("trace.csv")), "--history-out".into(), s(&p("hist.csv"))],
            ]
            .concat(),
            files: vec![p("trace.csv"), p("hist.csv")],
            uses_workers: false,
        },
        Case {
            name: "noise",
            args: [
                words(&["noise", "--seed", "4", "--problem"]),
                vec![s(&p("quad.json")), "--points".into(), s(&p("points.csv")), "--table".into(), s(&p("table.csv"))],
            ]
            .concat(),
            files: vec![p("table.csv")],
            uses_workers: true,
        },
        Case {
            name: "export",
            args: [words(&["export", "--n", "6", "--dir"]), vec![s(&export_dir)]].concat(),
            files: export_paths,
            uses_workers: false,
        },
    ];

    let mut failures = Vec::new();
    for case in &cases {
        let files: Vec<&Path> = case.files.iter().map(|f| f.as_path()).collect();
        let mut outputs = Vec::new();
        let worker_counts: Vec<usize> = if case.uses_workers { vec![1, 1, 1, 2, max_workers] } else { vec![0; 3] };
        for w in worker_counts {
            let mut args = case.args.clone();
            if w > 0 {
                args.extend(["--workers".to_string(), w.to_string()]);
            }
            match run_cli(&args, &files) {
                Ok(o) => outputs.push(o),
                Err(e) => failures.push(format!("{}: {e}", case.name)),
            }
        }
        if outputs.windows(2).any(|w| w[0] != w[1]) {
            failures.push(format!("{}: outputs differ", case.name));
        }
    }
    outcome(
        failures.is_empty(),
        format!("{} subcommands, 3 runs each, workers {{1, 2, {max_workers}}}; failures {failures:?}", cases.len()),
    )
}

#[test]
fn acceptance_criteria() {
    let mut audit = DfoAudit::new();
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut timed = |id: u32, name: &'static str, run: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let mut o = run();
        let elapsed = t.elapsed();
        if let Some(&(_, budget)) = RUNTIME_BUDGETS.iter().find(|b| b.0 == id) {
            o.pass &= elapsed <= budget;
            o.detail.push_str(&format!("; runtime budget {budget:?}"));
        }
        let line = format!("criterion {id} {}: {name} [{elapsed:.1?}] {}\n", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        std::io::stderr().write_all(line.as_bytes()).unwrap();
        results.push((id, o));
    };
    timed(1, "multiplicity exactness", &mut multiplicity_exactness);
    timed(2, "subspace agreement", &mut subspace_agreement);
    timed(3, "pipeline matches brute force", &mut pipeline_matches_brute_force);
    timed(4, "scheduler quality", &mut scheduler_quality);
    timed(5, "pounders vs pounder", &mut || pounders_vs_pounder(&mut audit));
    timed(6, "dfo correctness", &mut || dfo_correctness(&mut audit));
    timed(7, "interpolation invariant", &mut || interpolation_invariant(&audit));
    timed(8, "noise recovery", &mut noise_recovery);
    timed(9, "cli determinism", &mut cli_determinism);

    let failed: Vec<u32> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
