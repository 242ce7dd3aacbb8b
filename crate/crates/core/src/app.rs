//! Command-line front end.
//!
//! Every report is a JSON document with three sections: `header` (tool,
//! version, subcommand, resolved configuration and seed), `result`, and
//! `runtime` (worker count and wall-clock timings). Only `runtime` may differ
//! between runs of the same configuration. CSV side outputs start with a
//! `#`-prefixed copy of the header.
//!
//! Exit codes: `0` success, `2` invalid configuration or input, `3`
//! numerical or evaluator failure. Failures print a JSON error record on
//! standard error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::dfo::{self, Algorithm, DfoOptions, EvaluationRecord, FitResult, ProblemSpec, Termination};
use crate::manifest::BlockManifest;
use crate::noise::{self, DirectionRule, NoiseError};
use crate::pipeline::{self, blocked_frobenius, PipelineError, PipelineOptions};
use crate::scheduler::{
    self, Assignment, BlockLoad, CostModelParams, LoadProfile, LoadsDocument, Policy, ScheduleError,
    SizeClassThresholds, LOADS_SCHEMA,
};
use crate::spectral::NullSpaceAlgorithm;
use crate::spin::{BlockedOperator, HalfInt, SpinChain};

pub const TOOL: &str = "nucsolve";

#[derive(Debug, Parser)]
#[command(name = "nucsolve", version, about = "Fixed-J spectra, block scheduling, derivative-free fitting and noise estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lowest states of fixed total angular momentum J.
    Fixedj(FixedjArgs),
    /// Assign blocks to processors and report makespans.
    Schedule(ScheduleArgs),
    /// Derivative-free least-squares fit of a synthetic problem.
    Fit(FitArgs),
    /// Estimate computational noise at a list of points.
    Noise(NoiseArgs),
    /// Write a spin model as Matrix Market blocks plus a manifest.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SpinModelArgs {
    /// Number of spin-1/2 particles.
    #[arg(long)]
    pub n: Option<u32>,
    /// Per-bond couplings (comma separated); overrides --coupling.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub couplings: Option<Vec<f64>>,
    /// Uniform coupling for every bond.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub coupling: f64,
    /// Close the chain into a ring.
    #[arg(long)]
    pub periodic: bool,
}

impl SpinModelArgs {
    fn chain(&self) -> Result<SpinChain, AppError> {
        let n = self.n.ok_or_else(|| AppError::config("--n is required for the spin model"))?;
        let mut chain = SpinChain::uniform(n, self.coupling, self.periodic);
        if let Some(c) = &self.couplings {
            chain.couplings = c.clone();
        }
        Ok(chain)
    }

    fn operators(&self) -> Result<(BlockedOperator, BlockedOperator), AppError> {
        let chain = self.chain()?;
        let jsq = chain.jsq().map_err(AppError::config)?;
        let h = chain.hamiltonian().map_err(AppError::config)?;
        Ok((jsq, h))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FixedjArgs {
    /// Model source: the built-in spin chain or a block manifest.
    #[arg(long, default_value = "spins", value_parser = ["spins", "manifest"])]
    pub model: String,
    #[command(flatten)]
    pub spins: SpinModelArgs,
    /// Manifest file (with --model manifest).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Total angular momentum, integer or half-integer ("3/2" or "1.5").
    #[arg(long, allow_hyphen_values = true)]
    pub j: String,
    #[arg(long, default_value = "pasi", value_parser = ["rqr", "sil", "pasi", "dense"])]
    pub algo: String,
    /// Number of lowest states.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub n_procs: usize,
    #[arg(long, default_value = "greedy", value_parser = ["greedy", "cyclic", "optimal"])]
    pub policy: String,
    /// Compare with full diagonalization of every block.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    #[serde(skip)]
    pub workers: usize,
    /// Report destination (standard output when absent).
    #[arg(long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScheduleArgs {
    /// Loads document (JSON).
    #[arg(long, conflicts_with = "profile")]
    pub loads: Option<PathBuf>,
    /// Synthetic profile: c12_nmax6_like[(blocks)] or uniform(min,max,count).
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub n_procs: usize,
    #[arg(long, default_value = "greedy", value_parser = ["greedy", "cyclic", "optimal"])]
    pub policy: String,
    /// Report greedy and cyclic side by side.
    #[arg(long)]
    pub compare: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Communication cost factor of the cost model.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 512)]
    pub small_max_dim: usize,
    #[arg(long, default_value_t = 4096)]
    pub medium_max_dim: usize,
    /// Include the per-block processor sets.
    #[arg(long)]
    pub assignment: bool,
    #[arg(long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    /// Problem spec (JSON).
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long, default_value = "pounders", value_parser = ["pounders", "pounder"])]
    pub algo: String,
    /// Evaluation history (CSV) to warm start from.
    #[arg(long)]
    pub warm: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub max_evals: usize,
    /// Overrides the seed in the problem spec.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run both algorithms with the same budget.
    #[arg(long)]
    pub compare: bool,
    #[arg(long)]
    pub delta0: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub noise_floor: f64,
    /// Evaluation trace destination (CSV).
    #[arg(long)]
    #[serde(skip)]
    pub trace: Option<PathBuf>,
    /// Write every new evaluation as a history (CSV) usable with --warm.
    #[arg(long)]
    #[serde(skip)]
    pub history_out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NoiseArgs {
    /// Problem spec (JSON); its simulator is the function sampled.
    #[arg(long)]
    pub problem: PathBuf,
    /// Points (CSV with columns x0, x1, ...).
    #[arg(long)]
    pub points: PathBuf,
    /// Simulator output whose noise is estimated.
    #[arg(long, default_value_t = 0)]
    pub observable: usize,
    /// Sampling step (default 1e-4 max(1, |x|)).
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long, default_value_t = noise::DEFAULT_M)]
    pub m: usize,
    /// Sample along this coordinate instead of a seeded random direction.
    #[arg(long)]
    pub coordinate: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noise table destination (CSV).
    #[arg(long)]
    #[serde(skip)]
    pub table: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    #[serde(skip)]
    pub workers: usize,
    #[arg(long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExportArgs {
    #[command(flatten)]
    pub spins: SpinModelArgs,
    /// Output directory for the blocks and manifest.json.
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

/// Failure with its exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct AppError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl AppError {
    pub fn config(msg: impl ToString) -> Self {
        Self { code: 2, kind: "invalid_config", message: msg.to_string() }
    }

    pub fn numerical(msg: impl ToString) -> Self {
        Self { code: 3, kind: "numerical_failure", message: msg.to_string() }
    }

    pub fn record(&self) -> Value {
        json!({ "error": { "kind": self.kind, "exit_code": self.code, "message": self.message } })
    }
}

impl From<PipelineError> for AppError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::AssignmentMismatch { .. } | PipelineError::DimensionMismatch(_) => AppError::config(e),
            PipelineError::TooManyEigenpairs { .. } | PipelineError::BlockTooLarge { .. } => AppError::config(e),
            _ => AppError::numerical(e),
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> AppError {
    AppError::config(format!("{}: {e}", path.display()))
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let err = AppError::config(e.to_string().trim_end());
            eprintln!("{}", err.record());
            return err.code;
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("{}", err.record());
            err.code
        }
    }
}

pub fn run(command: &Command) -> Result<(), AppError> {
    match command {
        Command::Fixedj(a) => run_fixedj(a),
        Command::Schedule(a) => run_schedule(a),
        Command::Fit(a) => run_fit(a),
        Command::Noise(a) => run_noise(a),
        Command::Export(a) => run_export(a),
    }
}

fn header(subcommand: &str, config: &impl Serialize, seed: u64) -> Value {
    json!({
        "tool": TOOL,
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
    })
}

fn emit(output: Option<&Path>, report: &Value) -> Result<(), AppError> {
    let text = serde_json::to_string_pretty(report).expect("JSON values serialize") + "\n";
    match output {
        Some(path) => fs::write(path, text).map_err(|e| io_error(path, e)),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| AppError::config(e.to_string())),
    }
}

fn csv_with_header(path: &Path, header: &Value, body: impl FnOnce(&mut Vec<u8>) -> Result<(), AppError>) -> Result<(), AppError> {
    let mut buf = format!("# {header}\n").into_bytes();
    body(&mut buf)?;
    fs::write(path, buf).map_err(|e| io_error(path, e))
}

fn secs(d: std::time::Duration) -> f64 {
    d.as_secs_f64()
}

pub fn run_fixedj(a: &FixedjArgs) -> Result<(), AppError> {
    let j: HalfInt = a.j.parse().map_err(AppError::config)?;
    if j.twice() < 0 {
        return Err(AppError::config("J must be nonnegative"));
    }
    if a.k == 0 {
        return Err(AppError::config("--k must be at least 1"));
    }
    if a.n_procs == 0 || a.workers == 0 {
        return Err(AppError::config("--n-procs and --workers must be at least 1"));
    }
    let algorithm: NullSpaceAlgorithm = a.algo.parse().map_err(AppError::config)?;
    let (jsq, h) = match a.model.as_str() {
        "manifest" => {
            let path = a.manifest.as_ref().ok_or_else(|| AppError::config("--manifest is required with --model manifest"))?;
            let manifest = BlockManifest::load(path).map_err(AppError::config)?;
            let base = path.parent().unwrap_or(Path::new("."));
            manifest.read_operators(base).map_err(AppError::config)?
        }
        _ => a.spins.operators()?,
    };
    let loads: Vec<BlockLoad> = jsq.dims().into_iter().enumerate().map(|(i, d)| BlockLoad::from_dim(i, d)).collect();
    let policy: Policy = a.policy.parse().map_err(AppError::config)?;
    let assignment = assign(&loads, a.n_procs, policy, &SizeClassThresholds::default(), &CostModelParams::default())?;
    let opts = PipelineOptions { algorithm, seed: a.seed, workers: a.workers, ..PipelineOptions::default() };

    let started = Instant::now();
    let (spectrum, timings) = pipeline::fixed_j_spectrum(&h, &jsq, j, a.k, &assignment, &opts)?;
    let blocks: Vec<Value> = jsq
        .blocks()
        .iter()
        .zip(&spectrum.ranks)
        .zip(&assignment.procs)
        .map(|(((m, b), r), p)| json!({ "label": b.label(), "m": m.to_string(), "dim": b.dim(), "rank": r, "procs": p }))
        .collect();
    let states: Vec<Value> = spectrum
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| json!({ "index": i, "energy": s.energy, "h_residual": s.h_residual, "jsq_residual": s.jsq_residual }))
        .collect();
    let mut result = json!({
        "j": j.to_string(),
        "casimir": j.casimir(),
        "algorithm": algorithm.name(),
        "total_dim": jsq.total_dim(),
        "subspace_dim": spectrum.ranks.iter().sum::<usize>(),
        "h_frobenius": blocked_frobenius(&h),
        "blocks": blocks,
        "states": states,
    });
    let mut oracle_time = None;
    if a.oracle {
        let t = Instant::now();
        let bf = pipeline::brute_force_filter(&h, &jsq, j, None, 1e-8)?;
        oracle_time = Some(secs(t.elapsed()));
        let ours = spectrum.energies();
        let theirs: Vec<f64> = bf.energies().into_iter().take(ours.len()).collect();
        let max_diff = ours.iter().zip(&theirs).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let agree = theirs.len() == ours.len() && max_diff <= 1e-8;
        result["oracle"] = json!({
            "energies": theirs,
            "ranks": bf.ranks,
            "max_abs_energy_difference": max_diff,
            "tolerance": 1e-8,
            "agree": agree,
        });
    }
    let report = json!({
        "header": header("fixedj", a, a.seed),
        "result": result,
        "runtime": {
            "workers": a.workers,
            "timings": {
                "projector_s": secs(timings.projector),
                "projection_s": secs(timings.projection),
                "diagonalization_s": secs(timings.diagonalization),
                "oracle_s": oracle_time,
                "total_s": secs(started.elapsed()),
            },
        },
    });
    emit(a.output.as_deref(), &report)
}

fn assign(
    loads: &[BlockLoad],
    n_procs: usize,
    policy: Policy,
    thresholds: &SizeClassThresholds,
    cost: &CostModelParams,
) -> Result<Assignment, AppError> {
    let r = match policy {
        Policy::Greedy => scheduler::greedy_assign(loads, n_procs, thresholds, cost),
        Policy::Cyclic => scheduler::cyclic_assign(loads, n_procs),
        Policy::Optimal => scheduler::brute_force_assign(loads, n_procs, cost),
    };
    r.map_err(AppError::config)
}

fn read_loads(path: &Path) -> Result<Vec<BlockLoad>, AppError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let doc: LoadsDocument = serde_json::from_str(&text).map_err(|e| io_error(path, e))?;
    if doc.schema != LOADS_SCHEMA {
        return Err(AppError::config(format!("unsupported loads schema '{}'", doc.schema)));
    }
    if doc.blocks.is_empty() {
        return Err(AppError::config("loads document has no blocks"));
    }
    scheduler::validate_loads(&doc.blocks).map_err(AppError::config)?;
    Ok(doc.blocks)
}

pub fn run_schedule(a: &ScheduleArgs) -> Result<(), AppError> {
    if a.n_procs == 0 {
        return Err(AppError::config(ScheduleError::NoProcessors));
    }
    if !(a.alpha >= 0.0 && a.alpha.is_finite()) {
        return Err(AppError::config("--alpha must be nonnegative and finite"));
    }
    let (loads, source) = match (&a.loads, &a.profile) {
        (Some(path), None) => (read_loads(path)?, json!({ "loads": path })),
        (None, Some(p)) => {
            let profile: LoadProfile = p.parse().map_err(AppError::config)?;
            (scheduler::synth_loads(&profile, a.seed), json!({ "profile": profile.to_string() }))
        }
        _ => return Err(AppError::config("exactly one of --loads and --profile is required")),
    };
    let thresholds = SizeClassThresholds { small_max_dim: a.small_max_dim, medium_max_dim: a.medium_max_dim };
    thresholds.validate().map_err(AppError::config)?;
    let cost = CostModelParams { alpha: a.alpha };
    let policies: Vec<Policy> =
        if a.compare { vec![Policy::Greedy, Policy::Cyclic] } else { vec![a.policy.parse().map_err(AppError::config)?] };
    let mut entries = Vec::new();
    let mut timings = serde_json::Map::new();
    let mut makespans = Vec::new();
    for policy in policies {
        let t = Instant::now();
        let asg = assign(&loads, a.n_procs, policy, &thresholds, &cost)?;
        timings.insert(format!("{policy}_s"), json!(secs(t.elapsed())));
        let metrics = scheduler::evaluate(&asg, &loads, &cost).map_err(AppError::config)?;
        makespans.push(metrics.makespan);
        let mut entry = json!({
            "policy": policy.name(),
            "makespan": metrics.makespan,
            "imbalance": metrics.imbalance,
            "per_proc_load": metrics.per_proc_load,
        });
        if a.assignment {
            entry["procs"] = json!(asg.procs);
        }
        entries.push(entry);
    }
    let mut result = json!({
        "source": source,
        "blocks": loads.len(),
        "max_dim": loads.iter().map(|b| b.dim).max(),
        "total_work": loads.iter().map(|b| b.work).sum::<f64>(),
        "n_procs": a.n_procs,
        "policies": entries,
    });
    if a.compare {
        result["greedy_over_cyclic"] = json!(makespans[0] / makespans[1]);
    }
    let report = json!({
        "header": header("schedule", a, a.seed),
        "result": result,
        "runtime": { "workers": 1, "timings": timings },
    });
    emit(a.output.as_deref(), &report)
}

fn run_summary(r: &FitResult) -> Value {
    json!({
        "algorithm": r.algorithm,
        "best_f": r.best_f,
        "best_x": r.best_x,
        "new_evaluations": r.trace.len(),
        "iterations": r.iterations,
        "termination": r.termination.to_string(),
        "evals_before_first_accept": r.evals_before_first_accept,
        "history_used": r.history_used,
        "max_interpolation_error": r.max_interpolation_error,
        "bounds_respected": r.bounds_respected,
    })
}

pub fn run_fit(a: &FitArgs) -> Result<(), AppError> {
    let mut spec = ProblemSpec::load(&a.problem).map_err(|e| io_error(&a.problem, e))?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let built = spec.build().map_err(AppError::config)?;
    let history: Vec<EvaluationRecord> = match &a.warm {
        Some(path) => dfo::read_history_file(path).map_err(|e| io_error(path, e))?,
        None => Vec::new(),
    };
    let options = DfoOptions { delta0: a.delta0, max_evals: a.max_evals, noise_floor: a.noise_floor, ..DfoOptions::default() };
    options.resolve(&built.problem.project(&built.x0)).map_err(AppError::config)?;
    let algorithms: Vec<Algorithm> = if a.compare {
        vec![Algorithm::Pounders, Algorithm::Pounder]
    } else {
        vec![a.algo.parse().map_err(AppError::config)?]
    };
    let mut runs = Vec::new();
    let mut timings = serde_json::Map::new();
    for alg in algorithms {
        let t = Instant::now();
        let r = dfo::minimize(&built.problem, &built.x0, &options, &history, alg).map_err(|e| match e {
            dfo::DfoError::Evaluator { .. } => AppError::numerical(e),
            other => AppError::config(other),
        })?;
        timings.insert(format!("{alg}_s"), json!(secs(t.elapsed())));
        runs.push(r);
    }
    let hdr = header("fit", &json!({ "args": a, "problem_spec": spec }), spec.seed);
    if let Some(path) = &a.trace {
        csv_with_header(path, &hdr, |buf| {
            let mut w = csv::Writer::from_writer(buf);
            let csv_err = |e: csv::Error| AppError::config(e);
            w.write_record(["algorithm", "index", "f", "best_f"]).map_err(csv_err)?;
            for r in &runs {
                for (rec, best) in r.trace.iter().zip(r.best_so_far()) {
                    w.write_record([r.algorithm.to_string(), rec.index.to_string(), rec.f.to_string(), best.to_string()])
                        .map_err(csv_err)?;
                }
            }
            w.flush().map_err(AppError::config)
        })?;
    }
    if let Some(path) = &a.history_out {
        csv_with_header(path, &hdr, |buf| dfo::write_history(buf, &runs[0].trace).map_err(AppError::config))?;
    }
    let mut result = json!({
        "runs": runs.iter().map(|r| {
            let mut s = run_summary(r);
            s["trace"] = json!(r.trace.iter().zip(r.best_so_far()).map(|(rec, b)| json!([rec.index, rec.f, b])).collect::<Vec<_>>());
            s
        }).collect::<Vec<_>>(),
    });
    if let Some((m, b)) = &built.linear {
        let x_star = (m.transpose() * m).lu().solve(&(m.transpose() * b));
        if let Some(x_star) = x_star {
            let f_star = (b - m * &x_star).norm_squared();
            result["reference"] = json!({
                "method": "normal equations",
                "x_star": x_star.as_slice(),
                "f_star": f_star,
                "gaps": runs.iter().map(|r| r.best_f - f_star).collect::<Vec<_>>(),
            });
        }
    }
    let report = json!({
        "header": hdr,
        "result": result,
        "runtime": { "workers": 1, "timings": timings },
    });
    emit(a.output.as_deref(), &report)?;
    if let Some(r) = runs.iter().find(|r| matches!(r.termination, Termination::EvaluatorFailure { .. })) {
        return Err(AppError::numerical(format!("{} stopped early: {}", r.algorithm, r.termination)));
    }
    Ok(())
}

fn read_points(path: &Path) -> Result<Vec<Vec<f64>>, AppError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_error(path, e))?;
    let width = rdr.headers().map_err(|e| io_error(path, e))?.len();
    let mut points = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| io_error(path, e))?;
        let x: Vec<f64> = row
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| io_error(path, format!("row {i}: {e}")))?;
        if x.len() != width || x.iter().any(|v| !v.is_finite()) {
            return Err(io_error(path, format!("row {i}: expected {width} finite values")));
        }
        points.push(x);
    }
    if points.is_empty() {
        return Err(io_error(path, "no points"));
    }
    Ok(points)
}

pub fn run_noise(a: &NoiseArgs) -> Result<(), AppError> {
    if a.workers == 0 {
        return Err(AppError::config("--workers must be at least 1"));
    }
    let spec = ProblemSpec::load(&a.problem).map_err(|e| io_error(&a.problem, e))?;
    let built = spec.build().map_err(AppError::config)?;
    let problem = &built.problem;
    if a.observable >= problem.o() {
        return Err(AppError::config(format!("--observable must be below {}", problem.o())));
    }
    let points = read_points(&a.points)?;
    if let Some(p) = points.iter().find(|p| p.len() != problem.n()) {
        return Err(AppError::config(format!("points have {} coordinates, the problem has {}", p.len(), problem.n())));
    }
    if a.m < 4 {
        return Err(AppError::config(NoiseError::TooFewSamples(a.m)));
    }
    if let Some(h) = a.h {
        if !(h > 0.0 && h.is_finite()) {
            return Err(AppError::config(NoiseError::BadStep(h)));
        }
    }
    let rule = match a.coordinate {
        Some(c) if c >= problem.n() => return Err(AppError::config("--coordinate out of range")),
        Some(c) => DirectionRule::Coordinate(c),
        None => DirectionRule::Random { seed: a.seed },
    };
    let obs = a.observable;
    let f = |x: &[f64]| problem.simulate(x).map(|s| s[obs]).map_err(|e| e.to_string());
    let t = Instant::now();
    let rows = noise::noise_map(&f, &points, rule, a.h, a.m, a.workers).map_err(AppError::config)?;
    let elapsed = secs(t.elapsed());

    let mut table = Vec::new();
    let mut sigmas = Vec::new();
    for row in &rows {
        match &row.result {
            Ok(est) => {
                sigmas.push(est.sigma_abs);
                table.push(json!({
                    "id": row.id,
                    "f": est.f0(),
                    "sigma_abs": est.sigma_abs,
                    "sigma_rel": est.sigma_rel,
                    "k": est.order,
                    "reliable": est.reliable,
                    "advisory": est.advisory,
                }));
            }
            Err(e) => table.push(json!({ "id": row.id, "error": e.to_string() })),
        }
    }
    let mut sorted = sigmas.clone();
    sorted.sort_by(f64::total_cmp);
    let median = (!sorted.is_empty()).then(|| sorted[sorted.len() / 2]);
    let mut summary = json!({
        "points": rows.len(),
        "failed": rows.iter().filter(|r| r.result.is_err()).count(),
        "reliable": rows.iter().filter(|r| r.result.as_ref().is_ok_and(|e| e.reliable)).count(),
        "median_sigma_abs": median,
        "max_sigma_abs": sorted.last(),
    });
    if spec.noise > 0.0 {
        let within = sigmas.iter().filter(|s| **s >= 0.5 * spec.noise && **s <= 2.0 * spec.noise).count();
        summary["injected_noise"] = json!(spec.noise);
        summary["within_factor_2"] = json!(within as f64 / rows.len() as f64);
    }
    let hdr = header("noise", &json!({ "args": a, "problem_spec": spec }), a.seed);
    if let Some(path) = &a.table {
        csv_with_header(path, &hdr, |buf| {
            let mut w = csv::Writer::from_writer(buf);
            let csv_err = |e: csv::Error| AppError::config(e);
            w.write_record(["id", "f", "sigma_abs", "sigma_rel", "k", "reliable"]).map_err(csv_err)?;
            for row in &rows {
                let fields: [String; 6] = match &row.result {
                    Ok(e) => [
                        row.id.to_string(),
                        e.f0().to_string(),
                        e.sigma_abs.to_string(),
                        e.sigma_rel.map_or(String::new(), |v| v.to_string()),
                        e.order.map_or(String::new(), |v| v.to_string()),
                        e.reliable.to_string(),
                    ],
                    Err(_) => [row.id.to_string(), String::new(), String::new(), String::new(), String::new(), "false".into()],
                };
                w.write_record(&fields).map_err(csv_err)?;
            }
            w.flush().map_err(AppError::config)
        })?;
    }
    let report = json!({
        "header": hdr,
        "result": { "summary": summary, "rows": table },
        "runtime": { "workers": a.workers, "timings": { "noise_map_s": elapsed } },
    });
    emit(a.output.as_deref(), &report)
}

pub fn run_export(a: &ExportArgs) -> Result<(), AppError> {
    let (jsq, h) = a.spins.operators()?;
    let t = Instant::now();
    let manifest = BlockManifest::export(&a.dir, &jsq, &h).map_err(AppError::config)?;
    let report = json!({
        "header": header("export", a, 0),
        "result": { "manifest": a.dir.join("manifest.json"), "blocks": manifest.blocks },
        "runtime": { "workers": 1, "timings": { "export_s": secs(t.elapsed()) } },
    });
    emit(a.output.as_deref(), &report)
}
