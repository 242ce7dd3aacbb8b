//! The model-based trust-region iteration shared by both algorithms.

use nalgebra::{DMatrix, DVector};

use super::interp::{affine_points, InterpolationSystem, Quadratic};
use super::problem::{EvaluationRecord, ResidualProblem};
use super::trust::{box_qp, model_value};
use super::{Algorithm, DfoError, DfoOptions, FitResult, ResolvedOptions, Termination};

/// POUNDERS: one quadratic model per residual.
pub fn pounders_minimize(
    problem: &ResidualProblem,
    x0: &[f64],
    options: &DfoOptions,
    history: &[EvaluationRecord],
) -> Result<FitResult, DfoError> {
    minimize(problem, x0, options, history, Algorithm::Pounders)
}

/// POUNDER: one quadratic model of the aggregate objective.
pub fn pounder_minimize(
    problem: &ResidualProblem,
    x0: &[f64],
    options: &DfoOptions,
    history: &[EvaluationRecord],
) -> Result<FitResult, DfoError> {
    minimize(problem, x0, options, history, Algorithm::Pounder)
}

struct Pool {
    xs: Vec<DVector<f64>>,
    rs: Vec<DVector<f64>>,
    fs: Vec<f64>,
}

impl Pool {
    fn push(&mut self, x: DVector<f64>, r: DVector<f64>, f: f64) -> usize {
        self.xs.push(x);
        self.rs.push(r);
        self.fs.push(f);
        self.xs.len() - 1
    }

    fn len(&self) -> usize {
        self.xs.len()
    }

    fn best(&self) -> usize {
        (0..self.len()).min_by(|&a, &b| self.fs[a].total_cmp(&self.fs[b])).expect("pool is nonempty")
    }
}

enum Halt {
    Budget,
    RadiusBelowMinimum,
    Failure { x: Vec<f64>, message: String },
}

struct Run<'a> {
    problem: &'a ResidualProblem,
    opts: ResolvedOptions,
    algorithm: Algorithm,
    pool: Pool,
    trace: Vec<EvaluationRecord>,
    max_error: f64,
    feasible: bool,
}

impl Run<'_> {
    /// Evaluates `x` after projecting it onto the bounds, which absorbs the
    /// rounding of `c + (l - c)`.
    fn evaluate(&mut self, x: DVector<f64>) -> Result<usize, Halt> {
        if self.trace.len() >= self.opts.max_evals {
            return Err(Halt::Budget);
        }
        let xs = self.problem.project(x.as_slice());
        let x = DVector::from_column_slice(&xs);
        self.feasible &= self.problem.is_feasible(&xs);
        match self.problem.residuals(&xs) {
            Ok(r) => {
                let rec = EvaluationRecord::new(self.trace.len(), xs, r);
                let f = rec.f;
                let rv = DVector::from_column_slice(&rec.residuals);
                self.trace.push(rec);
                Ok(self.pool.push(x, rv, f))
            }
            Err(DfoError::Evaluator { x, message }) => Err(Halt::Failure { x, message }),
            Err(other) => Err(Halt::Failure { x: xs, message: other.to_string() }),
        }
    }

    fn n(&self) -> usize {
        self.problem.n()
    }

    /// Step bounds `max(l - c, -delta) <= s <= min(u - c, delta)`.
    fn step_box(&self, center: &DVector<f64>, delta: f64) -> (DVector<f64>, DVector<f64>) {
        let n = self.n();
        let lo = DVector::from_iterator(n, (0..n).map(|j| (self.problem.lower[j] - center[j]).max(-delta)));
        let hi = DVector::from_iterator(n, (0..n).map(|j| (self.problem.upper[j] - center[j]).min(delta)));
        (lo, hi)
    }

    /// Feasible point `center + s` with `s` along `+-dir` scaled to `delta`,
    /// preferring the sign that survives clipping best.
    fn geometry_point(&self, center: &DVector<f64>, dir: &DVector<f64>, delta: f64) -> DVector<f64> {
        let clip = |v: DVector<f64>| DVector::from_vec(self.problem.project(v.as_slice()));
        let plus = clip(center + dir * delta);
        let minus = clip(center - dir * delta);
        let along = |p: &DVector<f64>| (p - center).dot(dir).abs();
        if along(&minus) > along(&plus) {
            minus
        } else {
            plus
        }
    }

    /// Pool indices other than `center`, nearest first.
    fn by_distance(&self, center: usize) -> Vec<(usize, DVector<f64>)> {
        let c = &self.pool.xs[center];
        let mut v: Vec<(usize, DVector<f64>)> =
            (0..self.pool.len()).filter(|&i| i != center).map(|i| (i, &self.pool.xs[i] - c)).collect();
        v.sort_by(|a, b| a.1.norm().total_cmp(&b.1.norm()).then(a.0.cmp(&b.0)));
        v
    }
}

/// Interpolation set around a center.
struct Geometry {
    /// Pool indices of the non-center points.
    points: Vec<usize>,
    displacements: Vec<DVector<f64>>,
    /// Directions with no certified point within `valid_radius * delta`.
    missing_valid: DMatrix<f64>,
    /// Directions with no point at all within `extra_radius * delta`.
    missing_any: DMatrix<f64>,
}

fn select_geometry(run: &Run<'_>, center: usize, delta: f64) -> Geometry {
    let o = &run.opts;
    let cands = run.by_distance(center);
    let disps: Vec<DVector<f64>> = cands.iter().map(|c| c.1.clone()).collect();
    let (valid, missing_valid) = affine_points(run.n(), &disps, delta, o.valid_radius, o.pivot);
    let (linear, missing_any) = if missing_valid.ncols() == 0 {
        (valid, missing_valid.clone())
    } else {
        affine_points(run.n(), &disps, delta, o.extra_radius, o.pivot)
    };
    let mut chosen: Vec<usize> = linear.clone();
    if missing_any.ncols() == 0 {
        for pos in 0..cands.len() {
            if chosen.len() + 1 >= o.max_points {
                break;
            }
            if chosen.contains(&pos) || disps[pos].norm() > o.extra_radius * delta * (1.0 + 1e-10) {
                continue;
            }
            let mut trial: Vec<DVector<f64>> = chosen.iter().map(|&p| disps[p].clone()).collect();
            trial.push(disps[pos].clone());
            if InterpolationSystem::condition(&trial, delta).is_some_and(|c| c <= o.cond_max) {
                chosen.push(pos);
            }
        }
    }
    Geometry {
        points: chosen.iter().map(|&p| cands[p].0).collect(),
        displacements: chosen.iter().map(|&p| disps[p].clone()).collect(),
        missing_valid,
        missing_any,
    }
}

/// Master model of `f` around the center together with the component models.
struct Models {
    master: Quadratic,
    hessians: Vec<DMatrix<f64>>,
    error: f64,
}

fn build_models(
    run: &Run<'_>,
    center: usize,
    geom: &Geometry,
    delta: f64,
    prev: &[DMatrix<f64>],
) -> Option<Models> {
    let sys = InterpolationSystem::new(&geom.displacements, delta)?;
    let rows = geom.points.len() + 1;
    let idx: Vec<usize> = std::iter::once(center).chain(geom.points.iter().copied()).collect();
    let values = match run.algorithm {
        Algorithm::Pounders => {
            let o = run.problem.o();
            DMatrix::from_fn(rows, o, |i, j| run.pool.rs[idx[i]][j])
        }
        Algorithm::Pounder => DMatrix::from_fn(rows, 1, |i, _| run.pool.fs[idx[i]]),
    };
    let fit = sys.fit(&values, prev);
    let hessians: Vec<DMatrix<f64>> = fit.models.iter().map(|m| m.h.clone()).collect();
    let master = match run.algorithm {
        Algorithm::Pounders => combine(&fit.models, run.pool.fs[center]),
        Algorithm::Pounder => fit.models.into_iter().next().expect("one model"),
    };
    Some(Models { master, hessians, error: fit.interpolation_error })
}

/// `g = 2 G^T r`, `H = 2 (G^T G + sum r_i H_i)` for `f = sum r_i^2`.
fn combine(models: &[Quadratic], f_center: f64) -> Quadratic {
    let n = models[0].g.len();
    let mut g = DVector::zeros(n);
    let mut h = DMatrix::zeros(n, n);
    for m in models {
        g += 2.0 * m.c * &m.g;
        h += 2.0 * (&m.g * m.g.transpose() + m.c * &m.h);
    }
    Quadratic { c: f_center, g, h }
}

/// Runs either algorithm. `history` may be empty (cold start); otherwise its
/// feasible records seed the candidate pool and the best one becomes the
/// first center without spending any new evaluation.
pub fn minimize(
    problem: &ResidualProblem,
    x0: &[f64],
    options: &DfoOptions,
    history: &[EvaluationRecord],
    algorithm: Algorithm,
) -> Result<FitResult, DfoError> {
    let n = problem.n();
    if x0.len() != n {
        return Err(DfoError::InvalidProblem(format!("x0 has {} entries, expected {n}", x0.len())));
    }
    let x0 = problem.project(x0);
    let opts = options.resolve(&x0)?;
    let mut run = Run {
        problem,
        opts,
        algorithm,
        pool: Pool { xs: Vec::new(), rs: Vec::new(), fs: Vec::new() },
        trace: Vec::new(),
        max_error: 0.0,
        feasible: true,
    };
    let history_used = seed_pool(&mut run, history)?;
    let history_best = (history_used > 0).then(|| run.pool.fs[run.pool.best()]);

    let mut delta = run.opts.delta0;
    let mut iterations = 0;
    let mut evals_before_first_accept = 0;
    let halt = 'outer: {
        let mut center = if history_used > 0 {
            run.pool.best()
        } else {
            let c = match run.evaluate(DVector::from_vec(x0.clone())) {
                Ok(c) => c,
                Err(Halt::Failure { x, message }) => return Err(DfoError::Evaluator { x, message }),
                Err(_) => unreachable!("max_evals >= 1 is validated"),
            };
            evals_before_first_accept = 1;
            if let Err(h) = initial_design(&mut run, c, delta) {
                break 'outer h;
            }
            c
        };
        let n_models = if algorithm == Algorithm::Pounders { problem.o() } else { 1 };
        let mut prev = vec![DMatrix::zeros(n, n); n_models];
        let mut geometry_rounds = 0;
        loop {
            center = better_center(&run, center);
            if delta < run.opts.delta_min {
                break 'outer Halt::RadiusBelowMinimum;
            }
            iterations += 1;
            let geom = select_geometry(&run, center, delta);
            if geom.missing_any.ncols() > 0 {
                geometry_rounds += 1;
                if geometry_rounds > 2 {
                    delta *= run.opts.gamma_shrink;
                    geometry_rounds = 0;
                    continue;
                }
                match improve(&mut run, center, &geom.missing_any, delta) {
                    Ok(true) => {}
                    Ok(false) => delta *= run.opts.gamma_shrink,
                    Err(h) => break 'outer h,
                }
                continue;
            }
            geometry_rounds = 0;
            let valid = geom.missing_valid.ncols() == 0;
            let Some(models) = build_models(&run, center, &geom, delta, &prev) else {
                delta *= run.opts.gamma_shrink;
                continue;
            };
            run.max_error = run.max_error.max(models.error);
            prev = models.hessians;
            let xc = run.pool.xs[center].clone();
            let (lo, hi) = run.step_box(&xc, delta);
            let s = box_qp(&models.master.g, &models.master.h, &lo, &hi);
            let pred = -model_value(&models.master.g, &models.master.h, &s);
            let fc = run.pool.fs[center];
            let floor = run.opts.noise_floor.max(1e-15 * fc.abs());
            if pred <= floor || s.amax() <= 1e-12 * delta {
                if valid {
                    delta *= run.opts.gamma_shrink;
                } else {
                    match improve(&mut run, center, &geom.missing_valid, delta) {
                        Ok(true) => {}
                        Ok(false) => delta *= run.opts.gamma_shrink,
                        Err(h) => break 'outer h,
                    }
                }
                continue;
            }
            let trial = DVector::from_vec(problem.project((&xc + &s).as_slice()));
            let t = match run.evaluate(trial) {
                Ok(t) => t,
                Err(h) => break 'outer h,
            };
            let rho = (fc - run.pool.fs[t]) / pred;
            if rho > run.opts.eta_accept {
                center = t;
            }
            if rho >= 0.75 && s.amax() >= 0.99 * delta {
                delta = (run.opts.gamma_grow * delta).min(run.opts.delta_max);
            } else if rho < 0.25 {
                if valid {
                    delta *= run.opts.gamma_shrink;
                } else {
                    match improve(&mut run, center, &geom.missing_valid, delta) {
                        Ok(true) => {}
                        Ok(false) => delta *= run.opts.gamma_shrink,
                        Err(h) => break 'outer h,
                    }
                }
            }
        }
    };
    let termination = match halt {
        Halt::Budget => Termination::BudgetExhausted,
        Halt::RadiusBelowMinimum => Termination::RadiusBelowMinimum,
        Halt::Failure { x, message } => Termination::EvaluatorFailure { x, message },
    };
    let best = run.pool.best();
    Ok(FitResult {
        algorithm,
        best_x: run.pool.xs[best].as_slice().to_vec(),
        best_f: run.pool.fs[best],
        best_residuals: run.pool.rs[best].as_slice().to_vec(),
        trace: run.trace,
        termination,
        iterations,
        history_used,
        history_best,
        evals_before_first_accept,
        max_interpolation_error: run.max_error,
        bounds_respected: run.feasible,
    })
}

/// Keeps the center on a point with the lowest objective; only a strictly
/// better point displaces it.
fn better_center(run: &Run<'_>, center: usize) -> usize {
    let best = run.pool.best();
    if run.pool.fs[best] < run.pool.fs[center] {
        best
    } else {
        center
    }
}

fn seed_pool(run: &mut Run<'_>, history: &[EvaluationRecord]) -> Result<usize, DfoError> {
    let (n, o) = (run.problem.n(), run.problem.o());
    let mut used = 0;
    for (k, rec) in history.iter().enumerate() {
        if rec.x.len() != n || rec.residuals.len() != o {
            return Err(DfoError::InconsistentHistory(format!(
                "record {k} has {} parameters and {} residuals, expected {n} and {o}",
                rec.x.len(),
                rec.residuals.len()
            )));
        }
        if !run.problem.is_feasible(&rec.x) || rec.x.iter().chain(&rec.residuals).any(|v| !v.is_finite()) {
            continue;
        }
        let x = DVector::from_column_slice(&rec.x);
        if run.pool.xs.contains(&x) {
            continue;
        }
        let r = DVector::from_column_slice(&rec.residuals);
        let f = r.norm_squared();
        run.pool.push(x, r, f);
        used += 1;
    }
    Ok(used)
}

/// Center plus `+-delta` along each coordinate, clipped to the bounds. A
/// direction blocked by a bound is replaced by a half step the other way.
fn initial_design(run: &mut Run<'_>, center: usize, delta: f64) -> Result<(), Halt> {
    let n = run.n();
    let xc = run.pool.xs[center].clone();
    for j in 0..n {
        let mut seen: Vec<f64> = Vec::new();
        for sign in [1.0, -1.0] {
            let mut step = sign * delta;
            let clipped = |s: f64| (xc[j] + s).clamp(run.problem.lower[j], run.problem.upper[j]) - xc[j];
            if clipped(step).abs() < 1e-3 * delta {
                step *= -0.5;
            }
            let s = clipped(step);
            if s.abs() < 1e-3 * delta || seen.iter().any(|&t| (t - s).abs() < 1e-3 * delta) {
                continue;
            }
            seen.push(s);
            let mut x = xc.clone();
            x[j] += s;
            run.evaluate(x)?;
        }
    }
    Ok(())
}

/// Evaluates one geometry point per missing direction, skipping points that
/// are already known. Returns whether anything new was evaluated.
fn improve(run: &mut Run<'_>, center: usize, missing: &DMatrix<f64>, delta: f64) -> Result<bool, Halt> {
    let xc = run.pool.xs[center].clone();
    let mut added = false;
    for k in 0..missing.ncols() {
        let dir = missing.column(k).into_owned();
        let x = run.geometry_point(&xc, &dir, delta);
        if (&x - &xc).amax() < 1e-3 * delta * dir.amax() || run.pool.xs.contains(&x) {
            continue;
        }
        run.evaluate(x)?;
        added = true;
    }
    Ok(added)
}

/// Master model built from the initial `2n + 1` point design around `x`,
/// with zero prior Hessians. Used to check the model gradient against finite
/// differences; returns the model and its interpolation error.
pub fn design_master_model(
    problem: &ResidualProblem,
    x: &[f64],
    delta: f64,
    algorithm: Algorithm,
) -> Result<(Quadratic, f64), DfoError> {
    let n = problem.n();
    let options = DfoOptions { delta0: Some(delta), delta_min: Some(delta * 1e-3), ..DfoOptions::default() };
    let mut run = Run {
        problem,
        opts: options.resolve(x)?,
        algorithm,
        pool: Pool { xs: Vec::new(), rs: Vec::new(), fs: Vec::new() },
        trace: Vec::new(),
        max_error: 0.0,
        feasible: true,
    };
    let to_err = |h: Halt| match h {
        Halt::Failure { x, message } => DfoError::Evaluator { x, message },
        _ => DfoError::InvalidOptions("budget exhausted".into()),
    };
    let c = run.evaluate(DVector::from_column_slice(x)).map_err(to_err)?;
    initial_design(&mut run, c, delta).map_err(to_err)?;
    let geom = select_geometry(&run, c, delta);
    let prev = vec![DMatrix::zeros(n, n); if algorithm == Algorithm::Pounders { problem.o() } else { 1 }];
    let models = build_models(&run, c, &geom, delta, &prev)
        .ok_or_else(|| DfoError::InvalidProblem("design points are not poised".into()))?;
    Ok((models.master, models.error))
}

/// Evaluates an external experimental design: `x0` plus `points - 1` points
/// drawn uniformly from the box of half-width `0.1 max(1, |x0_j|)` around
/// `x0`, clipped to the bounds. The records are suitable as a warm-start
/// history.
pub fn experimental_design(
    problem: &ResidualProblem,
    x0: &[f64],
    points: usize,
    seed: u64,
) -> Result<Vec<EvaluationRecord>, DfoError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let center = problem.project(x0);
    let mut out = Vec::with_capacity(points);
    for k in 0..points {
        let x: Vec<f64> = if k == 0 {
            center.clone()
        } else {
            let raw: Vec<f64> =
                center.iter().map(|c| c + 0.1 * c.abs().max(1.0) * rng.random_range(-1.0..=1.0)).collect();
            problem.project(&raw)
        };
        let r = problem.residuals(&x)?;
        out.push(EvaluationRecord::new(k, x, r));
    }
    Ok(out)
}
