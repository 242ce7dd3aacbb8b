//! Box-constrained quadratic subproblem by projected truncated conjugate
//! gradients.

use nalgebra::{DMatrix, DVector};

/// `g^T s + 1/2 s^T H s`.
pub fn model_value(g: &DVector<f64>, h: &DMatrix<f64>, s: &DVector<f64>) -> f64 {
    g.dot(s) + 0.5 * s.dot(&(h * s))
}

/// Approximate minimizer of `g^T s + 1/2 s^T H s` over `lo <= s <= hi`,
/// where `lo <= 0 <= hi`.
///
/// Each outer pass takes the generalized Cauchy point along the projected
/// steepest-descent path and then runs conjugate gradients on the variables
/// that are free there, stopping at the first bound it meets or on negative
/// curvature (moving to the boundary). The result never increases the model
/// relative to the Cauchy point, and is feasible by construction.
pub fn box_qp(g: &DVector<f64>, h: &DMatrix<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    let n = g.len();
    let mut s = DVector::zeros(n);
    let scale = g.amax().max(h.amax()).max(f64::MIN_POSITIVE);
    for _ in 0..(3 * n + 10) {
        let before = model_value(g, h, &s);
        let grad = g + h * &s;
        let pg = projected_gradient(&s, &grad, lo, hi);
        if pg.amax() <= 1e-14 * scale {
            break;
        }
        s = cauchy_point(&s, &grad, h, lo, hi);
        s = truncated_cg(g, h, s, lo, hi);
        let after = model_value(g, h, &s);
        if before - after <= 1e-15 * before.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    s
}

fn at_lower(s: f64, lo: f64) -> bool {
    s <= lo
}

fn at_upper(s: f64, hi: f64) -> bool {
    s >= hi
}

fn projected_gradient(s: &DVector<f64>, grad: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        s.len(),
        (0..s.len()).map(|i| {
            if (at_lower(s[i], lo[i]) && grad[i] > 0.0) || (at_upper(s[i], hi[i]) && grad[i] < 0.0) {
                0.0
            } else {
                grad[i]
            }
        }),
    )
}

/// First local minimizer of the model along `P(s - t grad)`, `t >= 0`.
fn cauchy_point(
    s: &DVector<f64>,
    grad: &DVector<f64>,
    h: &DMatrix<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> DVector<f64> {
    let n = s.len();
    let mut breaks: Vec<(f64, usize)> = (0..n)
        .filter_map(|i| {
            let t = if grad[i] > 0.0 {
                (s[i] - lo[i]) / grad[i]
            } else if grad[i] < 0.0 {
                (s[i] - hi[i]) / grad[i]
            } else {
                return None;
            };
            Some((t.max(0.0), i))
        })
        .collect();
    breaks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut x = s.clone();
    let mut d = -grad;
    for (i, _) in grad.iter().enumerate() {
        if breaks.iter().all(|&(_, j)| j != i) {
            d[i] = 0.0;
        }
    }
    let mut t_prev = 0.0;
    let mut k = 0;
    // Variables whose breakpoint is zero are already at a bound.
    while k < breaks.len() && breaks[k].0 <= 0.0 {
        d[breaks[k].1] = 0.0;
        k += 1;
    }
    loop {
        if d.amax() == 0.0 {
            return x;
        }
        let t_next = breaks.get(k).map_or(f64::INFINITY, |b| b.0);
        let gx = grad + h * (&x - s);
        let slope = gx.dot(&d);
        if slope >= 0.0 {
            return x;
        }
        let curv = d.dot(&(h * &d));
        let span = t_next - t_prev;
        if curv > 0.0 {
            let tau = -slope / curv;
            if tau < span {
                return clamp(&(x + tau * d), lo, hi);
            }
        } else if !span.is_finite() {
            // Unbounded descent cannot happen inside a box; guard anyway.
            return x;
        }
        x = clamp(&(x + span * &d), lo, hi);
        t_prev = t_next;
        while k < breaks.len() && breaks[k].0 <= t_prev {
            let i = breaks[k].1;
            d[i] = 0.0;
            x[i] = if grad[i] > 0.0 { lo[i] } else { hi[i] };
            k += 1;
        }
    }
}

fn clamp(x: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len(), (0..x.len()).map(|i| x[i].clamp(lo[i], hi[i])))
}

/// Largest `alpha >= 0` with `lo <= s + alpha p <= hi`.
fn max_step(s: &DVector<f64>, p: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> f64 {
    let mut alpha = f64::INFINITY;
    for i in 0..s.len() {
        if p[i] > 0.0 {
            alpha = alpha.min((hi[i] - s[i]) / p[i]);
        } else if p[i] < 0.0 {
            alpha = alpha.min((lo[i] - s[i]) / p[i]);
        }
    }
    alpha.max(0.0)
}

fn truncated_cg(
    g: &DVector<f64>,
    h: &DMatrix<f64>,
    mut s: DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> DVector<f64> {
    let n = s.len();
    let free: Vec<bool> = (0..n).map(|i| lo[i] < s[i] && s[i] < hi[i]).collect();
    let mask = |v: &DVector<f64>| DVector::from_iterator(n, (0..n).map(|i| if free[i] { v[i] } else { 0.0 }));
    let mut r = mask(&-(g + h * &s));
    let r0 = r.norm();
    if r0 == 0.0 {
        return s;
    }
    let mut p = r.clone();
    for _ in 0..n {
        let hp = mask(&(h * &p));
        let curv = p.dot(&hp);
        let alpha_max = max_step(&s, &p, lo, hi);
        if curv <= 0.0 {
            s += alpha_max * &p;
            break;
        }
        let rr = r.dot(&r);
        let alpha = rr / curv;
        if alpha >= alpha_max {
            s += alpha_max * &p;
            break;
        }
        s += alpha * &p;
        r -= alpha * hp;
        if r.norm() <= 1e-12 * r0 {
            break;
        }
        let beta = r.dot(&r) / rr;
        p = &r + beta * p;
    }
    clamp(&s, lo, hi)
}
