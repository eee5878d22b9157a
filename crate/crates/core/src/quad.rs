//! Adaptive double-exponential (tanh-sinh) quadrature.
//!
//! Nodes cluster doubly-exponentially at both interval ends, so integrable
//! endpoint singularities such as the BCS square-root peaks are handled
//! without special treatment as long as the caller places breakpoints on
//! them. Node positions are formed from the distance to the nearest
//! endpoint, which keeps nodes distinct from the endpoint down to the last
//! representable offset.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

const T_MAX: f64 = 4.0;
const MAX_LEVEL: usize = 7;
const MAX_DEPTH: usize = 12;

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Integrates `f` over `[a, b]`.
///
/// The interval is bisected whenever a single tanh-sinh pass does not reach
/// the tolerance; failure after the depth limit reports the achieved error.
pub fn integrate<F>(f: &F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    if b < a {
        let est = integrate(f, b, a, tol)?;
        return Ok(Estimate {
            value: -est.value,
            ..est
        });
    }
    adaptive(f, a, b, tol, 0)
}

/// Integrates over consecutive sub-intervals delimited by `breakpoints`
/// (sorted, deduplicated internally) and sums the results.
pub fn integrate_piecewise<F>(f: &F, breakpoints: &[f64], tol: Tolerance) -> Result<Estimate>
where
    F: Fn(f64) -> f64,
{
    let mut pts: Vec<f64> = breakpoints.iter().copied().filter(|x| x.is_finite()).collect();
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    let pieces = pts.len().saturating_sub(1).max(1) as f64;
    let piece_tol = Tolerance::new(tol.abs / pieces, tol.rel);
    let mut total = Estimate {
        value: 0.0,
        error: 0.0,
        evaluations: 0,
    };
    for w in pts.windows(2) {
        let est = integrate(f, w[0], w[1], piece_tol)?;
        total.value += est.value;
        total.error += est.error;
        total.evaluations += est.evaluations;
    }
    Ok(total)
}

fn adaptive<F>(f: &F, a: f64, b: f64, tol: Tolerance, depth: usize) -> Result<Estimate>
where
    F: Fn(f64) -> f64,
{
    let est = tanh_sinh(f, a, b, tol)?;
    if est.error <= tol.target(est.value) {
        return Ok(est);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Quadrature {
            lo: a,
            hi: b,
            achieved: est.error,
            target: tol.target(est.value),
        });
    }
    let mid = 0.5 * (a + b);
    let half = Tolerance::new(0.5 * tol.abs, tol.rel);
    let left = adaptive(f, a, mid, half, depth + 1)?;
    let right = adaptive(f, mid, b, half, depth + 1)?;
    Ok(Estimate {
        value: left.value + right.value,
        error: left.error + right.error,
        evaluations: est.evaluations + left.evaluations + right.evaluations,
    })
}

/// One refinement sequence of the tanh-sinh rule; the error estimate is the
/// difference between the last two levels.
fn tanh_sinh<F>(f: &F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate>
where
    F: Fn(f64) -> f64,
{
    let half = 0.5 * (b - a);
    let centre = 0.5 * (a + b);
    let mut evaluations = 0usize;

    // Sum of w(t) * [f(x(t)) + f(x(-t))] for the given t > 0, or the t = 0 term.
    let mut eval_pair = |t: f64| -> Result<f64> {
        if t == 0.0 {
            evaluations += 1;
            let v = f(centre);
            if !v.is_finite() {
                return Err(non_finite(a, b));
            }
            return Ok(FRAC_PI_2 * half * v);
        }
        let u = FRAC_PI_2 * t.sinh();
        let cu = u.cosh();
        let weight = half * FRAC_PI_2 * t.cosh() / (cu * cu);
        // distance from the endpoint: half * (1 - tanh u)
        let delta = half * (-u).exp() / cu;
        let mut acc = 0.0;
        let xl = a + delta;
        if xl > a && xl < b {
            evaluations += 1;
            let v = f(xl);
            if !v.is_finite() {
                return Err(non_finite(a, b));
            }
            acc += v;
        }
        let xr = b - delta;
        if xr < b && xr > a {
            evaluations += 1;
            let v = f(xr);
            if !v.is_finite() {
                return Err(non_finite(a, b));
            }
            acc += v;
        }
        Ok(weight * acc)
    };

    let mut h = 1.0;
    let mut sum = eval_pair(0.0)?;
    let mut k = 1.0;
    while k <= T_MAX {
        sum += eval_pair(k)?;
        k += 1.0;
    }
    let mut estimate = h * sum;
    let mut error = f64::INFINITY;

    for _level in 1..=MAX_LEVEL {
        h *= 0.5;
        let mut t = h;
        while t <= T_MAX {
            sum += eval_pair(t)?;
            t += 2.0 * h;
        }
        let next = h * sum;
        error = (next - estimate).abs();
        estimate = next;
        if error <= 0.1 * tol.target(estimate) {
            break;
        }
    }

    Ok(Estimate {
        value: estimate,
        error,
        evaluations,
    })
}

fn non_finite(a: f64, b: f64) -> Error {
    Error::Quadrature {
        lo: a,
        hi: b,
        achieved: f64::INFINITY,
        target: 0.0,
    }
}
