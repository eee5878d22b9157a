//! Thin wrappers over argmin's Brent root finder and scalar minimizer.

use argmin::core::{CostFunction, Error as ArgminError, Executor, State};
use argmin::solver::brent::{BrentOpt, BrentRoot};

use crate::error::{Error, Result};

struct Scalar<F>(F);

impl<F: Fn(f64) -> f64> CostFunction for Scalar<F> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, x: &f64) -> std::result::Result<f64, ArgminError> {
        Ok((self.0)(*x))
    }
}

/// Root of `f` in a sign-changing bracket `[lo, hi]`, to absolute `tol` in x.
pub fn brent_root<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64, max_iter: u64) -> Result<f64> {
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::RootNotFound {
            lo,
            hi,
            iterations: 0,
            residual: flo.abs().min(fhi.abs()),
        });
    }
    let res = Executor::new(Scalar(&f), BrentRoot::new(lo, hi, tol))
        .configure(|s| s.param(0.5 * (lo + hi)).max_iters(max_iter))
        .run()
        .map_err(|_| Error::RootNotFound {
            lo,
            hi,
            iterations: 0,
            residual: f64::NAN,
        })?;
    let state = res.state();
    let x = *state.get_best_param().unwrap_or(&f64::NAN);
    let iterations = state.get_iter() as usize;
    if !x.is_finite() || iterations as u64 >= max_iter {
        return Err(Error::RootNotFound {
            lo,
            hi,
            iterations,
            residual: f(x).abs(),
        });
    }
    Ok(x)
}

/// Minimum of `f` on `[lo, hi]`; returns `(x, f(x))`.
pub fn brent_min<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, abs_tol: f64, max_iter: u64) -> Result<(f64, f64)> {
    let res = Executor::new(Scalar(&f), BrentOpt::new(lo, hi).set_tolerance(1.5e-8, abs_tol))
        .configure(|s| s.max_iters(max_iter))
        .run()
        .map_err(|e| Error::FitDiverged {
            reason: e.to_string(),
            last: vec![],
        })?;
    let state = res.state();
    let x = *state.get_best_param().ok_or_else(|| Error::FitDiverged {
        reason: "no iterate".into(),
        last: vec![],
    })?;
    Ok((x, state.get_best_cost()))
}
