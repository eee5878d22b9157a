//! Explicit adaptive integration of the master equation (Dormand-Prince 5(4)).

use num_complex::Complex64;

use super::superop::Liouvillian;
use super::SystemConfig;
use crate::error::{invalid, Error, Result};
use crate::fock::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-13,
            max_steps: 2_000_000,
        }
    }
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B_LOW: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// State at time `t` starting from `rho0`, on the configuration's truncation.
pub fn time_evolve(cfg: &SystemConfig, rho0: &CMatrix, t: f64) -> Result<CMatrix> {
    time_evolve_with(cfg, rho0, t, EvolveOptions::default(), |_, _| {})
}

/// As [`time_evolve`], calling `observer(t, ρ)` after every accepted step.
pub fn time_evolve_with<F>(cfg: &SystemConfig, rho0: &CMatrix, t_end: f64, opts: EvolveOptions, mut observer: F) -> Result<CMatrix>
where
    F: FnMut(f64, &CMatrix),
{
    let d = cfg.jumps.truncation().dim();
    if rho0.nrows() != d || rho0.ncols() != d {
        return Err(invalid("rho0", format!("expected {d}x{d}, got {}x{}", rho0.nrows(), rho0.ncols())));
    }
    if !(t_end >= 0.0) {
        return Err(invalid("t", "must be non-negative"));
    }
    if t_end == 0.0 {
        return Ok(rho0.clone());
    }
    let liou = Liouvillian::build(cfg)?;
    let csr = liou.matrix();
    let n = csr.dim();

    let mut row_sums = vec![0.0; n];
    for (i, _, v) in csr.entries() {
        row_sums[i] += v.norm();
    }
    let stiffness = row_sums.iter().cloned().fold(1.0 / t_end, f64::max);
    let mut h = (0.1 / stiffness).min(t_end);

    let zero = Complex64::new(0.0, 0.0);
    let mut y: Vec<Complex64> = rho0.as_slice().to_vec();
    let mut k: Vec<Vec<Complex64>> = vec![vec![zero; n]; 7];
    let mut tmp = vec![zero; n];
    let mut y_new = vec![zero; n];
    let mut t = 0.0;
    csr.apply_into(&y, &mut k[0]);

    for _ in 0..opts.max_steps {
        if t >= t_end {
            return Ok(CMatrix::from_vec(d, d, y));
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    if A[s][j] != 0.0 {
                        acc += kj[i] * (h * A[s][j]);
                    }
                }
                tmp[i] = acc;
            }
            csr.apply_into(&tmp, &mut k[s]);
        }
        let mut err = 0.0;
        for i in 0..n {
            let mut hi = y[i];
            let mut e = zero;
            for s in 0..7 {
                hi += k[s][i] * (h * B[s]);
                e += k[s][i] * (h * (B[s] - B_LOW[s]));
            }
            y_new[i] = hi;
            let sc = opts.atol + opts.rtol * y[i].norm().max(hi.norm());
            err += (e.norm() / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            return Err(Error::Stepper {
                t,
                reason: "non-finite error estimate".into(),
            });
        }
        if err <= 1.0 {
            t = if last { t_end } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            // first-same-as-last: stage 7 is the derivative at the new point
            k.swap(0, 6);
            let snapshot = CMatrix::from_column_slice(d, d, &y);
            observer(t, &snapshot);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * t_end {
            return Err(Error::Stepper {
                t,
                reason: format!("step size underflow ({h:.3e} s)"),
            });
        }
    }
    Err(Error::Stepper {
        t,
        reason: format!("exceeded {} steps", opts.max_steps),
    })
}

/// Trace distance `½ Tr|ρ − σ|` between Hermitian matrices.
pub fn trace_distance(rho: &CMatrix, sigma: &CMatrix) -> f64 {
    let diff = rho - sigma;
    let herm = (&diff + diff.adjoint()) * Complex64::new(0.5, 0.0);
    0.5 * herm.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>()
}
