//! Steady state of the master equation.
//!
//! Every term except the coherent drive conserves the coherence order
//! `k = m − n` of `ρ[m, n]`; the drive couples `k` to `k ± 1`. The generator
//! is therefore block tridiagonal in `k`, and the steady state follows from
//! eliminating the outer coherences inward with Schur complements, solving
//! the population block with the trace condition in place of one equation,
//! and substituting back.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::superop::Liouvillian;
use super::SystemConfig;
use crate::constants::E_CHARGE;
use crate::error::{Error, Result};
use crate::fock::CMatrix;

/// Population threshold on the two highest Fock levels.
pub const TRUNCATION_POPULATION: f64 = 1e-6;
/// Fock levels added per guard re-run.
pub const TRUNCATION_STEP: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationReport {
    pub n_max: usize,
    /// Population of the two highest Fock levels at `n_max`.
    pub top_population: f64,
    /// `(n_max, top_population)` of every rejected attempt.
    pub rejected: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct SteadyStateResult {
    pub rho: CMatrix,
    pub n_ph: f64,
    pub i_pat: f64,
    pub truncation_report: TruncationReport,
    /// `‖L(ρ)‖₂ / kappa_env`.
    pub residual: f64,
    pub min_eigenvalue: f64,
    pub rates: Vec<(i64, f64)>,
}

impl SteadyStateResult {
    pub fn populations(&self) -> Vec<f64> {
        (0..self.rho.nrows()).map(|n| self.rho[(n, n)].re).collect()
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    /// Largest entry of `|ρ − ρ†|`.
    pub fn hermiticity_error(&self) -> f64 {
        (&self.rho - self.rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Structured text dump.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n_ph\t{:.9e}", self.n_ph)?;
        writeln!(out, "i_pat_A\t{:.9e}", self.i_pat)?;
        writeln!(out, "residual\t{:.3e}", self.residual)?;
        writeln!(out, "min_eigenvalue\t{:.3e}", self.min_eigenvalue)?;
        writeln!(out, "n_max\t{}", self.truncation_report.n_max)?;
        writeln!(out, "top_population\t{:.3e}", self.truncation_report.top_population)?;
        for (n_max, pop) in &self.truncation_report.rejected {
            writeln!(out, "rejected_n_max\t{n_max}\t{pop:.3e}")?;
        }
        writeln!(out, "# fock\tpopulation")?;
        for (n, p) in self.populations().iter().enumerate() {
            writeln!(out, "{n}\t{p:.9e}")?;
        }
        Ok(())
    }
}

/// Starting truncation from the damped-cavity photon number plus thermal
/// occupation, widened by a generous Poisson margin.
fn initial_n_max(cfg: &SystemConfig) -> usize {
    let n_drive = 4.0 * cfg.drive.eta * cfg.drive.eta / (cfg.env.kappa_env * cfg.env.kappa_env);
    let n_est = n_drive + cfg.env.thermal_occupation;
    let guess = (n_est + 5.0 * n_est.sqrt() + 6.0).ceil() as usize;
    guess.max(cfg.n_max()).min(cfg.truncation_ceiling.max(1))
}

/// Steady state with the truncation guard: the Fock space grows by
/// [`TRUNCATION_STEP`] until the two highest levels hold less than
/// [`TRUNCATION_POPULATION`].
pub fn steady_state(cfg: &SystemConfig) -> Result<SteadyStateResult> {
    cfg.validate()?;
    let mut n_max = initial_n_max(cfg);
    let mut rejected = Vec::new();
    loop {
        let trial = cfg.with_n_max(n_max)?;
        let mut res = steady_state_at(&trial)?;
        let top = res.truncation_report.top_population;
        if top < TRUNCATION_POPULATION {
            res.truncation_report.rejected = rejected;
            return Ok(res);
        }
        rejected.push((n_max, top));
        if n_max + TRUNCATION_STEP > cfg.truncation_ceiling {
            return Err(Error::TruncationCeiling {
                ceiling: cfg.truncation_ceiling,
                n_max,
                population: top,
                required: n_max + TRUNCATION_STEP,
            });
        }
        n_max += TRUNCATION_STEP;
    }
}

/// Steady state on the configuration's own truncation, without the guard.
pub fn steady_state_at(cfg: &SystemConfig) -> Result<SteadyStateResult> {
    let liou = Liouvillian::build(cfg)?;
    let rho = solve_block_tridiagonal(&liou, cfg.env.kappa_env)?;
    finish(cfg, &liou, rho)
}

/// Dense reference solve of the full constrained system; used as an oracle.
pub fn steady_state_dense(cfg: &SystemConfig) -> Result<SteadyStateResult> {
    let liou = Liouvillian::build(cfg)?;
    let d = liou.fock_dim();
    let mut m = liou.to_dense() / Complex64::new(cfg.env.kappa_env, 0.0);
    let mut b = DVector::zeros(d * d);
    for j in 0..d * d {
        m[(0, j)] = Complex64::new(0.0, 0.0);
    }
    for n in 0..d {
        m[(0, n + n * d)] = Complex64::new(1.0, 0.0);
    }
    b[0] = Complex64::new(1.0, 0.0);
    let x = m
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular("dense steady-state system".into()))?;
    finish(cfg, &liou, CMatrix::from_vec(d, d, x.as_slice().to_vec()))
}

fn finish(cfg: &SystemConfig, liou: &Liouvillian, rho: CMatrix) -> Result<SteadyStateResult> {
    let d = liou.fock_dim();
    let lrho = liou.apply(&rho);
    let residual = lrho.norm() / cfg.env.kappa_env;
    let n_ph: f64 = (0..d).map(|n| n as f64 * rho[(n, n)].re).sum();
    let top_population = rho[(d - 1, d - 1)].re + if d >= 2 { rho[(d - 2, d - 2)].re } else { 0.0 };
    let herm = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    let min_eigenvalue = herm.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
    let rates = liou.rates().to_vec();
    let mut res = SteadyStateResult {
        rho,
        n_ph,
        i_pat: 0.0,
        truncation_report: TruncationReport {
            n_max: d - 1,
            top_population,
            rejected: Vec::new(),
        },
        residual,
        min_eigenvalue,
        rates,
    };
    res.i_pat = pat_current(&res, cfg);
    Ok(res)
}

/// Photo-assisted current `Σ_{l≠0} e·rate_l·Tr[A_l†A_l ρ]`, A.
pub fn pat_current(result: &SteadyStateResult, cfg: &SystemConfig) -> f64 {
    let d = result.rho.nrows();
    let fam = if cfg.n_max() + 1 == d {
        cfg.jumps.clone()
    } else {
        cfg.with_n_max(d - 1).expect("truncation already validated").jumps
    };
    let mut total = 0.0;
    for ((l, op), &(lr, rate)) in fam.iter().zip(&result.rates) {
        debug_assert_eq!(l, lr);
        if l == 0 || rate == 0.0 {
            continue;
        }
        // A_l†A_l is diagonal: weight of column n
        let mut tr = 0.0;
        for n in 0..d {
            tr += op.column(n).norm_squared() * result.rho[(n, n)].re;
        }
        total += rate * tr;
    }
    E_CHARGE * total
}

struct Blocks {
    d: usize,
    // indexed by k + d − 1
    diag: Vec<DMatrix<Complex64>>,
    upper: Vec<DMatrix<Complex64>>,
    lower: Vec<DMatrix<Complex64>>,
}

impl Blocks {
    fn size(&self, k: i64) -> usize {
        self.d - k.unsigned_abs() as usize
    }

    fn slot(&self, k: i64) -> usize {
        (k + self.d as i64 - 1) as usize
    }
}

fn split_blocks(liou: &Liouvillian, scale: f64) -> Result<Blocks> {
    let d = liou.fock_dim();
    let kmax = d as i64 - 1;
    let size = |k: i64| d - k.unsigned_abs() as usize;
    let nblk = 2 * d - 1;
    let mut diag = Vec::with_capacity(nblk);
    let mut upper = Vec::with_capacity(nblk);
    let mut lower = Vec::with_capacity(nblk);
    for k in -kmax..=kmax {
        diag.push(DMatrix::zeros(size(k), size(k)));
        upper.push(if k < kmax { DMatrix::zeros(size(k), size(k + 1)) } else { DMatrix::zeros(0, 0) });
        lower.push(if k > -kmax { DMatrix::zeros(size(k), size(k - 1)) } else { DMatrix::zeros(0, 0) });
    }
    let inv = 1.0 / scale;
    for (r, c, v) in liou.matrix().entries() {
        let (m, n) = (r % d, r / d);
        let (mp, np) = (c % d, c / d);
        let kr = m as i64 - n as i64;
        let kc = mp as i64 - np as i64;
        let (lr, lc) = (m.min(n), mp.min(np));
        let s = (kr + kmax) as usize;
        let v = v * inv;
        match kc - kr {
            0 => diag[s][(lr, lc)] += v,
            1 => upper[s][(lr, lc)] += v,
            -1 => lower[s][(lr, lc)] += v,
            _ => {
                return Err(Error::Singular(format!(
                    "generator couples coherence orders {kr} and {kc}; block elimination needs |Δk| ≤ 1"
                )))
            }
        }
    }
    Ok(Blocks { d, diag, upper, lower })
}

fn solve_block_tridiagonal(liou: &Liouvillian, scale: f64) -> Result<CMatrix> {
    let b = split_blocks(liou, scale)?;
    let d = b.d;
    let kmax = d as i64 - 1;
    let singular = |k: i64| Error::Singular(format!("coherence block k = {k}"));

    // x_k = S_k x_{k∓1}, eliminated from the outside in.
    let mut s_pos: Vec<DMatrix<Complex64>> = vec![DMatrix::zeros(0, 0); d];
    let mut s_neg: Vec<DMatrix<Complex64>> = vec![DMatrix::zeros(0, 0); d];
    for k in (1..=kmax).rev() {
        let i = b.slot(k);
        let mut m = b.diag[i].clone();
        if k < kmax {
            m += &b.upper[i] * &s_pos[(k + 1) as usize];
        }
        let rhs = -&b.lower[i];
        s_pos[k as usize] = m.lu().solve(&rhs).ok_or_else(|| singular(k))?;
        let i = b.slot(-k);
        let mut m = b.diag[i].clone();
        if k < kmax {
            m += &b.lower[i] * &s_neg[(k + 1) as usize];
        }
        let rhs = -&b.upper[i];
        s_neg[k as usize] = m.lu().solve(&rhs).ok_or_else(|| singular(-k))?;
    }

    let i0 = b.slot(0);
    let mut m0 = b.diag[i0].clone();
    if kmax >= 1 {
        m0 += &b.upper[i0] * &s_pos[1];
        m0 += &b.lower[i0] * &s_neg[1];
    }
    for j in 0..d {
        m0[(0, j)] = Complex64::new(1.0, 0.0);
    }
    let mut rhs = DVector::zeros(d);
    rhs[0] = Complex64::new(1.0, 0.0);
    let x0 = m0.lu().solve(&rhs).ok_or_else(|| singular(0))?;

    let mut rho = CMatrix::zeros(d, d);
    for n in 0..d {
        rho[(n, n)] = x0[n];
    }
    let mut prev = x0.clone();
    for k in 1..=kmax {
        let x = &s_pos[k as usize] * &prev;
        debug_assert_eq!(x.len(), b.size(k));
        for (j, v) in x.iter().enumerate() {
            rho[(j + k as usize, j)] = *v;
        }
        prev = x;
    }
    let mut prev = x0;
    for k in 1..=kmax {
        let x = &s_neg[k as usize] * &prev;
        for (j, v) in x.iter().enumerate() {
            rho[(j, j + k as usize)] = *v;
        }
        prev = x;
    }
    Ok(rho)
}
