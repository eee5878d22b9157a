//! Liouvillian superoperator in compressed sparse row form.
//!
//! Density matrices are vectorized column-major: `ρ[m, n]` sits at `m + n·d`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{build_hamiltonian, SystemConfig};
use crate::error::Result;
use crate::fock::{annihilation, CMatrix};

#[derive(Debug, Clone)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl Csr {
    /// Assembles from unsorted triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, Complex64)>) -> Self {
        triplets.sort_unstable_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn apply_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yi = acc;
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.n).flat_map(move |i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.cols[k], self.vals[k])))
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.entries() {
            m[(i, j)] += v;
        }
        m
    }
}

/// The assembled generator together with what is needed to read observables.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    fock_dim: usize,
    matrix: Csr,
    rates: Vec<(i64, f64)>,
}

impl Liouvillian {
    pub fn build(cfg: &SystemConfig) -> Result<Self> {
        let d = cfg.jumps.truncation().dim();
        let h = build_hamiltonian(cfg)?;
        let rates = cfg.junction_rates()?;
        let a = annihilation(d);

        let mut channels: Vec<(f64, CMatrix)> = Vec::new();
        for (l, op) in cfg.jumps.iter() {
            let rate = rates[(l + cfg.jumps.l_max() as i64) as usize].1;
            if rate > 0.0 {
                channels.push((rate, op.clone()));
            }
        }
        let n_th = cfg.env.thermal_occupation;
        channels.push((cfg.env.kappa_env * (1.0 + n_th), a.clone()));
        if n_th > 0.0 {
            channels.push((cfg.env.kappa_env * n_th, a.adjoint()));
        }

        let zero = Complex64::new(0.0, 0.0);
        let nonzeros: Vec<Vec<(usize, usize, Complex64)>> = channels
            .iter()
            .map(|(_, f)| {
                (0..d)
                    .flat_map(|i| (0..d).map(move |j| (i, j)))
                    .filter_map(|(i, j)| {
                        let v = f[(i, j)];
                        (v != zero).then_some((i, j, v))
                    })
                    .collect()
            })
            .collect();

        // L(ρ) = Kρ + ρK† + Σ γ FρF†, K = −iH − ½ Σ γ F†F
        let mut k = &h * Complex64::new(0.0, -1.0);
        for ((g, _), nz) in channels.iter().zip(&nonzeros) {
            for &(i, j, v) in nz {
                for &(i2, j2, v2) in nz {
                    if i2 == i {
                        k[(j, j2)] -= v.conj() * v2 * (0.5 * g);
                    }
                }
            }
        }

        let idx = |m: usize, n: usize| m + n * d;
        let mut trip = Vec::new();
        for m in 0..d {
            for mp in 0..d {
                let v = k[(m, mp)];
                if v != zero {
                    for n in 0..d {
                        trip.push((idx(m, n), idx(mp, n), v));
                    }
                }
                let vc = k[(m, mp)].conj();
                if vc != zero {
                    for row in 0..d {
                        // (ρK†)[row, m] gets ρ[row, mp] K†[mp, m] = ρ[row, mp] conj(K[m, mp])
                        trip.push((idx(row, m), idx(row, mp), vc));
                    }
                }
            }
        }
        for ((g, _), nz) in channels.iter().zip(&nonzeros) {
            for &(m, mp, fv) in nz {
                for &(n, np, gv) in nz {
                    trip.push((idx(m, n), idx(mp, np), fv * gv.conj() * *g));
                }
            }
        }
        Ok(Self {
            fock_dim: d,
            matrix: Csr::from_triplets(d * d, trip),
            rates,
        })
    }

    pub fn fock_dim(&self) -> usize {
        self.fock_dim
    }

    /// Superoperator dimension `d²`.
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &Csr {
        &self.matrix
    }

    pub fn rates(&self) -> &[(i64, f64)] {
        &self.rates
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        self.matrix.to_dense()
    }

    /// `L(ρ)` as a matrix.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let d = self.fock_dim;
        let x: Vec<Complex64> = rho.as_slice().to_vec();
        let mut y = vec![Complex64::new(0.0, 0.0); d * d];
        self.matrix.apply_into(&x, &mut y);
        CMatrix::from_vec(d, d, y)
    }

    /// Adjoint action `L†(X)`; maps the identity to zero for a trace-preserving generator.
    pub fn apply_adjoint(&self, x: &CMatrix) -> CMatrix {
        let d = self.fock_dim;
        let xv = DVector::from_column_slice(x.as_slice());
        let mut y = DVector::zeros(d * d);
        for (i, j, v) in self.matrix.entries() {
            y[j] += v.conj() * xv[i];
        }
        CMatrix::from_vec(d, d, y.as_slice().to_vec())
    }
}
