//! Multiphoton jump operators of the displaced-charge tunneling coupling on
//! a truncated Fock space.
//!
//! `A_l` collects the matrix elements of the displacement `exp(iλ(a + a†))`
//! that change the photon number by `l`. For `l ≥ 0`,
//! `⟨n+l|A_l|n⟩ = sqrt(n!/(n+l)!) (iλ)^l exp(−λ²/2) L_n^(l)(λ²)`, and
//! `A_{−l} = (−1)^l A_l†`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Generalized Laguerre polynomial `L_n^(l)(x)` by the three-term recurrence.
pub fn laguerre(n: usize, l: usize, x: f64) -> f64 {
    let a = l as f64;
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + a - x;
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 + a - x) * cur - (k + a) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `⟨n+l|A_l|n⟩` for `l ≥ 0`.
pub fn jump_matrix_element(coupling: f64, n: usize, l: usize) -> Complex64 {
    let x = coupling * coupling;
    let lag = laguerre(n, l, x);
    if l == 0 {
        return Complex64::new((-0.5 * x).exp() * lag, 0.0);
    }
    if coupling == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    // ln sqrt(n!/(n+l)!) + l ln|λ| − λ²/2
    let log_ratio: f64 = -0.5 * ((n + 1)..=(n + l)).map(|k| (k as f64).ln()).sum::<f64>();
    let magnitude = (log_ratio + l as f64 * coupling.abs().ln() - 0.5 * x).exp() * lag;
    let sign = if coupling < 0.0 && l % 2 == 1 { -1.0 } else { 1.0 };
    // i^l
    let phase = match l % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    };
    phase * (sign * magnitude)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockTruncation {
    n_max: usize,
}

impl FockTruncation {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(invalid("n_max", "must be at least 1"));
        }
        Ok(Self { n_max })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.n_max + 1
    }
}

/// All jump operators `A_l`, `|l| ≤ n_max`, for one coupling and truncation.
#[derive(Debug, Clone)]
pub struct JumpFamily {
    coupling: f64,
    truncation: FockTruncation,
    // index l + n_max
    operators: Vec<CMatrix>,
}

impl JumpFamily {
    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn truncation(&self) -> FockTruncation {
        self.truncation
    }

    pub fn l_max(&self) -> usize {
        self.truncation.n_max
    }

    pub fn get(&self, l: i64) -> &CMatrix {
        let idx = l + self.l_max() as i64;
        assert!(
            idx >= 0 && (idx as usize) < self.operators.len(),
            "photon number change {l} outside ±{}",
            self.l_max()
        );
        &self.operators[idx as usize]
    }

    /// `(l, A_l)` pairs for l from −l_max to l_max.
    pub fn iter(&self) -> impl Iterator<Item = (i64, &CMatrix)> {
        let lm = self.l_max() as i64;
        self.operators.iter().enumerate().map(move |(k, a)| (k as i64 - lm, a))
    }

    /// `Σ_l A_l`, the truncated displacement operator assembled from the family.
    pub fn displacement(&self) -> CMatrix {
        let d = self.truncation.dim();
        self.operators.iter().fold(CMatrix::zeros(d, d), |acc, a| acc + a)
    }

    /// `1 − Σ_l ⟨n|A_l†A_l|n⟩` for each Fock state: probability weight that the
    /// displacement moves out of the truncated space.
    pub fn completeness_defect(&self) -> Vec<f64> {
        let d = self.truncation.dim();
        (0..d)
            .map(|n| {
                let kept: f64 = self.operators.iter().map(|a| a.column(n).norm_squared()).sum();
                1.0 - kept
            })
            .collect()
    }
}

pub fn build_jump_family(coupling: f64, truncation: FockTruncation) -> Result<JumpFamily> {
    if !coupling.is_finite() {
        return Err(invalid("coupling", "must be finite"));
    }
    let n_max = truncation.n_max;
    let d = truncation.dim();
    let mut positive = Vec::with_capacity(n_max + 1);
    for l in 0..=n_max {
        let mut a = CMatrix::zeros(d, d);
        for n in 0..d - l {
            a[(n + l, n)] = jump_matrix_element(coupling, n, l);
        }
        positive.push(a);
    }
    let mut operators = Vec::with_capacity(2 * n_max + 1);
    for l in (1..=n_max).rev() {
        let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
        operators.push(positive[l].adjoint() * Complex64::new(sign, 0.0));
    }
    operators.extend(positive);
    Ok(JumpFamily {
        coupling,
        truncation,
        operators,
    })
}

/// Annihilation operator on `dim` Fock states.
pub fn annihilation(dim: usize) -> CMatrix {
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Number operator on `dim` Fock states.
pub fn number(dim: usize) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_fn(dim, |n, _| Complex64::new(n as f64, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn binomial(n: usize, k: usize) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    fn laguerre_series(n: usize, l: usize, x: f64) -> f64 {
        (0..=n)
            .map(|i| {
                let fact: f64 = (1..=i).map(|k| k as f64).product();
                (-1f64).powi(i as i32) * binomial(n + l, n - i) * x.powi(i as i32) / fact
            })
            .sum()
    }

    /// exp(iλ(a + a†)) in a large space, by the matrix exponential.
    fn displacement_oracle(coupling: f64, dim: usize) -> CMatrix {
        let a = annihilation(dim);
        let x = &a + a.adjoint();
        (x * Complex64::new(0.0, coupling)).exp()
    }

    #[test]
    fn laguerre_low_orders() {
        for (l, x) in [(0, 0.3), (3, 2.0), (7, 11.0)] {
            assert_eq!(laguerre(0, l, x), 1.0);
        }
        assert_relative_eq!(laguerre(1, 0, 0.4), 0.6, max_relative = 1e-15);
        let x = 0.6241;
        assert_relative_eq!(laguerre(3, 2, x), laguerre_series(3, 2, x), max_relative = 1e-12);
        assert_relative_eq!(laguerre(9, 4, 3.3), laguerre_series(9, 4, 3.3), max_relative = 1e-11);
    }

    #[test]
    fn franck_condon_element() {
        let lam: f64 = 0.79;
        let e = jump_matrix_element(lam, 0, 1);
        assert_relative_eq!(e.re, 0.0);
        assert_relative_eq!(e.im, lam * (-0.5 * lam * lam).exp(), max_relative = 1e-14);
        assert_relative_eq!(e.norm_sqr(), lam * lam * (-lam * lam).exp(), max_relative = 1e-14);
    }

    #[test]
    fn uncoupled_is_identity() {
        let fam = build_jump_family(0.0, FockTruncation::new(6).unwrap()).unwrap();
        for (l, a) in fam.iter() {
            if l == 0 {
                assert_eq!(a, &CMatrix::identity(7, 7));
            } else {
                assert!(a.iter().all(|z| z.norm() == 0.0));
            }
        }
    }

    #[test]
    fn matches_matrix_exponential() {
        let lam = 0.79;
        let big = displacement_oracle(lam, 90);
        let e = jump_matrix_element(lam, 2, 0);
        assert_relative_eq!(e.re, (-0.5 * lam * lam).exp() * laguerre(2, 0, lam * lam), max_relative = 1e-15);
        assert!((e - big[(2, 2)]).norm() < 1e-10);
        for n in 0..12 {
            for l in 0..12 {
                assert!((jump_matrix_element(lam, n, l) - big[(n + l, n)]).norm() < 1e-10, "n={n} l={l}");
            }
        }
    }

    #[test]
    fn two_level_block_of_a1() {
        let lam = 0.79;
        let fam = build_jump_family(lam, FockTruncation::new(12).unwrap()).unwrap();
        let a1 = fam.get(1);
        assert_eq!(a1[(1, 0)], jump_matrix_element(lam, 0, 1));
        assert_eq!(a1[(2, 1)], jump_matrix_element(lam, 1, 1));
        assert_eq!(a1[(0, 1)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn conjugation_rule_is_exact() {
        let fam = build_jump_family(1.1, FockTruncation::new(9).unwrap()).unwrap();
        for l in 1..=9i64 {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            let expected = fam.get(l).adjoint() * Complex64::new(sign, 0.0);
            assert_eq!(fam.get(-l), &expected);
        }
    }

    /// States whose displacement leaks less than `tol` beyond `n_max`,
    /// measured on the exponentiated matrix in a much larger space.
    fn safe_states(coupling: f64, n_max: usize, tol: f64) -> Vec<usize> {
        let big = displacement_oracle(coupling, n_max + 80);
        (0..=n_max)
            .filter(|&n| ((n_max + 1)..big.nrows()).map(|m| big[(m, n)].norm_sqr()).sum::<f64>() < tol)
            .collect()
    }

    #[test]
    fn completeness_on_safe_subspace() {
        for lam in [0.1, 0.79, 1.5] {
            let n_max = 30;
            let fam = build_jump_family(lam, FockTruncation::new(n_max).unwrap()).unwrap();
            let safe = safe_states(lam, n_max, 1e-10);
            assert!(safe.len() >= 5, "λ = {lam}: only {} safe states", safe.len());
            let defect = fam.completeness_defect();
            for &n in &safe {
                assert!(defect[n].abs() < 1e-8, "λ = {lam}, n = {n}: {}", defect[n]);
            }
            let d = fam.displacement();
            let big = displacement_oracle(lam, n_max + 80);
            for &n in &safe {
                for m in 0..=n_max {
                    assert!((d[(m, n)] - big[(m, n)]).norm() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn truncation_leaks_from_high_states() {
        // with n_max = 12 the upper states are not complete at λ = 0.79
        let fam = build_jump_family(0.79, FockTruncation::new(12).unwrap()).unwrap();
        let defect = fam.completeness_defect();
        assert!(defect[0] < 1e-8);
        assert!(defect[9] > 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn diagonal_blocks_hermitian_products(lam in 0.0f64..1.6, n_max in 1usize..14) {
            let fam = build_jump_family(lam, FockTruncation::new(n_max).unwrap()).unwrap();
            for (_, a) in fam.iter() {
                let p = a.adjoint() * a;
                for i in 0..p.nrows() {
                    for j in 0..p.ncols() {
                        if i != j {
                            prop_assert!(p[(i, j)].norm() == 0.0);
                        }
                    }
                }
            }
            let defect = fam.completeness_defect();
            prop_assert!(defect.iter().all(|d| *d > -1e-12));
        }
    }
}
