//! Principal-value Hilbert transform on a tabulated grid.
//!
//! Convention: `H[f](y) = (1/pi) PV ∫ f(x) / (y - x) dx`, so that
//! `H[1/(1+x^2)] = x/(1+x^2)` and `H(H(f)) = -f`.
//!
//! The affine part of the data (the straight line through the two end
//! points) is removed first and contributes nothing: its transform is a
//! divergent constant plus zero, and a constant offset in the transformed
//! current only shifts the resonator energy uniformly. The remainder
//! vanishes at both ends, which keeps the truncation of the integral at the
//! tabulation edges benign. The singular kernel is handled by subtracting
//! `r(y)` and adding its exact principal-value integral.

use rayon::prelude::*;

use super::iv::{CurveKind, IvCurve};
use crate::error::{invalid, Error, Result};

/// Transform of `(xs, ys)` evaluated at the interior nodes `targets`.
pub fn hilbert_on_grid(xs: &[f64], ys: &[f64], targets: &[usize]) -> Result<Vec<f64>> {
    let n = xs.len();
    if n != ys.len() {
        return Err(invalid("ys", "length differs from xs"));
    }
    if n < 3 {
        return Err(invalid("xs", "need at least three nodes"));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("xs", "must be strictly increasing"));
    }
    if let Some(&t) = targets.iter().find(|&&t| t == 0 || t >= n - 1) {
        return Err(invalid("targets", format!("index {t} is not an interior node")));
    }
    let (x0, xn) = (xs[0], xs[n - 1]);
    let slope = (ys[n - 1] - ys[0]) / (xn - x0);
    let offset = 0.5 * (ys[0] + ys[n - 1]) - slope * 0.5 * (x0 + xn);
    let r: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| y - (slope * x + offset)).collect();

    let out = targets
        .par_iter()
        .map(|&i| {
            let yi = xs[i];
            let ri = r[i];
            let diag = -(r[i + 1] - r[i - 1]) / (xs[i + 1] - xs[i - 1]);
            let q = |j: usize| {
                if j == i {
                    diag
                } else {
                    (r[j] - ri) / (yi - xs[j])
                }
            };
            let mut acc = 0.0;
            let mut prev = q(0);
            for j in 1..n {
                let cur = q(j);
                acc += 0.5 * (prev + cur) * (xs[j] - xs[j - 1]);
                prev = cur;
            }
            acc += ri * ((yi - x0) / (xn - yi)).ln();
            acc / std::f64::consts::PI
        })
        .collect();
    Ok(out)
}

/// Kramers-Kronig companion of a direct I(V) curve on `|V| <= roi`.
///
/// The input must be tabulated over at least `[-5 roi, 5 roi]`.
pub fn kk_transform(curve: &IvCurve, roi: f64) -> Result<IvCurve> {
    if curve.kind() != CurveKind::Direct {
        return Err(Error::WrongCurveKind {
            expected: CurveKind::Direct.name(),
            found: curve.kind().name(),
        });
    }
    if !(roi > 0.0) {
        return Err(invalid("roi", "must be positive"));
    }
    let (lo, hi) = curve.span();
    let actual = (-lo).min(hi);
    let required = 5.0 * roi;
    if actual < required * (1.0 - 1e-12) {
        return Err(Error::InsufficientSpan { required, actual });
    }
    let xs = curve.voltages();
    let targets: Vec<usize> = (1..xs.len() - 1).filter(|&i| xs[i].abs() <= roi * (1.0 + 1e-12)).collect();
    let values = hilbert_on_grid(xs, curve.currents(), &targets)?;
    let vs = targets.iter().map(|&i| xs[i]).collect();
    IvCurve::new(vs, values, CurveKind::KramersKronig)
}
