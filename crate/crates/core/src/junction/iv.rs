//! Quasiparticle tunneling current and its tabulation.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use super::dos::DynesDos;
use crate::constants::{E_CHARGE, K_B};
use crate::error::{invalid, Error, Result};
use crate::interp::Pchip;
use crate::quad::{integrate, Tolerance};

/// Width of the Fermi window kept on either side, in units of k_B T.
const FERMI_WINDOW: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunnelJunction {
    pub dos_left: DynesDos,
    pub dos_right: DynesDos,
    pub r_tunnel: f64,
    pub temperature: f64,
}

/// Quadrature tolerances for the current integral.
///
/// The absolute tolerance is `abs_fraction * |V| / R_T`, in amperes. The
/// default keeps subgap currents, which are five orders of magnitude below
/// the ohmic scale, accurate to well under a percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentTolerance {
    pub abs_fraction: f64,
    pub rel: f64,
}

impl Default for CurrentTolerance {
    fn default() -> Self {
        Self {
            abs_fraction: 1e-9,
            rel: 1e-10,
        }
    }
}

impl TunnelJunction {
    pub fn new(dos_left: DynesDos, dos_right: DynesDos, r_tunnel: f64, temperature: f64) -> Result<Self> {
        if !(r_tunnel > 0.0) || !r_tunnel.is_finite() {
            return Err(invalid("r_tunnel", format!("must be positive, got {r_tunnel:e}")));
        }
        if !(temperature >= 0.0) || !temperature.is_finite() {
            return Err(invalid("temperature", format!("must be non-negative, got {temperature:e}")));
        }
        Ok(Self {
            dos_left,
            dos_right,
            r_tunnel,
            temperature,
        })
    }

    /// Two identical electrodes.
    pub fn symmetric(gap: f64, dynes: f64, r_tunnel: f64, temperature: f64) -> Result<Self> {
        let dos = DynesDos::new(gap, dynes)?;
        Self::new(dos, dos, r_tunnel, temperature)
    }

    pub fn with_resistance(&self, r_tunnel: f64) -> Result<Self> {
        Self::new(self.dos_left, self.dos_right, r_tunnel, self.temperature)
    }

    fn fermi(&self, energy: f64) -> f64 {
        if self.temperature == 0.0 {
            return if energy < 0.0 {
                1.0
            } else if energy > 0.0 {
                0.0
            } else {
                0.5
            };
        }
        let x = energy / (K_B * self.temperature);
        if x > 0.0 {
            let e = (-x).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + x.exp())
        }
    }

    /// Current through the junction at `bias` volts, with default tolerances.
    pub fn qp_current(&self, bias: f64) -> Result<f64> {
        self.qp_current_with(bias, CurrentTolerance::default())
    }

    pub fn qp_current_with(&self, bias: f64, tol: CurrentTolerance) -> Result<f64> {
        if bias == 0.0 {
            return Ok(0.0);
        }
        let ev = E_CHARGE * bias;
        let margin = FERMI_WINDOW * K_B * self.temperature;
        let lo = (-ev).min(0.0) - margin;
        let hi = (-ev).max(0.0) + margin;
        let dl = self.dos_left.gap();
        let dr = self.dos_right.gap();
        // breakpoints with the gap edges sitting on them: (energy, left edge, right edge)
        let mut pts: Vec<(f64, Option<f64>, Option<f64>)> = vec![(lo, None, None), (hi, None, None)];
        for (p, l, r) in [
            (-dl, Some(-1.0), None),
            (dl, Some(1.0), None),
            (-ev - dr, None, Some(-1.0)),
            (-ev + dr, None, Some(1.0)),
            (0.0, None, None),
            (-ev, None, None),
        ] {
            if p > lo && p < hi {
                pts.push((p, l, r));
            }
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, Option<f64>, Option<f64>)> = Vec::with_capacity(pts.len());
        for p in pts {
            match merged.last_mut() {
                Some(last) if last.0 == p.0 => {
                    last.1 = last.1.or(p.1);
                    last.2 = last.2.or(p.2);
                }
                _ => merged.push(p),
            }
        }
        // integral is in joules; I = integral / (e R_T)
        let scale = E_CHARGE * self.r_tunnel;
        let abs = tol.abs_fraction * bias.abs() / self.r_tunnel * scale;
        let halves = 2 * merged.len().saturating_sub(1).max(1);
        let half_tol = Tolerance::new(abs / halves as f64, tol.rel);
        let mut total = 0.0;
        for w in merged.windows(2) {
            let mid = 0.5 * (w[0].0 + w[1].0);
            // each half is integrated in the distance from its outer end, so
            // an edge on that end is evaluated from the exact offset
            for (anchor, dir, width) in [(w[0], 1.0, mid - w[0].0), (w[1], -1.0, w[1].0 - mid)] {
                let (p, left_edge, right_edge) = anchor;
                let integrand = |y: f64| {
                    let e = p + dir * y;
                    let occ = self.fermi(e) - self.fermi(e + ev);
                    if occ == 0.0 {
                        return 0.0;
                    }
                    let left = match left_edge {
                        Some(s) => self.dos_left.value_near_edge(s, dir * y),
                        None => self.dos_left.value(e),
                    };
                    let right = match right_edge {
                        Some(s) => self.dos_right.value_near_edge(s, dir * y),
                        None => self.dos_right.value(e + ev),
                    };
                    left * right * occ
                };
                let est = integrate(&integrand, 0.0, width, half_tol).map_err(|err| match err {
                    Error::Quadrature { lo, hi, achieved, target } => Error::Quadrature {
                        lo: p + dir * lo,
                        hi: p + dir * hi,
                        achieved: achieved / scale,
                        target: target / scale,
                    },
                    other => other,
                })?;
                total += est.value;
            }
        }
        Ok(total / scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Direct,
    KramersKronig,
}

impl CurveKind {
    pub fn name(&self) -> &'static str {
        match self {
            CurveKind::Direct => "direct",
            CurveKind::KramersKronig => "kramers_kronig",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "direct" => Some(CurveKind::Direct),
            "kramers_kronig" => Some(CurveKind::KramersKronig),
            _ => None,
        }
    }
}

/// Tabulated current-voltage characteristic with a monotone cubic interpolant.
#[derive(Debug, Clone)]
pub struct IvCurve {
    kind: CurveKind,
    interp: Pchip,
}

impl IvCurve {
    pub fn new(voltages: Vec<f64>, currents: Vec<f64>, kind: CurveKind) -> Result<Self> {
        if voltages.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("voltages", "must be strictly increasing"));
        }
        Ok(Self {
            kind,
            interp: Pchip::new(voltages, currents)?,
        })
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn voltages(&self) -> &[f64] {
        self.interp.xs()
    }

    pub fn currents(&self) -> &[f64] {
        self.interp.ys()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.interp.lo(), self.interp.hi())
    }

    /// Interpolated current; voltages outside the tabulation are an error.
    pub fn eval(&self, voltage: f64) -> Result<f64> {
        let (lo, hi) = self.span();
        if !(voltage >= lo && voltage <= hi) {
            return Err(Error::OutOfSpan { voltage, lo, hi });
        }
        Ok(self.interp.eval(voltage))
    }

    /// Same curve with every current multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let ys = self.currents().iter().map(|i| i * factor).collect();
        Self {
            kind: self.kind,
            interp: Pchip::new(self.voltages().to_vec(), ys).expect("nodes already validated"),
        }
    }

    /// Writes the curve as tab-separated `volts  amperes` rows under a
    /// `#` header carrying the junction parameters.
    pub fn write_text<W: Write>(&self, junction: &TunnelJunction, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# kind={} gap_eV={:.9e} dynes_eV={:.9e} r_tunnel_ohm={:.9e} temperature_K={:.9e}",
            self.kind.name(),
            junction.dos_left.gap() / E_CHARGE,
            junction.dos_left.dynes() / E_CHARGE,
            junction.r_tunnel,
            junction.temperature
        )?;
        writeln!(out, "# voltage_V\tcurrent_A")?;
        for (v, i) in self.voltages().iter().zip(self.currents()) {
            writeln!(out, "{v:.12e}\t{i:.12e}")?;
        }
        Ok(())
    }

    /// Reads a curve written by [`IvCurve::write_text`]. The header must name the kind.
    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut kind = None;
        let mut vs = Vec::new();
        let mut is = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                for tok in header.split_whitespace() {
                    if let Some(k) = tok.strip_prefix("kind=") {
                        kind = Some(CurveKind::parse(k).ok_or_else(|| Error::Parse {
                            line: idx + 1,
                            reason: format!("unknown curve kind `{k}`"),
                        })?);
                    }
                }
                continue;
            }
            let mut cols = line.split(['\t', ',', ' ']).filter(|s| !s.is_empty());
            let mut next = || -> Result<f64> {
                cols.next()
                    .ok_or_else(|| Error::Parse {
                        line: idx + 1,
                        reason: "expected two columns".into(),
                    })?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse {
                        line: idx + 1,
                        reason: e.to_string(),
                    })
            };
            vs.push(next()?);
            is.push(next()?);
        }
        let kind = kind.ok_or_else(|| Error::Parse {
            line: 1,
            reason: "missing `kind=` header".into(),
        })?;
        Self::new(vs, is, kind)
    }
}

/// Voltage grid for tabulating a junction: a fine section near the gap
/// features and a coarse extension into the ohmic tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TabulationGrid {
    pub fine_max: f64,
    pub fine_step: f64,
    pub coarse_max: f64,
    pub coarse_step: f64,
}

impl Default for TabulationGrid {
    fn default() -> Self {
        Self {
            fine_max: 2e-3,
            fine_step: 0.5e-6,
            coarse_max: 10e-3,
            coarse_step: 10e-6,
        }
    }
}

impl TabulationGrid {
    /// Non-negative grid points, starting at zero.
    pub fn positive_points(&self) -> Result<Vec<f64>> {
        if !(self.fine_step > 0.0) || !(self.fine_max > 0.0) {
            return Err(invalid("fine_step", "grid steps and limits must be positive"));
        }
        let n_fine = (self.fine_max / self.fine_step).round() as usize;
        let mut pts: Vec<f64> = (0..=n_fine).map(|k| k as f64 * self.fine_step).collect();
        if self.coarse_max > self.fine_max {
            if !(self.coarse_step > 0.0) {
                return Err(invalid("coarse_step", "must be positive"));
            }
            let start = pts[n_fine];
            let n_coarse = ((self.coarse_max - start) / self.coarse_step).round() as usize;
            pts.extend((1..=n_coarse).map(|k| start + k as f64 * self.coarse_step));
        }
        Ok(pts)
    }
}

/// Tabulates the junction current on `grid`, mirrored to negative bias as an odd function.
pub fn tabulate(junction: &TunnelJunction, grid: &TabulationGrid, tol: CurrentTolerance) -> Result<IvCurve> {
    let pos = grid.positive_points()?;
    let currents: Vec<f64> = pos
        .par_iter()
        .map(|&v| junction.qp_current_with(v, tol))
        .collect::<Result<_>>()?;
    let (vs, is) = mirror_odd(&pos, &currents);
    IvCurve::new(vs, is, CurveKind::Direct)
}

/// Extends data given on `[0, X]` (first point at zero) to `[-X, X]` as an odd function.
pub(crate) fn mirror_odd(pos: &[f64], vals: &[f64]) -> (Vec<f64>, Vec<f64>) {
    mirror(pos, vals, -1.0)
}


fn mirror(pos: &[f64], vals: &[f64], parity: f64) -> (Vec<f64>, Vec<f64>) {
    let n = pos.len();
    let mut vs = Vec::with_capacity(2 * n - 1);
    let mut is = Vec::with_capacity(2 * n - 1);
    for k in (1..n).rev() {
        vs.push(-pos[k]);
        is.push(parity * vals[k]);
    }
    vs.extend_from_slice(pos);
    is.extend_from_slice(vals);
    (vs, is)
}

/// Tunnel resistance corrected for the dynamical Coulomb blockade of the
/// higher resonator modes: `r_measured * exp(sum lambda_n^2)`.
pub fn renormalized_resistance(r_measured: f64, higher_mode_couplings: &[f64]) -> Result<f64> {
    if !(r_measured > 0.0) {
        return Err(invalid("r_measured", "must be positive"));
    }
    if let Some(l) = higher_mode_couplings.iter().find(|l| !(**l >= 0.0)) {
        return Err(invalid("higher_mode_couplings", format!("coupling {l} is negative")));
    }
    let sum: f64 = higher_mode_couplings.iter().map(|l| l * l).sum();
    Ok(r_measured * sum.exp())
}
