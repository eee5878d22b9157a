//! Distributed high-impedance resonator: kinetic sheet inductance, mode
//! frequencies of a shorted line loaded by the junction capacitance, mode
//! impedances, couplings and the external coupling rate.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;

use crate::constants::{E_CHARGE, HBAR, R_K};
use crate::error::{invalid, Error, Result};
use crate::solve::{brent_min, brent_root};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilmProperties {
    /// Ω per square.
    pub sheet_resistance: f64,
    /// Superconducting gap of the film, J.
    pub gap: f64,
}

/// Low-temperature Mattis-Bardeen kinetic inductance `ħ R_sq / (π Δ)`, H per square.
pub fn sheet_inductance(film: &FilmProperties) -> Result<f64> {
    if !(film.sheet_resistance > 0.0) {
        return Err(invalid("sheet_resistance", "must be positive"));
    }
    if !(film.gap > 0.0) {
        return Err(invalid("gap", "must be positive"));
    }
    Ok(HBAR * film.sheet_resistance / (PI * film.gap))
}

/// Uniform lossless line shorted to ground at the waveguide end (through
/// `load_resistance`) and terminated by the junction capacitance at the other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineModel {
    pub length: f64,
    pub width: f64,
    pub sheet_inductance: f64,
    pub capacitance_per_length: f64,
    pub termination_capacitance: f64,
    pub load_resistance: f64,
}

impl LineModel {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("length", self.length),
            ("width", self.width),
            ("sheet_inductance", self.sheet_inductance),
            ("capacitance_per_length", self.capacitance_per_length),
        ];
        for (name, v) in checks {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("must be positive, got {v:e}")));
            }
        }
        if !(self.termination_capacitance >= 0.0) {
            return Err(invalid("termination_capacitance", "must be non-negative"));
        }
        if !(self.load_resistance >= 0.0) {
            return Err(invalid("load_resistance", "must be non-negative"));
        }
        if self.length / self.width < 10.0 {
            return Err(invalid("width", "line must be much longer than wide"));
        }
        Ok(())
    }

    pub fn inductance_per_length(&self) -> f64 {
        self.sheet_inductance / self.width
    }

    pub fn phase_velocity(&self) -> f64 {
        1.0 / (self.inductance_per_length() * self.capacitance_per_length).sqrt()
    }

    pub fn impedance(&self) -> f64 {
        (self.inductance_per_length() / self.capacitance_per_length).sqrt()
    }

    /// Electrical length θ = ωℓ/v at angular frequency `omega`.
    pub fn electrical_length(&self, omega: f64) -> f64 {
        omega * self.length / self.phase_velocity()
    }

    /// Angular frequency of the unloaded quarter-wave fundamental.
    pub fn quarter_wave_omega(&self) -> f64 {
        PI * self.phase_velocity() / (2.0 * self.length)
    }

    /// Total susceptance at the junction port with the far end shorted:
    /// `ωC_j − cot(θ)/Z0`.
    pub fn port_susceptance(&self, omega: f64) -> f64 {
        let theta = self.electrical_length(omega);
        omega * self.termination_capacitance - theta.cos() / (theta.sin() * self.impedance())
    }

    /// Analytic dB/dω.
    pub fn susceptance_slope(&self, omega: f64) -> f64 {
        let theta = self.electrical_length(omega);
        let s = theta.sin();
        self.termination_capacitance + self.length / (self.phase_velocity() * self.impedance() * s * s)
    }

    /// Port admittance with the far end terminated by `load_resistance`,
    /// at complex angular frequency (time dependence `exp(jωt)`).
    pub fn loaded_admittance(&self, omega: Complex64) -> Complex64 {
        let j = Complex64::i();
        let z0 = self.impedance();
        let theta = omega * (self.length / self.phase_velocity());
        let (c, s) = (theta.cos(), theta.sin());
        // ABCD of the line from the junction port towards the load
        let zl = Complex64::new(self.load_resistance, 0.0);
        let z_in = (c * zl + j * z0 * s) / (j * s / z0 * zl + c);
        j * omega * self.termination_capacitance + 1.0 / z_in
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeData {
    pub index: usize,
    /// ω_n / 2π, Hz.
    pub frequency: f64,
    /// Ω.
    pub characteristic_impedance: f64,
    pub coupling: f64,
    /// κ_c / 2π, Hz.
    pub coupling_rate: f64,
}

impl ModeData {
    pub fn omega(&self) -> f64 {
        2.0 * PI * self.frequency
    }

    /// κ_c in s⁻¹.
    pub fn kappa_c(&self) -> f64 {
        2.0 * PI * self.coupling_rate
    }
}

/// λ = √(π Z / R_K).
pub fn coupling_from_impedance(impedance: f64) -> f64 {
    (PI * impedance / R_K).sqrt()
}

/// Resonance angular frequencies, one per branch of the cotangent.
///
/// Between consecutive poles θ = kπ the port susceptance rises
/// monotonically from −∞ to +∞, so each branch brackets exactly one mode.
pub fn mode_omegas(line: &LineModel, n_modes: usize) -> Result<Vec<f64>> {
    line.validate()?;
    if n_modes == 0 {
        return Err(invalid("n_modes", "must be at least 1"));
    }
    let scale = line.length / line.phase_velocity();
    let z0 = line.impedance();
    let g = |theta: f64| z0 * line.port_susceptance(theta / scale);
    (0..n_modes)
        .map(|k| {
            let eps = 1e-12;
            let lo = k as f64 * PI + eps;
            let hi = (k + 1) as f64 * PI - eps;
            let theta = brent_root(g, lo, hi, 1e-15, 200)?;
            Ok(theta / scale)
        })
        .collect()
}

/// Lowest `n_modes` modes with impedance, coupling and external coupling rate.
pub fn find_modes(line: &LineModel, n_modes: usize) -> Result<Vec<ModeData>> {
    let omegas = mode_omegas(line, n_modes)?;
    omegas
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            let (z, lambda) = mode_impedance_and_lambda(line, w / (2.0 * PI))?;
            let kappa = if line.load_resistance > 0.0 {
                complex_resonance_kappa(line, w)?
            } else {
                0.0
            };
            Ok(ModeData {
                index: k + 1,
                frequency: w / (2.0 * PI),
                characteristic_impedance: z,
                coupling: lambda,
                coupling_rate: kappa / (2.0 * PI),
            })
        })
        .collect()
}

/// Foster-equivalent impedance from a susceptance function: `C_n = ½ dB/dω`,
/// `Z = 1/(ω C_n)`. The derivative is a central difference with relative step `rel_step`.
pub fn foster_impedance<B: Fn(f64) -> f64>(susceptance: B, omega: f64, rel_step: f64) -> f64 {
    let h = omega * rel_step;
    let slope = (susceptance(omega + h) - susceptance(omega - h)) / (2.0 * h);
    2.0 / (omega * slope)
}

/// Mode impedance and coupling λ at a resonance `frequency` (Hz) of the line.
pub fn mode_impedance_and_lambda(line: &LineModel, frequency: f64) -> Result<(f64, f64)> {
    line.validate()?;
    let omega = 2.0 * PI * frequency;
    let residual = line.port_susceptance(omega) / line.susceptance_slope(omega) / omega;
    if !(residual.abs() < 1e-6) {
        return Err(Error::NotAResonance { frequency, residual });
    }
    let c_n = 0.5 * line.susceptance_slope(omega);
    let z = 1.0 / (omega * c_n);
    Ok((z, coupling_from_impedance(z)))
}

/// Complex root of the loaded port admittance near the lossless mode `omega`;
/// returns κ = 2 Im ω (energy decay rate under `exp(jωt)`).
fn complex_resonance_kappa(line: &LineModel, omega: f64) -> Result<f64> {
    let z0 = line.impedance();
    if line.load_resistance >= z0 {
        return Err(Error::NonPerturbativeLoad {
            r_load: line.load_resistance,
            z0,
        });
    }
    let f = |w: Complex64| line.loaded_admittance(w) * z0;
    let mut w = Complex64::new(omega, 0.0);
    for _ in 0..100 {
        let h = omega * 1e-7;
        let d = (f(w + h) - f(w - h)) / (2.0 * h);
        let step = f(w) / d;
        w -= step;
        if step.norm() < 1e-14 * omega {
            return Ok(2.0 * w.im);
        }
    }
    Err(Error::RootNotFound {
        lo: omega,
        hi: omega,
        iterations: 100,
        residual: f(w).norm(),
    })
}

/// External coupling rate κ_c (s⁻¹) of `mode` through the load resistance.
pub fn coupling_rate(line: &LineModel, mode: &ModeData) -> Result<f64> {
    line.validate()?;
    if line.load_resistance == 0.0 {
        return Ok(0.0);
    }
    complex_resonance_kappa(line, mode.omega())
}

/// Closed-form quarter-wave estimate `Q_ext = (π/4) Z0 / R_load`.
pub fn quarter_wave_external_q(line: &LineModel) -> f64 {
    PI / 4.0 * line.impedance() / line.load_resistance
}

/// Tunnel resistance at which the gap-edge PAT rate equals κ_c:
/// `2Δ λ² exp(−λ²) / (e² κ_c)`, with `kappa_c` in s⁻¹ and `gap` in J.
pub fn matching_resistance(coupling: f64, kappa_c: f64, gap: f64) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(invalid("gap", "must be positive"));
    }
    if !(kappa_c > 0.0) {
        return Err(invalid("kappa_c", "must be positive"));
    }
    let l2 = coupling * coupling;
    Ok(2.0 * gap * l2 * (-l2).exp() / (E_CHARGE * E_CHARGE * kappa_c))
}

/// Junction capacitance for which the first modes best match `targets` (Hz),
/// in the relative least-squares sense. Searched in `[c_lo, c_hi]`.
pub fn refit_junction_capacitance(line: &LineModel, targets: &[f64], c_lo: f64, c_hi: f64) -> Result<f64> {
    if targets.is_empty() {
        return Err(invalid("targets", "need at least one target frequency"));
    }
    let cost = |c: f64| {
        let trial = LineModel {
            termination_capacitance: c,
            ..*line
        };
        match mode_omegas(&trial, targets.len()) {
            Ok(ws) => ws
                .iter()
                .zip(targets)
                .map(|(w, t)| (w / (2.0 * PI) / t - 1.0).powi(2))
                .sum(),
            Err(_) => f64::INFINITY,
        }
    };
    let (c, _) = brent_min(cost, c_lo, c_hi, 1e-20, 500)?;
    Ok(c)
}

/// Mode table: index, frequency in GHz, impedance in kΩ, λ, κ_c/2π in MHz.
pub fn write_mode_table<W: Write>(modes: &[ModeData], mut out: W) -> Result<()> {
    writeln!(out, "# mode\tfrequency_GHz\timpedance_kOhm\tlambda\tkappa_c_MHz")?;
    for m in modes {
        writeln!(
            out,
            "{}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}",
            m.index,
            m.frequency * 1e-9,
            m.characteristic_impedance * 1e-3,
            m.coupling,
            m.coupling_rate * 1e-6
        )?;
    }
    Ok(())
}
