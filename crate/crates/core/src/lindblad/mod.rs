//! Driven-dissipative master equation of the resonator mode coupled to the
//! biased junction: Hamiltonian, Liouvillian, steady state, photo-assisted
//! current and time evolution.
//!
//! Frequencies and rates are angular (s⁻¹) with ħ = 1 inside the operators.
//! The junction emits or absorbs `l` photons per tunneling event with rate
//! `I(V − lħω/e)/e` and operator `A_l`; the resonator decays into its
//! environment at `kappa_env = κ_c + κ_i`.

mod evolve;
mod steady;
mod superop;

use std::sync::Arc;

pub use evolve::{time_evolve, time_evolve_with, trace_distance, EvolveOptions};
pub use steady::{
    pat_current, steady_state, steady_state_at, steady_state_dense, SteadyStateResult, TruncationReport,
    TRUNCATION_POPULATION, TRUNCATION_STEP,
};
pub use superop::{Csr, Liouvillian};

use num_complex::Complex64;

use crate::constants::{E_CHARGE, PLANCK};
use crate::error::{invalid, Result};
use crate::fock::{annihilation, build_jump_family, CMatrix, FockTruncation, JumpFamily};
use crate::junction::JunctionModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveParams {
    /// Drive amplitude η, s⁻¹; `η² = φ κ_c`.
    pub eta: f64,
    /// Drive detuning δ, rad/s.
    pub detuning: f64,
}

impl DriveParams {
    pub fn none() -> Self {
        Self { eta: 0.0, detuning: 0.0 }
    }
}

/// Resonant drive for an incoming photon flux (photons/s) through a port with coupling rate `kappa_c` (s⁻¹).
pub fn drive_from_flux(photon_flux: f64, kappa_c: f64) -> Result<DriveParams> {
    if !(photon_flux >= 0.0) {
        return Err(invalid("photon_flux", "must be non-negative"));
    }
    if !(kappa_c >= 0.0) {
        return Err(invalid("kappa_c", "must be non-negative"));
    }
    Ok(DriveParams {
        eta: (photon_flux * kappa_c).sqrt(),
        detuning: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvParams {
    /// Resonator loss rate to its environment, κ_c + κ_i, s⁻¹.
    pub kappa_env: f64,
    /// Bose occupation of that environment.
    pub thermal_occupation: f64,
}

impl EnvParams {
    pub fn cold(kappa_env: f64) -> Self {
        Self {
            kappa_env,
            thermal_occupation: 0.0,
        }
    }
}

/// Sign applied to the Lamb-shift Hamiltonian; `AsPrinted` uses
/// `H_LS = −(1/2e) Σ_l I_KK(V + lħω/e) A_l A_l†`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambShiftSign {
    AsPrinted,
    Flipped,
}

impl LambShiftSign {
    fn factor(self) -> f64 {
        match self {
            LambShiftSign::AsPrinted => 1.0,
            LambShiftSign::Flipped => -1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub junction: Arc<JunctionModel>,
    pub jumps: JumpFamily,
    /// Junction bias, V.
    pub bias: f64,
    /// Resonator frequency ω/2π, Hz.
    pub mode_frequency: f64,
    pub drive: DriveParams,
    pub env: EnvParams,
    pub include_lamb_shift: bool,
    pub lamb_shift_sign: LambShiftSign,
    /// Largest n_max the truncation guard may grow to.
    pub truncation_ceiling: usize,
}

pub const DEFAULT_TRUNCATION_CEILING: usize = 64;

impl SystemConfig {
    /// Configuration with no drive, cold environment, Lamb shift on, and
    /// a truncation picked for the vacuum.
    pub fn new(junction: Arc<JunctionModel>, coupling: f64, bias: f64, mode_frequency: f64, kappa_env: f64) -> Result<Self> {
        let cfg = Self {
            junction,
            jumps: build_jump_family(coupling, FockTruncation::new(6)?)?,
            bias,
            mode_frequency,
            drive: DriveParams::none(),
            env: EnvParams::cold(kappa_env),
            include_lamb_shift: true,
            lamb_shift_sign: LambShiftSign::AsPrinted,
            truncation_ceiling: DEFAULT_TRUNCATION_CEILING,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mode_frequency > 0.0) {
            return Err(invalid("mode_frequency", "must be positive"));
        }
        if !(self.env.kappa_env > 0.0) {
            return Err(invalid("kappa_env", "must be positive"));
        }
        if !(self.env.thermal_occupation >= 0.0) {
            return Err(invalid("thermal_occupation", "must be non-negative"));
        }
        if !(self.drive.eta >= 0.0) {
            return Err(invalid("eta", "must be non-negative"));
        }
        if !self.bias.is_finite() || !self.drive.detuning.is_finite() {
            return Err(invalid("bias", "bias and detuning must be finite"));
        }
        if self.include_lamb_shift && self.junction.kk.is_none() {
            return Err(invalid("junction", "Lamb shift requested but no Kramers-Kronig curve was tabulated"));
        }
        Ok(())
    }

    pub fn coupling(&self) -> f64 {
        self.jumps.coupling()
    }

    pub fn n_max(&self) -> usize {
        self.jumps.truncation().n_max()
    }

    /// Same system on another truncation.
    pub fn with_n_max(&self, n_max: usize) -> Result<Self> {
        Ok(Self {
            jumps: build_jump_family(self.coupling(), FockTruncation::new(n_max)?)?,
            ..self.clone()
        })
    }

    /// Voltage shift ħω/e per photon.
    pub fn photon_voltage(&self) -> f64 {
        PLANCK * self.mode_frequency / E_CHARGE
    }

    /// Forward tunneling rate for the `l`-photon emission process, s⁻¹:
    /// `max(I(V − lħω/e), 0)/e`. Negative currents belong to the reverse
    /// direction, which is not an allowed channel for `A_l`.
    pub fn junction_rate(&self, l: i64) -> Result<f64> {
        let v = self.bias - l as f64 * self.photon_voltage();
        Ok(self.junction.iv.eval(v)?.max(0.0) / E_CHARGE)
    }

    /// Rates for every `l` of the current jump family.
    pub fn junction_rates(&self) -> Result<Vec<(i64, f64)>> {
        self.jumps.iter().map(|(l, _)| Ok((l, self.junction_rate(l)?))).collect()
    }
}

/// `H = iη(a − a†) − δ a†a + H_LS`, in s⁻¹.
pub fn build_hamiltonian(cfg: &SystemConfig) -> Result<CMatrix> {
    cfg.validate()?;
    let d = cfg.jumps.truncation().dim();
    let a = annihilation(d);
    let mut h = (&a - a.adjoint()) * Complex64::new(0.0, cfg.drive.eta);
    for n in 0..d {
        h[(n, n)] -= Complex64::new(cfg.drive.detuning * n as f64, 0.0);
    }
    if cfg.include_lamb_shift {
        let kk = cfg.junction.kk.as_ref().expect("validated");
        let pref = -0.5 * cfg.lamb_shift_sign.factor() / E_CHARGE;
        for (l, op) in cfg.jumps.iter() {
            let v = cfg.bias + l as f64 * cfg.photon_voltage();
            let weight = pref * kk.eval(v)?;
            if weight == 0.0 {
                continue;
            }
            // A_l A_l† is diagonal
            for n in 0..d {
                let row = op.row(n);
                let p: f64 = row.iter().map(|z| z.norm_sqr()).sum();
                h[(n, n)] += Complex64::new(weight * p, 0.0);
            }
        }
    }
    Ok(h)
}
