//! Attenuation and quantum-efficiency calibration from the power dependence
//! of the multiphoton current steps.
//!
//! Powers in data files are at the microwave source. The photon flux at the
//! resonator input is `φ = 10^((P − 30 − A)/10) / (h f)` for a source power
//! `P` in dBm and a line attenuation `A` in dB.

mod data;
mod fit;
mod surface;

use std::sync::Arc;

use rayon::prelude::*;

use crate::constants::{photon_energy, E_CHARGE};
use crate::error::{invalid, Error, Result};
use crate::junction::JunctionModel;
use crate::lindblad::{drive_from_flux, steady_state, SystemConfig};
use crate::fock::{build_jump_family, FockTruncation};
use crate::solve::brent_root;

pub use data::{add_noise, read_sweeps, write_sweeps, NoiseModel, PowerSweepData};
pub use fit::{
    data_efficiency, fit_attenuation, FitConfig, FitResult, ForwardTable, SigmaModel, TableGrid, UncertaintyRegion,
};
pub use surface::{chi2_surface, Chi2Surface, SurfaceCell};

/// Photon flux (1/s) at the resonator input for a source power in dBm.
pub fn source_power_to_flux(power_dbm: f64, attenuation_db: f64, mode_hz: f64) -> f64 {
    10f64.powf((power_dbm - 30.0 - attenuation_db) / 10.0) / photon_energy(mode_hz)
}

/// Inverse of [`source_power_to_flux`].
pub fn flux_to_source_power(flux: f64, attenuation_db: f64, mode_hz: f64) -> f64 {
    10.0 * (flux * photon_energy(mode_hz)).log10() + 30.0 + attenuation_db
}

/// The driven resonator-junction system with the port coupling needed to
/// turn an incoming flux into a drive amplitude.
#[derive(Debug, Clone)]
pub struct DetectorModel {
    /// Template; bias and drive are overwritten per point.
    pub base: SystemConfig,
    /// Port coupling κ_c, s⁻¹; `base.env.kappa_env` is κ_c + κ_i.
    pub kappa_c: f64,
}

/// One simulated operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponsePoint {
    pub flux: f64,
    /// Photo-assisted current with the undriven value subtracted, A.
    pub current: f64,
    pub n_ph: f64,
}

impl DetectorModel {
    pub fn new(base: SystemConfig, kappa_c: f64) -> Result<Self> {
        base.validate()?;
        if !(kappa_c > 0.0 && kappa_c <= base.env.kappa_env) {
            return Err(invalid("kappa_c", "must be positive and not exceed kappa_env"));
        }
        Ok(Self { base, kappa_c })
    }

    pub fn kappa_i(&self) -> f64 {
        self.base.env.kappa_env - self.kappa_c
    }

    pub fn coupling(&self) -> f64 {
        self.base.coupling()
    }

    pub fn r_tunnel(&self) -> f64 {
        self.base.junction.junction.r_tunnel
    }

    pub fn mode_frequency(&self) -> f64 {
        self.base.mode_frequency
    }

    /// Bias of the N-photon step, `eV = 2Δ − (N − ½)ħω`.
    pub fn step_bias(&self, step: usize) -> Result<f64> {
        if !(1..=4).contains(&step) {
            return Err(Error::StepIndex(step));
        }
        let j = &self.base.junction.junction;
        let two_gap = j.dos_left.gap() + j.dos_right.gap();
        Ok((two_gap - (step as f64 - 0.5) * photon_energy(self.base.mode_frequency)) / E_CHARGE)
    }

    pub fn with_coupling(&self, coupling: f64) -> Result<Self> {
        let n_max = self.base.n_max();
        let mut base = self.base.clone();
        base.jumps = build_jump_family(coupling, FockTruncation::new(n_max)?)?;
        Ok(Self { base, ..self.clone() })
    }

    pub fn with_resistance(&self, r_tunnel: f64) -> Result<Self> {
        let mut base = self.base.clone();
        base.junction = Arc::new(self.base.junction.with_resistance(r_tunnel)?);
        Ok(Self { base, ..self.clone() })
    }

    pub fn with_junction(&self, junction: Arc<JunctionModel>) -> Self {
        let mut base = self.base.clone();
        base.junction = junction;
        Self { base, ..self.clone() }
    }

    fn config(&self, bias: f64, flux: f64) -> Result<SystemConfig> {
        let mut cfg = self.base.clone();
        cfg.bias = bias;
        cfg.drive = drive_from_flux(flux, self.kappa_c)?;
        Ok(cfg)
    }

    /// Current with the drive off, A.
    pub fn dark_current(&self, bias: f64) -> Result<f64> {
        Ok(steady_state(&self.config(bias, 0.0)?)?.i_pat)
    }

    /// Steady-state response at `bias` for an incoming flux.
    pub fn response(&self, bias: f64, flux: f64) -> Result<ResponsePoint> {
        let dark = self.dark_current(bias)?;
        self.response_above(bias, flux, dark)
    }

    fn response_above(&self, bias: f64, flux: f64, dark: f64) -> Result<ResponsePoint> {
        let res = steady_state(&self.config(bias, flux)?)?;
        Ok(ResponsePoint {
            flux,
            current: res.i_pat - dark,
            n_ph: res.n_ph,
        })
    }

    /// Responses at many fluxes for one bias, sharing the dark value.
    pub fn responses(&self, bias: f64, fluxes: &[f64]) -> Result<Vec<ResponsePoint>> {
        let dark = self.dark_current(bias)?;
        fluxes
            .par_iter()
            .map(|&f| self.response_above(bias, f, dark))
            .collect()
    }

    /// Low-power conversion efficiency `I/(eφ)` of the single-photon step,
    /// evaluated where the mode holds about 1e-5 photons.
    pub fn linear_efficiency(&self) -> Result<f64> {
        let bias = self.step_bias(1)?;
        let flux = 1e-5 * self.base.env.kappa_env.powi(2) / (4.0 * self.kappa_c);
        let p = self.response(bias, flux)?;
        Ok(p.current / (E_CHARGE * flux))
    }
}

/// One row of a simulated sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub source_power: f64,
    pub flux: f64,
    pub current: f64,
    pub n_ph: f64,
}

/// Steady-state sweep of the N-photon step over source powers.
pub fn simulate_sweep(model: &DetectorModel, step: usize, source_powers: &[f64], attenuation_db: f64) -> Result<Vec<SweepPoint>> {
    let bias = model.step_bias(step)?;
    if source_powers.is_empty() {
        return Ok(Vec::new());
    }
    let dark = model.dark_current(bias)?;
    source_powers
        .par_iter()
        .map(|&p| {
            let flux = source_power_to_flux(p, attenuation_db, model.mode_frequency());
            model
                .response_above(bias, flux, dark)
                .map(|r| SweepPoint {
                    source_power: p,
                    flux,
                    current: r.current,
                    n_ph: r.n_ph,
                })
                .map_err(|e| Error::AtPower {
                    power_dbm: p,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Noiseless sweep data for the N-photon step.
pub fn simulate_power_sweep(
    model: &DetectorModel,
    step: usize,
    source_powers: &[f64],
    attenuation_db: f64,
) -> Result<PowerSweepData> {
    let pts = simulate_sweep(model, step, source_powers, attenuation_db)?;
    PowerSweepData::new(
        step,
        model.step_bias(step)?,
        source_powers.to_vec(),
        pts.iter().map(|p| p.current).collect(),
    )
}

/// Power at the resonator input (dBm) where the single-photon step has
/// compressed by `drop_db` below its linear extrapolation `χ e φ`,
/// searched in `[lo_dbm, hi_dbm]`.
pub fn compression_point(model: &DetectorModel, drop_db: f64, lo_dbm: f64, hi_dbm: f64) -> Result<f64> {
    if !(drop_db > 0.0) {
        return Err(invalid("drop_db", "must be positive"));
    }
    let chi = model.linear_efficiency()?;
    let bias = model.step_bias(1)?;
    let dark = model.dark_current(bias)?;
    let f = model.mode_frequency();
    let failure = std::cell::RefCell::new(None);
    let excess = |p: f64| {
        let flux = source_power_to_flux(p, 0.0, f);
        match model.response_above(bias, flux, dark) {
            Ok(r) => 10.0 * (chi * E_CHARGE * flux / r.current).log10() - drop_db,
            Err(e) => {
                failure.borrow_mut().get_or_insert(Error::AtPower {
                    power_dbm: p,
                    source: Box::new(e),
                });
                f64::NAN
            }
        }
    };
    let root = brent_root(excess, lo_dbm, hi_dbm, 1e-4, 100);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    root
}
