//! Physical constants (exact 2019 SI values) and unit helpers.

use std::f64::consts::PI;

/// Elementary charge, C.
pub const E_CHARGE: f64 = 1.602_176_634e-19;
/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = PLANCK / (2.0 * PI);
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;
/// Resistance quantum h/e², Ω.
pub const R_K: f64 = PLANCK / (E_CHARGE * E_CHARGE);

/// Converts an energy in electronvolts to joules.
#[inline]
pub fn ev(value: f64) -> f64 {
    value * E_CHARGE
}

/// Converts an energy in micro-electronvolts to joules.
#[inline]
pub fn micro_ev(value: f64) -> f64 {
    value * 1e-6 * E_CHARGE
}

/// Angular frequency for a frequency in hertz.
#[inline]
pub fn angular(freq_hz: f64) -> f64 {
    2.0 * PI * freq_hz
}

/// Photon energy ħω for a frequency in hertz, J.
#[inline]
pub fn photon_energy(freq_hz: f64) -> f64 {
    PLANCK * freq_hz
}

/// Power in dBm to watts.
#[inline]
pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

/// Watts to dBm.
#[inline]
pub fn watts_to_dbm(p_w: f64) -> f64 {
    10.0 * p_w.log10() + 30.0
}
