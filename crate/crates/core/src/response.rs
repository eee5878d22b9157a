//! Closed-form detector response: PAT loss rate, reflection, efficiency,
//! resonator populations, low-power multiphoton step currents, shot-noise
//! gain calibration and figures of merit.
//!
//! Rates are angular (s⁻¹); frequencies passed as `*_hz` are ω/2π.

use num_complex::Complex64;

use crate::constants::{angular, photon_energy, E_CHARGE, HBAR, K_B, R_K};
use crate::error::{invalid, Error, Result};
use crate::junction::IvCurve;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSet {
    /// Coupling to the measurement line.
    pub kappa_c: f64,
    /// Intrinsic loss other than the junction.
    pub kappa_i: f64,
    /// Loss by photo-assisted tunneling.
    pub kappa_j: f64,
}

impl RateSet {
    pub fn new(kappa_c: f64, kappa_i: f64, kappa_j: f64) -> Result<Self> {
        for (name, v) in [("kappa_c", kappa_c), ("kappa_i", kappa_i), ("kappa_j", kappa_j)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(name, "must be finite and non-negative"));
            }
        }
        Ok(Self { kappa_c, kappa_i, kappa_j })
    }

    /// Rates given as κ/2π in Hz.
    pub fn from_hz(kappa_c: f64, kappa_i: f64, kappa_j: f64) -> Result<Self> {
        Self::new(angular(kappa_c), angular(kappa_i), angular(kappa_j))
    }

    /// Internal loss κ = κ_j + κ_i.
    pub fn kappa_total(&self) -> f64 {
        self.kappa_j + self.kappa_i
    }

    /// Loss to everything except the junction, κ_c + κ_i.
    pub fn kappa_env(&self) -> f64 {
        self.kappa_c + self.kappa_i
    }

    pub fn with_kappa_j(&self, kappa_j: f64) -> Result<Self> {
        Self::new(self.kappa_c, self.kappa_i, kappa_j)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorFigures {
    pub quantum_efficiency: f64,
    /// A.
    pub dark_current: f64,
    /// W/√Hz.
    pub nep: f64,
    /// Compression points, dBm, in the order they were requested.
    pub compression_points: Vec<f64>,
}

impl DetectorFigures {
    pub fn new(quantum_efficiency: f64, dark_current: f64, nep: f64, compression_points: Vec<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&quantum_efficiency) {
            return Err(invalid("quantum_efficiency", "must lie in [0, 1]"));
        }
        Ok(Self {
            quantum_efficiency,
            dark_current,
            nep,
            compression_points,
        })
    }
}

/// Franck-Condon weight `λ² e^{−λ²}` of the single-photon transition.
pub fn single_photon_weight(coupling: f64) -> f64 {
    let x = coupling * coupling;
    x * (-x).exp()
}

/// `κ_j = λ² e^{−λ²} I(V + ħω/e)/e`.
pub fn kappa_j_linear(coupling: f64, iv: &IvCurve, bias: f64, mode_hz: f64) -> Result<f64> {
    let v = bias + photon_energy(mode_hz) / E_CHARGE;
    Ok(single_photon_weight(coupling) * iv.eval(v)? / E_CHARGE)
}

/// Reflection `1 − κ_c/((κ + κ_c)/2 + iδ)`.
pub fn s11(rates: &RateSet, detuning: f64) -> Complex64 {
    let denom = Complex64::new(0.5 * (rates.kappa_total() + rates.kappa_c), detuning);
    Complex64::new(1.0, 0.0) - rates.kappa_c / denom
}

/// `(absorption, efficiency)` on resonance.
pub fn absorption_and_efficiency(rates: &RateSet) -> (f64, f64) {
    let k = rates.kappa_total();
    let kc = rates.kappa_c;
    let sum = k + kc;
    if sum == 0.0 {
        return (0.0, 0.0);
    }
    let r = (k - kc) / sum;
    (1.0 - r * r, 4.0 * rates.kappa_j * kc / (sum * sum))
}

/// Linear-regime photon number for an incoming flux (photons/s).
pub fn resonator_population(photon_flux: f64, rates: &RateSet) -> f64 {
    let sum = rates.kappa_c + rates.kappa_total();
    if sum == 0.0 {
        return 0.0;
    }
    4.0 * photon_flux * rates.kappa_c / (sum * sum)
}

/// Bose-Einstein occupation of a mode at `mode_hz`.
pub fn bose_einstein(temperature: f64, mode_hz: f64) -> Result<f64> {
    if !(temperature >= 0.0) {
        return Err(invalid("temperature", "must be non-negative"));
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / (photon_energy(mode_hz) / (K_B * temperature)).exp_m1())
}

/// Mode population when the line and intrinsic bath sit at `temperature`
/// while the junction acts as a cold absorber.
pub fn thermal_population(temperature: f64, mode_hz: f64, rates: &RateSet) -> Result<f64> {
    let n_be = bose_einstein(temperature, mode_hz)?;
    let env = rates.kappa_env();
    if env == 0.0 {
        return Ok(0.0);
    }
    Ok(env / (env + rates.kappa_j) * n_be)
}

/// `e κ_j n_ph(T) + I_D`.
pub fn thermal_current(temperature: f64, mode_hz: f64, rates: &RateSet, dark: f64) -> Result<f64> {
    Ok(E_CHARGE * rates.kappa_j * thermal_population(temperature, mode_hz, rates)? + dark)
}

/// Temperature at which [`thermal_population`] equals `population`.
pub fn temperature_for_population(population: f64, mode_hz: f64, rates: &RateSet) -> Result<f64> {
    if !(population >= 0.0) {
        return Err(invalid("population", "must be non-negative"));
    }
    if population == 0.0 {
        return Ok(0.0);
    }
    let env = rates.kappa_env();
    if env == 0.0 {
        return Err(invalid("rates", "kappa_c + kappa_i must be positive"));
    }
    let n_be = population * (env + rates.kappa_j) / env;
    Ok(photon_energy(mode_hz) / (K_B * (1.0 + 1.0 / n_be).ln()))
}

/// `κ_j^{(n)} = e^{−λ²} λ^{2n}/n! · I_edge/e`, the n-photon rate at the gap edge.
pub fn multiphoton_rate(n: u32, coupling: f64, edge_current: f64) -> f64 {
    let x = coupling * coupling;
    let mut w = (-x).exp();
    for k in 1..=n {
        w *= x / k as f64;
    }
    w * edge_current / E_CHARGE
}

/// Low-power current of the N-photon step (N = 1..4) for drive amplitude
/// `eta` (η² = φκ_c) and environment loss `kappa_env` = κ_c + κ_i.
pub fn step_current_analytic(step: u32, eta: f64, kappa_env: f64, coupling: f64, edge_current: f64) -> Result<f64> {
    if !(1..=4).contains(&step) {
        return Err(Error::StepIndex(step as usize));
    }
    if !(kappa_env > 0.0) {
        return Err(invalid("kappa_env", "must be positive"));
    }
    let kj = multiphoton_rate(step, coupling, edge_current);
    let k = kappa_env;
    let e2 = eta * eta;
    let i = match step {
        1 => 4.0 * e2 * kj / (k + kj).powi(2),
        2 => 32.0 * e2.powi(2) * kj / (k.powi(2) * (2.0 * k + kj).powi(2)),
        3 => 96.0 * e2.powi(3) * kj / (k.powi(4) * (3.0 * k + kj).powi(2)),
        _ => 512.0 * e2.powi(4) * kj / (3.0 * k.powi(6) * (4.0 * k + kj).powi(2)),
    };
    Ok(i * E_CHARGE)
}

/// Microwave power emitted by the junction into the line in bandwidth `bw`
/// at high bias, where the junction damps the mode by `ωλ²R_K/(πR_N)`.
pub fn shot_noise_power(current: f64, rates: &RateSet, coupling: f64, r_normal: f64, mode_hz: f64, bw: f64) -> Result<f64> {
    if !(r_normal > 0.0) {
        return Err(invalid("r_normal", "must be positive"));
    }
    let omega = angular(mode_hz);
    let l2 = coupling * coupling;
    let k = rates.kappa_env() + omega * l2 * R_K / (std::f64::consts::PI * r_normal);
    Ok(4.0 * l2 * rates.kappa_c * HBAR * omega * current / (E_CHARGE * k * k) * bw)
}

/// Gain of the detection chain in dB, from a measured noise-power ramp
/// taken in the ohmic regime (`I = V/R_N`). The slope of the measurement
/// against bias is compared with the slope of [`shot_noise_power`].
pub fn gain_from_shot_noise(
    biases: &[f64],
    measured_powers: &[f64],
    rates: &RateSet,
    coupling: f64,
    r_normal: f64,
    mode_hz: f64,
    bw: f64,
) -> Result<f64> {
    if biases.len() != measured_powers.len() {
        return Err(invalid("measured_powers", "length differs from biases"));
    }
    if biases.len() < 2 {
        return Err(Error::DegenerateData("need at least two bias points".into()));
    }
    let n = biases.len() as f64;
    let mx = biases.iter().sum::<f64>() / n;
    let my = measured_powers.iter().sum::<f64>() / n;
    let sxx: f64 = biases.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateData("all biases are equal".into()));
    }
    let sxy: f64 = biases.iter().zip(measured_powers).map(|(x, y)| (x - mx) * (y - my)).sum();
    let measured_slope = sxy / sxx;
    let model_slope = shot_noise_power(1.0 / r_normal, rates, coupling, r_normal, mode_hz, bw)?;
    let gain = measured_slope / model_slope;
    if !(gain > 0.0) {
        return Err(Error::DegenerateData("noise power does not rise with bias".into()));
    }
    Ok(10.0 * gain.log10())
}

/// `e κ_j n` for a residual population `n`.
pub fn dark_current(residual_population: f64, kappa_j: f64) -> Result<f64> {
    if !(residual_population >= 0.0) {
        return Err(invalid("residual_population", "must be non-negative"));
    }
    Ok(E_CHARGE * kappa_j * residual_population)
}

/// Noise-equivalent power `ħω δI/(eχ)`, W/√Hz.
pub fn nep(current_noise: f64, efficiency: f64, mode_hz: f64) -> Result<f64> {
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        return Err(invalid("efficiency", "must lie in (0, 1]"));
    }
    Ok(photon_energy(mode_hz) * current_noise / (E_CHARGE * efficiency))
}

/// Detection bandwidth above which the detector beats a quantum-limited
/// amplifier: `δI²/(χe)²`, Hz.
pub fn jpa_crossover_bandwidth(current_noise: f64, efficiency: f64) -> Result<f64> {
    if !(efficiency > 0.0) {
        return Err(invalid("efficiency", "must be positive"));
    }
    Ok((current_noise / (efficiency * E_CHARGE)).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::junction::CurveKind;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const MODE_HZ: f64 = 5.525e9;

    fn device_rates() -> RateSet {
        RateSet::from_hz(75e6, 9.5e6, 65e6).unwrap()
    }

    fn flat_curve(current: f64) -> IvCurve {
        IvCurve::new(vec![-1e-3, 1e-3], vec![current, current], CurveKind::Direct).unwrap()
    }

    #[test]
    fn rates_reject_negative() {
        assert!(RateSet::new(-1.0, 0.0, 0.0).is_err());
        assert!(RateSet::new(1.0, f64::NAN, 0.0).is_err());
        assert_relative_eq!(device_rates().kappa_total(), angular(74.5e6), max_relative = 1e-15);
    }

    #[test]
    fn kappa_j_at_gap_edge() {
        let kj = kappa_j_linear(0.79, &flat_curve(190e-12), 394.6e-6, MODE_HZ).unwrap();
        assert_relative_eq!(kj, 3.969e8, max_relative = 2e-3);
        assert!((kj / (2.0 * PI) - 63e6).abs() < 0.5e6);
        assert_eq!(kappa_j_linear(0.0, &flat_curve(190e-12), 394.6e-6, MODE_HZ).unwrap(), 0.0);
    }

    #[test]
    fn kappa_j_out_of_span() {
        assert!(kappa_j_linear(0.79, &flat_curve(1e-10), 990e-6, MODE_HZ).is_err());
    }

    #[test]
    fn franck_condon_peak() {
        assert_relative_eq!(single_photon_weight(1.0), (-1.0f64).exp(), max_relative = 1e-15);
        for l in [0.9, 0.99, 1.01, 1.1] {
            assert!(single_photon_weight(l) < single_photon_weight(1.0));
        }
    }

    #[test]
    fn s11_limits() {
        let r = RateSet::new(1e8, 0.0, 1e8).unwrap();
        assert!(s11(&r, 0.0).norm() < 1e-15);
        let far = s11(&device_rates(), 1e15);
        assert!((far - Complex64::new(1.0, 0.0)).norm() < 1e-6);
        let dip = s11(&device_rates(), 0.0).norm_sqr();
        // 1 − 75/74.75
        assert_relative_eq!(dip, (0.25f64 / 74.75).powi(2), max_relative = 1e-10);
        assert!(10.0 * dip.log10() < -30.0);
    }

    #[test]
    fn efficiency_values() {
        let (_, eff) = absorption_and_efficiency(&device_rates());
        assert_relative_eq!(eff, 0.8727, max_relative = 1e-3);
        let (abs, eff) = absorption_and_efficiency(&RateSet::new(1.0, 0.0, 1.0).unwrap());
        assert_relative_eq!(eff, 1.0);
        assert_relative_eq!(abs, 1.0);
        assert_eq!(absorption_and_efficiency(&RateSet::new(1.0, 0.3, 0.0).unwrap()).1, 0.0);
    }

    #[test]
    fn efficiency_peaks_at_matching() {
        let kc = 3.0;
        let ki = 0.7;
        let best = (0..=20000)
            .map(|k| k as f64 * 1e-3)
            .max_by(|a, b| {
                let ea = absorption_and_efficiency(&RateSet::new(kc, ki, *a).unwrap()).1;
                let eb = absorption_and_efficiency(&RateSet::new(kc, ki, *b).unwrap()).1;
                ea.total_cmp(&eb)
            })
            .unwrap();
        assert!((best - (kc + ki)).abs() <= 1e-3);
    }

    #[test]
    fn population_values() {
        assert_eq!(resonator_population(0.0, &device_rates()), 0.0);
        assert_relative_eq!(resonator_population(1e9, &device_rates()), 2.136, max_relative = 1e-3);
        let lossless = RateSet::from_hz(75e6, 0.0, 65e6).unwrap();
        assert_relative_eq!(resonator_population(1e9, &lossless), 2.44, max_relative = 1e-2);
        let huge = RateSet::new(1.0, 1e30, 0.0).unwrap();
        assert!(resonator_population(1e9, &huge) < 1e-20);
    }

    #[test]
    fn thermal_values() {
        let r = device_rates();
        assert_eq!(thermal_population(0.0, MODE_HZ, &r).unwrap(), 0.0);
        assert_relative_eq!(bose_einstein(0.15, MODE_HZ).unwrap(), 0.2059, max_relative = 2e-3);
        assert_relative_eq!(thermal_population(0.15, MODE_HZ, &r).unwrap(), 0.1164, max_relative = 2e-3);
        let t = temperature_for_population(1e-3, MODE_HZ, &r).unwrap();
        assert!((t - 0.040).abs() < 0.005, "{t}");
        assert_relative_eq!(thermal_population(t, MODE_HZ, &r).unwrap(), 1e-3, max_relative = 1e-10);
        assert!(bose_einstein(-1.0, MODE_HZ).is_err());
    }

    #[test]
    fn thermal_current_saturates_at_dark() {
        let r = device_rates();
        let i = thermal_current(0.02, MODE_HZ, &r, 55e-15).unwrap();
        assert!((i - 55e-15) / 55e-15 < 0.01);
    }

    #[test]
    fn multiphoton_rates() {
        let k2 = multiphoton_rate(2, 0.79, 190e-12);
        assert_relative_eq!(k2 / (2.0 * PI), 19.7e6, max_relative = 1e-2);
        assert_relative_eq!(multiphoton_rate(1, 0.79, 190e-12), kappa_j_linear(0.79, &flat_curve(190e-12), 0.0, MODE_HZ).unwrap());
    }

    #[test]
    fn step_current_bounds() {
        assert!(matches!(step_current_analytic(0, 1.0, 1.0, 0.8, 1e-10), Err(Error::StepIndex(0))));
        assert!(step_current_analytic(5, 1.0, 1.0, 0.8, 1e-10).is_err());
        for n in 1..=4 {
            assert_eq!(step_current_analytic(n, 0.0, 5e8, 0.79, 190e-12).unwrap(), 0.0);
        }
    }

    #[test]
    fn step_current_n1_matches_efficiency() {
        let r = RateSet::from_hz(75e6, 9.5e6, 0.0).unwrap();
        let flux = 1e5;
        let eta = (flux * r.kappa_c).sqrt();
        let i = step_current_analytic(1, eta, r.kappa_env(), 0.79, 190e-12).unwrap();
        let kj = multiphoton_rate(1, 0.79, 190e-12);
        let (_, eff) = absorption_and_efficiency(&r.with_kappa_j(kj).unwrap());
        assert_relative_eq!(i / (E_CHARGE * flux), eff, max_relative = 1e-12);
        assert!((eff - 0.87).abs() < 0.02);
    }

    #[test]
    fn step_current_slopes() {
        for n in 1..=4u32 {
            let a = step_current_analytic(n, 1e6, 5e8, 0.79, 190e-12).unwrap();
            let b = step_current_analytic(n, 1e6 * 10f64.sqrt(), 5e8, 0.79, 190e-12).unwrap();
            assert_relative_eq!((b / a).log10(), n as f64, max_relative = 1e-12);
        }
    }

    #[test]
    fn shot_noise_linear_and_zero() {
        let r = RateSet::from_hz(75e6, 9.5e6, 0.0).unwrap();
        let p1 = shot_noise_power(1e-9, &r, 0.79, 1.53e6, MODE_HZ, 1e6).unwrap();
        let p2 = shot_noise_power(2e-9, &r, 0.79, 1.53e6, MODE_HZ, 1e6).unwrap();
        assert_relative_eq!(p2, 2.0 * p1, max_relative = 1e-14);
        assert_eq!(shot_noise_power(0.0, &r, 0.79, 1.53e6, MODE_HZ, 1e6).unwrap(), 0.0);
    }

    #[test]
    fn shot_noise_junction_damping_scale() {
        // at high bias the junction damping is λ²·(V/R_N)/e per unit of ħω/e
        let omega = angular(MODE_HZ);
        let damping = omega * 0.79f64.powi(2) * R_K / (PI * 1.53e6);
        let hw_over_e = HBAR * omega / E_CHARGE;
        assert_relative_eq!(damping, 2.0 * 0.79f64.powi(2) * hw_over_e / (1.53e6 * E_CHARGE), max_relative = 1e-12);
    }

    #[test]
    fn gain_round_trip() {
        let r = RateSet::from_hz(75e6, 9.5e6, 0.0).unwrap();
        let rn = 1.53e6;
        let gain_db = 107.0;
        let biases: Vec<f64> = (0..=50).map(|k| 1.3e-3 + k as f64 * 1e-5).collect();
        let offset = 3e-12;
        let measured: Vec<f64> = biases
            .iter()
            .map(|v| offset + 10f64.powf(gain_db / 10.0) * shot_noise_power(v / rn, &r, 0.79, rn, MODE_HZ, 1e6).unwrap())
            .collect();
        let got = gain_from_shot_noise(&biases, &measured, &r, 0.79, rn, MODE_HZ, 1e6).unwrap();
        assert!((got - gain_db).abs() < 10.0 * 1.01f64.log10());
        assert!(gain_from_shot_noise(&biases[..1], &measured[..1], &r, 0.79, rn, MODE_HZ, 1e6).is_err());
    }

    #[test]
    fn dark_current_values() {
        assert_eq!(dark_current(0.0, 1e9).unwrap(), 0.0);
        assert_relative_eq!(dark_current(1e-3, angular(55e6)).unwrap(), 55.4e-15, max_relative = 1e-3);
        assert_relative_eq!(dark_current(1.5e-3, angular(65e6)).unwrap(), 98.1e-15, max_relative = 1e-3);
        assert!(dark_current(-1e-3, 1e9).is_err());
    }

    #[test]
    fn figures_of_merit() {
        assert_relative_eq!(nep(120e-15, 0.83, MODE_HZ).unwrap(), 3.3e-18, max_relative = 0.01);
        assert_relative_eq!(nep(1e-15, 0.83, MODE_HZ).unwrap(), 2.75e-20, max_relative = 0.01);
        assert!(nep(1e-15, 0.0, MODE_HZ).is_err());
        assert_relative_eq!(jpa_crossover_bandwidth(1e-15, 0.83).unwrap(), 56.5e6, max_relative = 0.01);
        assert_relative_eq!(jpa_crossover_bandwidth(1e-15, 1.0).unwrap(), 38.96e6, max_relative = 0.01);
        assert_relative_eq!(
            jpa_crossover_bandwidth(0.5e-15, 0.83).unwrap() * 4.0,
            jpa_crossover_bandwidth(1e-15, 0.83).unwrap(),
            max_relative = 1e-14
        );
        assert!(DetectorFigures::new(1.2, 0.0, 0.0, vec![]).is_err());
    }

    proptest! {
        #[test]
        fn reflection_is_passive(kc in 0.0..1e9f64, ki in 0.0..1e9f64, kj in 0.0..1e9f64, det in -1e10..1e10f64) {
            let r = RateSet::new(kc, ki, kj).unwrap();
            prop_assert!(s11(&r, det).norm() <= 1.0 + 1e-12);
        }

        #[test]
        fn efficiency_below_absorption(kc in 1e6..1e9f64, ki in 0.0..1e9f64, kj in 0.0..1e9f64) {
            let (abs, eff) = absorption_and_efficiency(&RateSet::new(kc, ki, kj).unwrap());
            prop_assert!(eff <= abs + 1e-15);
            let (abs0, eff0) = absorption_and_efficiency(&RateSet::new(kc, 0.0, kj).unwrap());
            prop_assert!((abs0 - eff0).abs() < 1e-12);
        }

        #[test]
        fn nep_linear(di in 1e-18..1e-12f64, chi in 0.01..1.0f64) {
            let a = nep(di, chi, MODE_HZ).unwrap();
            let b = nep(3.0 * di, chi, MODE_HZ).unwrap();
            prop_assert!((b / a - 3.0).abs() < 1e-12);
        }
    }
}
