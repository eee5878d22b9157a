use std::sync::{Arc, OnceLock};

use patdet_core::calibration::*;
use patdet_core::constants::{angular, micro_ev};
use patdet_core::junction::{CurrentTolerance, JunctionModel, TabulationGrid, TunnelJunction};
use patdet_core::lindblad::SystemConfig;
use patdet_core::response::{multiphoton_rate, step_current_analytic};

const MODE_HZ: f64 = 5.525e9;
const TRUE_A: f64 = 107.0;

fn model() -> DetectorModel {
    static CELL: OnceLock<DetectorModel> = OnceLock::new();
    CELL.get_or_init(|| {
        let j = TunnelJunction::symmetric(micro_ev(203.0), micro_ev(0.01), 1.75e6, 0.02).unwrap();
        let grid = TabulationGrid {
            fine_max: 2e-3,
            fine_step: 2e-6,
            coarse_max: 10e-3,
            coarse_step: 50e-6,
        };
        let jm = Arc::new(JunctionModel::build_with(j, &grid, CurrentTolerance::default(), Some(2e-3)).unwrap());
        let base = SystemConfig::new(jm, 0.79, 0.0, MODE_HZ, angular(84.5e6)).unwrap();
        DetectorModel::new(base, angular(75e6)).unwrap()
    })
    .clone()
}

fn powers() -> Vec<f64> {
    (0..24).map(|k| -28.0 + k as f64).collect()
}

fn clean_data() -> Vec<PowerSweepData> {
    static CELL: OnceLock<Vec<PowerSweepData>> = OnceLock::new();
    CELL.get_or_init(|| {
        let m = model();
        (1..=4).map(|n| simulate_power_sweep(&m, n, &powers(), TRUE_A).unwrap()).collect()
    })
    .clone()
}

fn noisy(relative: f64, floor: f64, seed: u64) -> Vec<PowerSweepData> {
    add_noise(&clean_data(), NoiseModel { relative, floor }, seed).unwrap()
}

fn relative_fit() -> &'static FitResult {
    static CELL: OnceLock<FitResult> = OnceLock::new();
    CELL.get_or_init(|| fit_attenuation(&model(), &noisy(0.01, 0.0, 2024), &FitConfig::default()).unwrap())
}

#[test]
fn noisy_round_trip() {
    let chi = model().linear_efficiency().unwrap();
    let fit = relative_fit();
    assert!((fit.attenuation_db - TRUE_A).abs() < 0.3, "A = {}", fit.attenuation_db);
    assert!((fit.quantum_efficiency - chi).abs() < 0.02, "χ = {} vs {chi}", fit.quantum_efficiency);
    assert!(fit.chi2_reduced < 2.0, "{}", fit.chi2_reduced);
    let (lo, hi) = fit.uncertainty_region.attenuation;
    assert!(lo < TRUE_A && TRUE_A < hi, "[{lo}, {hi}]");
    let (elo, ehi) = fit.uncertainty_region.efficiency;
    assert!(elo <= fit.quantum_efficiency && fit.quantum_efficiency <= ehi);
}

#[test]
fn multistart_agrees() {
    let fit = relative_fit();
    assert_eq!(fit.multistart_minima.len(), FitConfig::default().starts.len());
    for a in &fit.multistart_minima {
        assert!((a - fit.attenuation_db).abs() < 0.05, "{a} vs {}", fit.attenuation_db);
    }
}

#[test]
fn fewer_steps_widen_the_interval() {
    let data = noisy(0.01, 0.0, 2024);
    let width = |d: &[PowerSweepData]| {
        let (lo, hi) = fit_attenuation(&model(), d, &FitConfig::default()).unwrap().uncertainty_region.attenuation;
        hi - lo
    };
    let all = width(&data);
    let two = width(&data[..2]);
    assert!(two > all, "N=1,2: {two} dB, all: {all} dB");
}

#[test]
fn three_parameter_recovery() {
    let start = model().with_coupling(0.74).unwrap().with_resistance(1.9e6).unwrap();
    let cfg = FitConfig {
        release_coupling: true,
        release_resistance: true,
        ..FitConfig::default()
    };
    let fit = fit_attenuation(&start, &noisy(0.01, 0.0, 2024), &cfg).unwrap();
    assert!((fit.coupling - 0.79).abs() < 0.02, "λ = {}", fit.coupling);
    assert!((fit.r_tunnel / 1.75e6 - 1.0).abs() < 0.03, "R = {}", fit.r_tunnel);
    assert!((fit.attenuation_db - TRUE_A).abs() < 0.3);
    assert_eq!(fit.free_params().len(), 2);
}

fn small_surface() -> &'static Chi2Surface {
    static CELL: OnceLock<Chi2Surface> = OnceLock::new();
    CELL.get_or_init(|| {
        let couplings: Vec<f64> = (0..5).map(|k| 0.75 + 0.02 * k as f64).collect();
        let resistances: Vec<f64> = (0..5).map(|k| 1.65e6 + 0.05e6 * k as f64).collect();
        chi2_surface(
            &model(),
            &noisy(0.01, 50e-15, 7),
            &couplings,
            &resistances,
            &FitConfig::default(),
            TRUE_A,
        )
        .unwrap()
    })
}

#[test]
fn surface_minimum_near_truth() {
    let s = small_surface();
    let m = s.minimum();
    assert!((m.coupling - 0.79).abs() <= 0.02 + 1e-12, "λ = {}", m.coupling);
    assert!((m.r_tunnel - 1.75e6).abs() <= 0.05e6 + 1.0, "R = {}", m.r_tunnel);
    assert!(s.inside.contains(&s.min_index));
    assert!(s.cells.iter().all(|c| c.is_valid()));
    assert!((s.threshold - 2.0 * m.chi2_reduced).abs() < 1e-12);
}

#[test]
fn surface_is_smooth() {
    // along each grid line, χ_r² has a single minimum
    let s = small_surface();
    let nr = s.resistances.len();
    for i in 0..s.couplings.len() {
        let row: Vec<f64> = (0..nr).map(|j| s.cell(i, j).chi2_reduced).collect();
        assert!(unimodal(&row), "λ = {}: {row:?}", s.couplings[i]);
    }
    for j in 0..nr {
        let col: Vec<f64> = (0..s.couplings.len()).map(|i| s.cell(i, j).chi2_reduced).collect();
        assert!(unimodal(&col), "R = {}: {col:?}", s.resistances[j]);
    }
}

fn unimodal(v: &[f64]) -> bool {
    let k = v.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    v[..=k].windows(2).all(|w| w[1] <= w[0]) && v[k..].windows(2).all(|w| w[1] >= w[0])
}

#[test]
fn surface_report_lists_every_cell() {
    let s = small_surface();
    let mut buf = Vec::new();
    s.write_text(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows = text.lines().filter(|l| !l.starts_with('#') && l.split('\t').count() == 6).count();
    assert_eq!(rows, s.cells.len());
    assert!(s.efficiency_range.0 <= s.efficiency_range.1);
}

#[test]
fn low_power_forward_model_matches_closed_form() {
    let m = model();
    let edge = m.base.junction.iv.eval(417.4e-6).unwrap();
    let kappa_env = m.base.env.kappa_env;
    let bias = m.step_bias(1).unwrap();
    for p in [-155.0, -150.0, -145.0] {
        let flux = source_power_to_flux(p, 0.0, MODE_HZ);
        let eta = (flux * m.kappa_c).sqrt();
        let numeric = m.response(bias, flux).unwrap().current;
        let analytic = step_current_analytic(1, eta, kappa_env, 0.79, edge).unwrap();
        assert!((numeric / analytic - 1.0).abs() < 0.02, "{p} dBm: {numeric:e} vs {analytic:e}");
    }
    // the same limit written as an efficiency
    let kj = multiphoton_rate(1, 0.79, edge);
    let chi = 4.0 * kj * m.kappa_c / (kappa_env + kj).powi(2);
    assert!((m.linear_efficiency().unwrap() / chi - 1.0).abs() < 0.02);
}

#[test]
fn file_round_trip_preserves_the_fit() {
    let data = noisy(0.01, 0.0, 2024);
    let mut buf = Vec::new();
    write_sweeps(&data, &mut buf).unwrap();
    let back = read_sweeps(&buf[..]).unwrap();
    let fit = fit_attenuation(&model(), &back, &FitConfig::default()).unwrap();
    assert!((fit.attenuation_db - relative_fit().attenuation_db).abs() < 1e-3);
}
