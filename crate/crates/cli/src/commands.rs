//! One function per subcommand. Each returns the files it wrote.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use patdet_core::calibration::{
    add_noise, chi2_surface, compression_point, fit_attenuation, read_sweeps, simulate_sweep, write_sweeps,
    FitConfig, NoiseModel, PowerSweepData, SigmaModel,
};
use patdet_core::constants::{angular, dbm_to_watts, photon_energy, E_CHARGE};
use patdet_core::lindblad::{drive_from_flux, steady_state, steady_state_at};
use patdet_core::resonator::{find_modes, refit_junction_capacitance, write_mode_table};
use patdet_core::response::{s11, single_photon_weight, thermal_current, thermal_population, RateSet};

use crate::config::{linear_grid, Loaded, ScenarioConfig};
use crate::error::CliError;

/// Window for the compression search at the resonator input, dBm.
const COMPRESSION_WINDOW: (f64, f64) = (-135.0, -110.0);

pub struct Output {
    dir: PathBuf,
    command: &'static str,
    hash: String,
    pub written: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: &Path, command: &'static str, config: &ScenarioConfig) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        let mut out = Self {
            dir: dir.to_path_buf(),
            command,
            hash: config.hash(),
            written: Vec::new(),
        };
        out.write_raw("resolved_config.toml", config.resolved().as_bytes())?;
        Ok(out)
    }

    /// Writes `name` under the common header.
    fn write(&mut self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> Result<(), CliError>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        writeln!(buf, "# patdet {} {}", self.command, env!("CARGO_PKG_VERSION"))?;
        writeln!(buf, "# config_sha256 {}", self.hash)?;
        body(&mut buf)?;
        self.write_raw(name, &buf)
    }

    fn write_raw(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }
}

/// `eV = 2Δ − (N − ½)ħω` for the symmetric junction of the configuration.
fn step_bias(config: &ScenarioConfig, step: usize) -> Result<f64, CliError> {
    if !(1..=4).contains(&step) {
        return Err(CliError::Config(format!("step {step} outside 1..=4")));
    }
    let gap = config.junction_section()?.gap.value;
    let f = config.mode_section()?.frequency.value;
    Ok((2.0 * gap - (step as f64 - 0.5) * photon_energy(f)) / E_CHARGE)
}

pub fn modes(loaded: &Loaded, out: &mut Output) -> Result<(), CliError> {
    let config = &loaded.config;
    let section = config.line_section()?;
    let mut line = config.line_model()?;
    let mut origin = "given";
    if let Some(targets) = &section.refit_targets {
        let targets: Vec<f64> = targets.iter().map(|q| q.value).collect();
        line.termination_capacitance =
            refit_junction_capacitance(&line, &targets, section.refit_min.value, section.refit_max.value)?;
        origin = "refitted";
    }
    if section.n_modes == 0 {
        return Err(CliError::Config("line.n_modes must be at least 1".into()));
    }
    let modes = find_modes(&line, section.n_modes)?;
    out.write("modes.tsv", |buf| {
        writeln!(buf, "# junction_capacitance_F\t{:.6e}\t{origin}", line.termination_capacitance)?;
        writeln!(buf, "# line_impedance_Ohm\t{:.6e}", line.impedance())?;
        write_mode_table(&modes, &mut *buf)?;
        Ok(())
    })
}

pub fn iv(loaded: &Loaded, out: &mut Output) -> Result<(), CliError> {
    let config = &loaded.config;
    let section = config.iv.as_ref().ok_or_else(|| CliError::Config("this subcommand needs an [iv] section".into()))?;
    let junction = config.tunnel_junction()?;
    let biases = linear_grid("iv", section.from.value, section.to.value, section.step.value)?;
    let currents: Vec<f64> = biases
        .par_iter()
        .map(|&v| junction.qp_current(v))
        .collect::<Result<_, _>>()?;
    out.write("iv.tsv", |buf| {
        writeln!(
            buf,
            "# gap_eV\t{:.6e}\tdynes_eV\t{:.6e}\tr_tunnel_Ohm\t{:.6e}\ttemperature_K\t{:.6e}",
            junction.dos_left.gap() / E_CHARGE,
            junction.dos_left.dynes() / E_CHARGE,
            junction.r_tunnel,
            junction.temperature
        )?;
        writeln!(buf, "# voltage_V\tcurrent_A")?;
        for (v, i) in biases.iter().zip(&currents) {
            writeln!(buf, "{v:.6e}\t{i:.6e}")?;
        }
        Ok(())
    })
}

/// Single-photon absorption rate `λ²e^{−λ²} I(V + ħω/e)/e`, s⁻¹, straight from the junction integral.
fn junction_rate(config: &ScenarioConfig, bias: f64) -> Result<f64, CliError> {
    let m = config.mode_section()?;
    let junction = config.tunnel_junction()?;
    let current = junction.qp_current(bias + photon_energy(m.frequency.value) / E_CHARGE)?;
    Ok(single_photon_weight(m.coupling) * current.max(0.0) / E_CHARGE)
}

pub fn spectroscopy(loaded: &Loaded, out: &mut Output) -> Result<(), CliError> {
    let config = &loaded.config;
    let section = config
        .spectroscopy
        .as_ref()
        .ok_or_else(|| CliError::Config("this subcommand needs a [spectroscopy] section".into()))?;
    let m = config.mode_section()?;
    let biases = linear_grid("spectroscopy.bias", section.bias_from.value, section.bias_to.value, section.bias_step.value)?;
    let offsets = linear_grid(
        "spectroscopy.frequency",
        -section.span.value,
        section.span.value,
        section.frequency_step.value,
    )?;
    let rates: Vec<f64> = biases
        .par_iter()
        .map(|&v| junction_rate(config, v))
        .collect::<Result<_, _>>()?;
    out.write("spectroscopy.tsv", |buf| {
        writeln!(buf, "# bias_V\tfrequency_Hz\tkappa_j_MHz\ts11_sq\ts11_sq_dB")?;
        for (v, kj) in biases.iter().zip(&rates) {
            let set = RateSet::new(angular(m.kappa_c.value), angular(m.kappa_i.value), *kj)?;
            for df in &offsets {
                let r = s11(&set, angular(*df)).norm_sqr();
                writeln!(
                    buf,
                    "{v:.6e}\t{:.6e}\t{:.6e}\t{r:.6e}\t{:.6e}",
                    m.frequency.value + df,
                    kj / angular(1e6),
                    10.0 * r.log10()
                )?;
            }
        }
        Ok(())
    })
}

pub fn sweep(loaded: &Loaded, out: &mut Output) -> Result<(), CliError> {
    let config = &loaded.config;
    let section = config.sweep.as_ref().ok_or_else(|| CliError::Config("this subcommand needs a [sweep] section".into()))?;
    if let Some(bad) = section.steps.iter().find(|n| !(1..=4).contains(*n)) {
        return Err(CliError::Config(format!("sweep.steps: step {bad} outside 1..=4")));
    }
    if !(section.noise_relative >= 0.0) || !(section.noise_floor.value >= 0.0) {
        return Err(CliError::Config("sweep noise must be non-negative".into()));
    }
    let powers = linear_grid("sweep.power", section.power_from.value, section.power_to.value, section.power_step.value)?;
    let attenuation = section.attenuation.value;
    let model = config.detector()?;
    let mut rows = Vec::new();
    let mut data = Vec::new();
    for &step in &section.steps {
        let points = simulate_sweep(&model, step, &powers, attenuation)?;
        let currents = points.iter().map(|p| p.current).collect();
        data.push(PowerSweepData::new(step, model.step_bias(step)?, powers.clone(), currents)?);
        rows.push((step, points));
    }
    out.write("sweep.tsv", |buf| {
        writeln!(buf, "# attenuation_dB\t{attenuation:.6e}")?;
        writeln!(buf, "# step\tsource_power_dBm\tresonator_power_dBm\tphoton_flux_per_s\tcurrent_A\tn_ph")?;
        for (step, points) in &rows {
            for p in points {
                writeln!(
                    buf,
                    "{step}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}",
                    p.source_power,
                    p.source_power - attenuation,
                    p.flux,
                    p.current,
                    p.n_ph
                )?;
            }
        }
        Ok(())
    })?;
    let noise = NoiseModel {
        relative: section.noise_relative,
        floor: section.noise_floor.value,
    };
    let noisy = noise.relative > 0.0 || noise.floor > 0.0;
    let data = if noisy { add_noise(&data, noise, config.seed)? } else { data };
    out.write("sweep_data.tsv", |buf| {
        if noisy {
            writeln!(
                buf,
                "# noise_relative\t{:.6e}\tnoise_floor_A\t{:.6e}\tseed\t{}",
                noise.relative, noise.floor, config.seed
            )?;
        }
        write_sweeps(&data, &mut *buf)?;
        Ok(())
    })?;
    if section.compression {
        let (lo, hi) = COMPRESSION_WINDOW;
        let one = compression_point(&model, 1.0, lo, hi)?;
        let three = compression_point(&model, 3.0, lo, hi)?;
        out.write("compression.tsv", |buf| {
            writeln!(buf, "# drop_dB\tresonator_power_dBm\tsource_power_dBm")?;
            for (drop, p) in [(1.0, one), (3.0, three)] {
                writeln!(buf, "{drop:.6e}\t{p:.6e}\t{:.6e}", p + attenuation)?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

pub fn thermal(loaded: &Loaded, out: &mut Output) -> Result<(), CliError> {
    let config = &loaded.config;
    let section = config
        .thermal
        .as_ref()
        .ok_or_else(|| CliError::Config("this subcommand needs a [thermal] section".into()))?;
    let m = config.mode_section()?;
    let kappa_j = match section.kappa_j {
        Some(q) => angular(q.value),
        None => junction_rate(config, step_bias(config, 1)?)?,
    };
    let rates = RateSet::new(angular(m.kappa_c.value), angular(m.kappa_i.value), kappa_j)?;
    let temps = linear_grid("thermal.t", section.t_from.value, section.t_to.value, section.t_step.value)?;
    let f = m.frequency.value;
    let dark = section.dark_current.value;
    let mut rows = Vec::with_capacity(temps.len());
    for &t in &temps {
        rows.push((t, thermal_population(t, f, &rates)?, thermal_current(t, f, &rates, dark)?));
    }
    out.write("thermal.tsv", |buf| {
        writeln!(buf, "# kappa_j_MHz\t{:.6e}\tdark_current_A\t{dark:.6e}", kappa_j / angular(1e6))?;
        writeln!(buf, "# temperature_K\tn_ph\tcurrent_A")?;
        for (t, n, i) in &rows {
            writeln!(buf, "{t:.6e}\t{n:.6e}\t{i:.6e}")?;
        }
        Ok(())
    })
}

pub fn calibrate(loaded: &Loaded, out: &mut Output) -> Result<(), CliError> {
    let config = &loaded.config;
    let section = config
        .calibrate
        .as_ref()
        .ok_or_else(|| CliError::Config("this subcommand needs a [calibrate] section".into()))?;
    let path = loaded.dir.join(&section.data);
    let file = File::open(&path).map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    let data = read_sweeps(BufReader::new(file))
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let (lo, hi) = (section.attenuation_min.value, section.attenuation_max.value);
    if !(lo > 0.0 && hi > lo) {
        return Err(CliError::Config("calibrate: need 0 < attenuation_min < attenuation_max".into()));
    }
    let fit_config = FitConfig {
        sigma: SigmaModel {
            floor: section.sigma_floor.value,
            relative: section.sigma_relative,
        },
        attenuation_bounds: (lo, hi),
        starts: (0..6).map(|k| lo + (hi - lo) * k as f64 / 5.0).collect(),
        release_coupling: section.release_coupling,
        release_resistance: section.release_resistance,
        ..FitConfig::default()
    };
    let model = config.detector()?;
    let fit = fit_attenuation(&model, &data, &fit_config)?;
    out.write("calibration.tsv", |buf| {
        writeln!(buf, "# data\t{}", section.data.display())?;
        fit.write_text(&mut *buf)?;
        Ok(())
    })?;
    if let Some(s) = &section.surface {
        let couplings = spaced("surface.coupling", s.coupling_from, s.coupling_to, s.coupling_points)?;
        let resistances = spaced(
            "surface.resistance",
            s.resistance_from.value,
            s.resistance_to.value,
            s.resistance_points,
        )?;
        let guess = s.attenuation_guess.map_or(fit.attenuation_db, |q| q.value);
        let surface = chi2_surface(&model, &data, &couplings, &resistances, &fit_config, guess)?;
        out.write("surface.tsv", |buf| {
            surface.write_text(&mut *buf)?;
            Ok(())
        })?;
    }
    Ok(())
}

/// `points` values from `from` to `to` inclusive.
fn spaced(name: &str, from: f64, to: f64, points: usize) -> Result<Vec<f64>, CliError> {
    match points {
        0 => Err(CliError::Config(format!("{name}: need at least one point"))),
        1 => Ok(vec![from]),
        n => Ok((0..n).map(|k| from + (to - from) * k as f64 / (n - 1) as f64).collect()),
    }
}

pub fn steady(loaded: &Loaded, out: &mut Output) -> Result<(), CliError> {
    let config = &loaded.config;
    let section = config
        .steady
        .as_ref()
        .ok_or_else(|| CliError::Config("this subcommand needs a [steady] section".into()))?;
    let bias = match (section.bias, section.step) {
        (Some(v), None) => v.value,
        (None, Some(n)) => step_bias(config, n)?,
        _ => return Err(CliError::Config("steady: give exactly one of `bias` and `step`".into())),
    };
    let m = config.mode_section()?;
    let mut system = config.system(config.junction_model()?)?;
    let flux = dbm_to_watts(section.input_power.value) / photon_energy(m.frequency.value);
    system.bias = bias;
    system.drive = drive_from_flux(flux, angular(m.kappa_c.value))?;
    system.drive.detuning = angular(section.detuning.value);
    system.env.thermal_occupation = section.thermal_occupation;
    let result = match section.n_max {
        Some(n) => steady_state_at(&system.with_n_max(n)?)?,
        None => steady_state(&system)?,
    };
    out.write("steady.tsv", |buf| {
        writeln!(buf, "bias_V\t{bias:.6e}")?;
        writeln!(buf, "photon_flux_per_s\t{flux:.6e}")?;
        result.write_text(&mut *buf)?;
        Ok(())
    })
}
