//! Scenario configuration: one TOML document with a section per task.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use patdet_core::calibration::DetectorModel;
use patdet_core::constants::angular;
use patdet_core::junction::{CurrentTolerance, JunctionModel, TabulationGrid, TunnelJunction, DEFAULT_KK_ROI};
use patdet_core::lindblad::{LambShiftSign, SystemConfig, DEFAULT_TRUNCATION_CEILING};
use patdet_core::resonator::LineModel;

use crate::error::CliError;
use crate::units::*;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Seed for every random draw; `--seed` overrides it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub junction: Option<JunctionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<LineSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iv: Option<IvSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectroscopy: Option<SpectroscopySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal: Option<ThermalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<CalibrateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady: Option<SteadySection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionSection {
    pub gap: Q<Energy>,
    pub dynes: Q<Energy>,
    pub r_tunnel: Q<Resistance>,
    pub temperature: Q<Temperature>,
    /// Tabulation grid; the library defaults apply to missing entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_step: Option<Q<Voltage>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_max: Option<Q<Voltage>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse_step: Option<Q<Voltage>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse_max: Option<Q<Voltage>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSection {
    pub length: Q<Length>,
    pub width: Q<Length>,
    pub sheet_inductance: Q<SheetInductance>,
    pub capacitance_per_length: Q<CapacitancePerLength>,
    pub junction_capacitance: Q<Capacitance>,
    pub load_resistance: Q<Resistance>,
    #[serde(default = "default_n_modes")]
    pub n_modes: usize,
    /// Refit the junction capacitance so the first modes land on these frequencies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refit_targets: Option<Vec<Q<Frequency>>>,
    #[serde(default = "default_refit_lo")]
    pub refit_min: Q<Capacitance>,
    #[serde(default = "default_refit_hi")]
    pub refit_max: Q<Capacitance>,
}

fn default_n_modes() -> usize {
    7
}

fn default_refit_lo() -> Q<Capacitance> {
    Q::new(0.1e-15)
}

fn default_refit_hi() -> Q<Capacitance> {
    Q::new(20e-15)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambSign {
    AsPrinted,
    Flipped,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSection {
    pub frequency: Q<Frequency>,
    pub coupling: f64,
    /// κ_c/2π.
    pub kappa_c: Q<Frequency>,
    /// κ_i/2π.
    pub kappa_i: Q<Frequency>,
    #[serde(default = "yes")]
    pub lamb_shift: bool,
    #[serde(default = "as_printed")]
    pub lamb_shift_sign: LambSign,
    #[serde(default = "default_ceiling")]
    pub truncation_ceiling: usize,
}

fn yes() -> bool {
    true
}

fn as_printed() -> LambSign {
    LambSign::AsPrinted
}

fn default_ceiling() -> usize {
    DEFAULT_TRUNCATION_CEILING
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IvSection {
    pub from: Q<Voltage>,
    pub to: Q<Voltage>,
    pub step: Q<Voltage>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectroscopySection {
    pub bias_from: Q<Voltage>,
    pub bias_to: Q<Voltage>,
    pub bias_step: Q<Voltage>,
    /// Half-width of the probe window around the mode, as f − f_mode.
    pub span: Q<Frequency>,
    pub frequency_step: Q<Frequency>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Line attenuation from the source to the resonator input.
    pub attenuation: Q<Decibel>,
    #[serde(default = "all_steps")]
    pub steps: Vec<usize>,
    /// Source powers; an empty range gives an empty table.
    pub power_from: Q<PowerDbm>,
    pub power_to: Q<PowerDbm>,
    pub power_step: Q<Decibel>,
    /// Report the 1 dB and 3 dB compression points of the N = 1 step.
    #[serde(default)]
    pub compression: bool,
    /// Gaussian noise `floor + relative·|I|` added to the calibration-format copy.
    #[serde(default)]
    pub noise_relative: f64,
    #[serde(default = "zero_current")]
    pub noise_floor: Q<Current>,
}

fn all_steps() -> Vec<usize> {
    vec![1, 2, 3, 4]
}

fn zero_current() -> Q<Current> {
    Q::new(0.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSection {
    pub dark_current: Q<Current>,
    pub t_from: Q<Temperature>,
    pub t_to: Q<Temperature>,
    pub t_step: Q<Temperature>,
    /// κ_j/2π; computed from the junction at the N = 1 bias when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_j: Option<Q<Frequency>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSection {
    /// Sweep file, relative to the configuration file.
    pub data: PathBuf,
    #[serde(default = "default_sigma_floor")]
    pub sigma_floor: Q<Current>,
    #[serde(default = "default_sigma_relative")]
    pub sigma_relative: f64,
    #[serde(default = "default_a_min")]
    pub attenuation_min: Q<Decibel>,
    #[serde(default = "default_a_max")]
    pub attenuation_max: Q<Decibel>,
    #[serde(default)]
    pub release_coupling: bool,
    #[serde(default)]
    pub release_resistance: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<SurfaceSection>,
}

fn default_sigma_floor() -> Q<Current> {
    Q::new(50e-15)
}

fn default_sigma_relative() -> f64 {
    0.01
}

fn default_a_min() -> Q<Decibel> {
    Q::new(95.0)
}

fn default_a_max() -> Q<Decibel> {
    Q::new(120.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSection {
    pub coupling_from: f64,
    pub coupling_to: f64,
    pub coupling_points: usize,
    pub resistance_from: Q<Resistance>,
    pub resistance_to: Q<Resistance>,
    pub resistance_points: usize,
    /// Start of the per-cell attenuation fit; the best A-only fit when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attenuation_guess: Option<Q<Decibel>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadySection {
    /// Explicit bias; otherwise the bias of `step`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Q<Voltage>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    /// Power arriving at the resonator input.
    pub input_power: Q<PowerDbm>,
    #[serde(default = "zero_frequency")]
    pub detuning: Q<Frequency>,
    #[serde(default)]
    pub thermal_occupation: f64,
    /// Solve at this truncation instead of growing it automatically.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
}

fn zero_frequency() -> Q<Frequency> {
    Q::new(0.0)
}

/// A parsed configuration together with where it came from.
pub struct Loaded {
    pub config: ScenarioConfig,
    pub dir: PathBuf,
}

pub fn load(path: &Path, seed: Option<u64>) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config: ScenarioConfig =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, dir })
}

impl ScenarioConfig {
    /// Canonical SI rendering; this is what the output headers hash.
    pub fn resolved(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.resolved().as_bytes()))
    }

    pub fn junction_section(&self) -> Result<&JunctionSection, CliError> {
        self.junction.as_ref().ok_or_else(|| missing("junction"))
    }

    pub fn line_section(&self) -> Result<&LineSection, CliError> {
        self.line.as_ref().ok_or_else(|| missing("line"))
    }

    pub fn mode_section(&self) -> Result<&ModeSection, CliError> {
        self.mode.as_ref().ok_or_else(|| missing("mode"))
    }

    pub fn tunnel_junction(&self) -> Result<TunnelJunction, CliError> {
        let j = self.junction_section()?;
        Ok(TunnelJunction::symmetric(j.gap.value, j.dynes.value, j.r_tunnel.value, j.temperature.value)?)
    }

    /// Tabulates the junction and its Kramers-Kronig companion.
    pub fn junction_model(&self) -> Result<Arc<JunctionModel>, CliError> {
        let j = self.junction_section()?;
        let d = TabulationGrid::default();
        let grid = TabulationGrid {
            fine_step: j.fine_step.map_or(d.fine_step, |q| q.value),
            fine_max: j.fine_max.map_or(d.fine_max, |q| q.value),
            coarse_step: j.coarse_step.map_or(d.coarse_step, |q| q.value),
            coarse_max: j.coarse_max.map_or(d.coarse_max, |q| q.value),
        };
        let roi = DEFAULT_KK_ROI.min(grid.fine_max.max(grid.coarse_max));
        Ok(Arc::new(JunctionModel::build_with(
            self.tunnel_junction()?,
            &grid,
            CurrentTolerance::default(),
            Some(roi),
        )?))
    }

    /// Undriven system at zero bias.
    pub fn system(&self, junction: Arc<JunctionModel>) -> Result<SystemConfig, CliError> {
        let m = self.mode_section()?;
        let kappa_env = angular(m.kappa_c.value + m.kappa_i.value);
        let mut cfg = SystemConfig::new(junction, m.coupling, 0.0, m.frequency.value, kappa_env)?;
        cfg.include_lamb_shift = m.lamb_shift;
        cfg.lamb_shift_sign = match m.lamb_shift_sign {
            LambSign::AsPrinted => LambShiftSign::AsPrinted,
            LambSign::Flipped => LambShiftSign::Flipped,
        };
        cfg.truncation_ceiling = m.truncation_ceiling;
        Ok(cfg)
    }

    pub fn detector(&self) -> Result<DetectorModel, CliError> {
        let base = self.system(self.junction_model()?)?;
        Ok(DetectorModel::new(base, angular(self.mode_section()?.kappa_c.value))?)
    }

    pub fn line_model(&self) -> Result<LineModel, CliError> {
        let l = self.line_section()?;
        let line = LineModel {
            length: l.length.value,
            width: l.width.value,
            sheet_inductance: l.sheet_inductance.value,
            capacitance_per_length: l.capacitance_per_length.value,
            termination_capacitance: l.junction_capacitance.value,
            load_resistance: l.load_resistance.value,
        };
        line.validate()?;
        Ok(line)
    }
}

fn missing(section: &str) -> CliError {
    CliError::Config(format!("this subcommand needs a [{section}] section"))
}

/// `from, from + step, …` up to and including `to` (within rounding).
/// Empty when `to < from`.
pub fn linear_grid(name: &str, from: f64, to: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0) {
        return Err(CliError::Config(format!("{name}: step must be positive")));
    }
    if to < from {
        return Ok(Vec::new());
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    if n > 1_000_000 {
        return Err(CliError::Config(format!("{name}: more than a million grid points")));
    }
    Ok((0..=n).map(|k| from + k as f64 * step).collect())
}
