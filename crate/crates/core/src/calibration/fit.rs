//! Forward tables and the least-squares fit of the line attenuation.

use std::cell::RefCell;
use std::io::Write;

use rayon::prelude::*;

use super::{source_power_to_flux, DetectorModel, PowerSweepData};
use crate::constants::{photon_energy, E_CHARGE};
use crate::error::{invalid, Error, Result};
use crate::interp::Pchip;
use crate::solve::{brent_min, brent_root};

/// Per-point uncertainty `floor + relative·|I|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaModel {
    /// A.
    pub floor: f64,
    pub relative: f64,
}

impl Default for SigmaModel {
    fn default() -> Self {
        Self {
            floor: 50e-15,
            relative: 0.01,
        }
    }
}

impl SigmaModel {
    pub fn sigma(&self, current: f64) -> f64 {
        self.floor + self.relative * current.abs()
    }
}

/// Powers at the resonator input (dBm) on which forward tables are solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableGrid {
    pub lo_dbm: f64,
    pub hi_dbm: f64,
    pub step_db: f64,
}

impl Default for TableGrid {
    /// The upper end keeps the Fock space under the default truncation ceiling.
    fn default() -> Self {
        Self {
            lo_dbm: -150.0,
            hi_dbm: -108.0,
            step_db: 1.0,
        }
    }
}

impl TableGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step_db > 0.0) || !(self.hi_dbm > self.lo_dbm) {
            return Err(invalid("table", "need step_db > 0 and hi_dbm > lo_dbm"));
        }
        let n = ((self.hi_dbm - self.lo_dbm) / self.step_db + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| self.lo_dbm + k as f64 * self.step_db).collect())
    }

    /// Sub-grid of `self` covering the data for attenuations in `[a_lo, a_hi]`,
    /// aligned to the nodes of `self`.
    pub fn covering(&self, data: &[PowerSweepData], a_lo: f64, a_hi: f64) -> TableGrid {
        let (pmin, pmax) = data
            .iter()
            .flat_map(|d| d.source_powers.iter())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
        let snap_down = |x: f64| self.lo_dbm + ((x - self.lo_dbm) / self.step_db).floor() * self.step_db;
        let snap_up = |x: f64| self.lo_dbm + ((x - self.lo_dbm) / self.step_db).ceil() * self.step_db;
        let mut lo = snap_down(pmin - a_hi).max(self.lo_dbm);
        let mut hi = snap_up(pmax - a_lo).min(self.hi_dbm);
        if hi - lo < self.step_db {
            hi = (lo + self.step_db).min(self.hi_dbm);
            lo = hi - self.step_db;
        }
        TableGrid {
            lo_dbm: lo,
            hi_dbm: hi,
            step_db: self.step_db,
        }
    }
}

#[derive(Debug, Clone)]
struct StepCurve {
    step: usize,
    bias: f64,
    /// log10 current against log10 flux.
    curve: Pchip,
}

impl StepCurve {
    fn log_current(&self, log_flux: f64) -> f64 {
        let (lo, hi) = (self.curve.lo(), self.curve.hi());
        if log_flux > hi {
            // saturated: hold the last value
            *self.curve.ys().last().unwrap()
        } else if log_flux < lo {
            let xs = self.curve.xs();
            let ys = self.curve.ys();
            let slope = (ys[1] - ys[0]) / (xs[1] - xs[0]);
            ys[0] + slope * (log_flux - lo)
        } else {
            self.curve.eval(log_flux)
        }
    }
}

/// Steady-state currents of each requested step on a power grid,
/// interpolated in log-log.
#[derive(Debug, Clone)]
pub struct ForwardTable {
    curves: Vec<StepCurve>,
    efficiency: f64,
    grid: TableGrid,
}

impl ForwardTable {
    /// Solves `model` for each `(step, bias)` on `grid`.
    pub fn build(model: &DetectorModel, keys: &[(usize, f64)], grid: &TableGrid) -> Result<Self> {
        let powers = grid.points()?;
        let hw = photon_energy(model.mode_frequency());
        let fluxes: Vec<f64> = powers.iter().map(|p| 10f64.powf((p - 30.0) / 10.0) / hw).collect();
        let log_flux: Vec<f64> = fluxes.iter().map(|f| f.log10()).collect();
        let curves = keys
            .par_iter()
            .map(|&(step, bias)| {
                let pts = model.responses(bias, &fluxes)?;
                let mut ys = Vec::with_capacity(pts.len());
                for (p, dbm) in pts.iter().zip(&powers) {
                    if !(p.current > 0.0) {
                        return Err(Error::AtPower {
                            power_dbm: *dbm,
                            source: Box::new(Error::DegenerateData(format!(
                                "step {step} model current {:.3e} A is not positive",
                                p.current
                            ))),
                        });
                    }
                    ys.push(p.current.log10());
                }
                Ok(StepCurve {
                    step,
                    bias,
                    curve: Pchip::new(log_flux.clone(), ys)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            curves,
            efficiency: model.linear_efficiency()?,
            grid: *grid,
        })
    }

    pub fn grid(&self) -> &TableGrid {
        &self.grid
    }

    /// Low-power efficiency of the model the table was built from.
    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    fn index(&self, step: usize, bias: f64) -> Result<usize> {
        self.curves
            .iter()
            .position(|c| c.step == step && (c.bias - bias).abs() <= 1e-12 * bias.abs().max(1e-6))
            .ok_or_else(|| invalid("data", format!("no forward curve for step {step} at bias {bias:.6e} V")))
    }

    /// Model current for a step at an incoming flux.
    pub fn current(&self, step: usize, bias: f64, flux: f64) -> Result<f64> {
        let k = self.index(step, bias)?;
        Ok(10f64.powf(self.curves[k].log_current(flux.log10())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub sigma: SigmaModel,
    /// Search range of the attenuation, dB.
    pub attenuation_bounds: (f64, f64),
    /// Starting attenuations of the multistart search, dB.
    pub starts: Vec<f64>,
    pub release_coupling: bool,
    pub release_resistance: bool,
    pub coupling_bounds: (f64, f64),
    /// Ω.
    pub resistance_bounds: (f64, f64),
    pub table: TableGrid,
    /// Convergence tolerance on the attenuation, dB.
    pub attenuation_tol: f64,
    /// Convergence tolerance on λ and on ln R_T.
    pub parameter_tol: f64,
    /// Half-width of the attenuation window around the current estimate
    /// while λ or R_T are being moved, dB.
    pub profile_window_db: f64,
    pub max_sweeps: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            sigma: SigmaModel::default(),
            attenuation_bounds: (95.0, 120.0),
            starts: (0..=5).map(|k| 95.0 + 5.0 * k as f64).collect(),
            release_coupling: false,
            release_resistance: false,
            coupling_bounds: (0.3, 1.5),
            resistance_bounds: (0.5e6, 5e6),
            table: TableGrid::default(),
            attenuation_tol: 1e-4,
            parameter_tol: 1e-3,
            profile_window_db: 2.0,
            max_sweeps: 8,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        let (a, b) = self.attenuation_bounds;
        if !(a > 0.0 && b > a) {
            return Err(invalid("attenuation_bounds", "need 0 < lo < hi"));
        }
        if self.starts.iter().any(|s| !(*s >= a && *s <= b)) {
            return Err(invalid("starts", "must lie inside attenuation_bounds"));
        }
        let (l0, l1) = self.coupling_bounds;
        if !(l0 > 0.0 && l1 > l0 && l1 <= 1.5) {
            return Err(invalid("coupling_bounds", "need 0 < lo < hi <= 1.5"));
        }
        let (r0, r1) = self.resistance_bounds;
        if !(r0 > 0.0 && r1 > r0) {
            return Err(invalid("resistance_bounds", "need 0 < lo < hi"));
        }
        if !(self.sigma.floor >= 0.0 && self.sigma.relative >= 0.0 && self.sigma.floor + self.sigma.relative > 0.0) {
            return Err(invalid("sigma", "floor and relative must be non-negative and not both zero"));
        }
        if !(self.profile_window_db > 0.0) {
            return Err(invalid("profile_window_db", "must be positive"));
        }
        Ok(())
    }

    fn free_parameters(&self) -> usize {
        1 + self.release_coupling as usize + self.release_resistance as usize
    }
}

/// Region where `χ_r² ≤ 2·min`, projected on the attenuation at the best
/// λ and R_T, and the efficiencies at its ends.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyRegion {
    pub attenuation: (f64, f64),
    pub efficiency: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub attenuation_db: f64,
    /// Measured single-photon current over `eφ` in the linear regime, with
    /// `φ` from the fitted attenuation.
    pub quantum_efficiency: f64,
    /// Low-power efficiency of the best-fit model.
    pub model_efficiency: f64,
    pub chi2: f64,
    pub chi2_reduced: f64,
    pub dof: usize,
    pub coupling: f64,
    pub r_tunnel: f64,
    pub released_coupling: bool,
    pub released_resistance: bool,
    /// Local minima reached from each start of the attenuation search, dB.
    pub multistart_minima: Vec<f64>,
    /// Coordinate-descent sweeps used; zero for an attenuation-only fit.
    pub sweeps: usize,
    pub uncertainty_region: UncertaintyRegion,
}

impl FitResult {
    /// Released parameters with their fitted values.
    pub fn free_params(&self) -> Vec<(&'static str, f64)> {
        let mut v = Vec::new();
        if self.released_coupling {
            v.push(("coupling", self.coupling));
        }
        if self.released_resistance {
            v.push(("r_tunnel_ohm", self.r_tunnel));
        }
        v
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "attenuation_dB\t{:.6e}", self.attenuation_db)?;
        writeln!(out, "quantum_efficiency\t{:.6e}", self.quantum_efficiency)?;
        writeln!(out, "model_efficiency\t{:.6e}", self.model_efficiency)?;
        writeln!(out, "chi2\t{:.6e}", self.chi2)?;
        writeln!(out, "chi2_reduced\t{:.6e}", self.chi2_reduced)?;
        writeln!(out, "dof\t{}", self.dof)?;
        writeln!(out, "coupling\t{:.6e}", self.coupling)?;
        writeln!(out, "r_tunnel_ohm\t{:.6e}", self.r_tunnel)?;
        for (name, v) in self.free_params() {
            writeln!(out, "free\t{name}\t{v:.6e}")?;
        }
        writeln!(out, "sweeps\t{}", self.sweeps)?;
        for a in &self.multistart_minima {
            writeln!(out, "multistart_minimum_dB\t{a:.6e}")?;
        }
        let r = &self.uncertainty_region;
        writeln!(out, "attenuation_interval_dB\t{:.6e}\t{:.6e}", r.attenuation.0, r.attenuation.1)?;
        writeln!(out, "efficiency_interval\t{:.6e}\t{:.6e}", r.efficiency.0, r.efficiency.1)?;
        Ok(())
    }
}

fn check_data(data: &[PowerSweepData]) -> Result<usize> {
    let mut steps: Vec<usize> = data.iter().map(|d| d.step_index).collect();
    steps.sort_unstable();
    steps.dedup();
    if steps.len() < 2 {
        return Err(Error::DegenerateData("need sweeps of at least two different steps".into()));
    }
    if let Some(d) = data.iter().find(|d| d.len() < 2) {
        return Err(Error::DegenerateData(format!(
            "step {} has {} power point(s); at least two are needed",
            d.step_index,
            d.len()
        )));
    }
    Ok(data.iter().map(|d| d.len()).sum())
}

fn keys(data: &[PowerSweepData]) -> Vec<(usize, f64)> {
    let mut k: Vec<(usize, f64)> = Vec::new();
    for d in data {
        if !k.iter().any(|&(s, b)| s == d.step_index && b == d.bias) {
            k.push((d.step_index, d.bias));
        }
    }
    k
}

/// χ² of `data` against a table; the table must hold every (step, bias).
pub(super) struct Objective<'a> {
    table: &'a ForwardTable,
    data: &'a [PowerSweepData],
    curve_of: Vec<usize>,
    sigma: SigmaModel,
    mode_hz: f64,
}

impl<'a> Objective<'a> {
    pub(super) fn new(table: &'a ForwardTable, data: &'a [PowerSweepData], sigma: SigmaModel, mode_hz: f64) -> Result<Self> {
        let curve_of = data.iter().map(|d| table.index(d.step_index, d.bias)).collect::<Result<_>>()?;
        Ok(Self {
            table,
            data,
            curve_of,
            sigma,
            mode_hz,
        })
    }

    pub(super) fn chi2(&self, attenuation_db: f64) -> f64 {
        let mut total = 0.0;
        for (d, &k) in self.data.iter().zip(&self.curve_of) {
            let curve = &self.table.curves[k];
            for (&p, &i) in d.source_powers.iter().zip(&d.currents) {
                let flux = source_power_to_flux(p, attenuation_db, self.mode_hz);
                let model = 10f64.powf(curve.log_current(flux.log10()));
                total += ((model - i) / self.sigma.sigma(i)).powi(2);
            }
        }
        total
    }

    /// Minimum near `start`; the window is moved while the minimum sits on
    /// its edge, but never beyond `bounds`.
    pub(super) fn local_min(&self, start: f64, half_width: f64, bounds: (f64, f64), tol: f64) -> Result<(f64, f64)> {
        let mut centre = start;
        for _ in 0..64 {
            let lo = (centre - half_width).max(bounds.0);
            let hi = (centre + half_width).min(bounds.1);
            let (x, fx) = brent_min(|a| self.chi2(a), lo, hi, tol, 500)?;
            let edge = 20.0 * tol;
            let stuck_lo = x - lo < edge && lo > bounds.0;
            let stuck_hi = hi - x < edge && hi < bounds.1;
            if !(stuck_lo || stuck_hi) {
                return Ok((x, fx));
            }
            centre = x;
        }
        Err(Error::FitDiverged {
            reason: "attenuation minimum kept leaving the search window".into(),
            last: vec![centre],
        })
    }

    /// Attenuation interval where χ² stays below `threshold`, found by
    /// walking out from `best` and refining the crossing.
    pub(super) fn interval(&self, best: f64, threshold: f64, bounds: (f64, f64)) -> Result<(f64, f64)> {
        let g = |a: f64| self.chi2(a) - threshold;
        let mut ends = [best, best];
        for (k, dir) in [-1.0f64, 1.0].into_iter().enumerate() {
            let limit = if dir < 0.0 { bounds.0 } else { bounds.1 };
            let mut inner = best;
            let mut stepsize = 0.01;
            loop {
                let outer = (inner + dir * stepsize).clamp(bounds.0.min(bounds.1), bounds.1.max(bounds.0));
                if g(outer) > 0.0 {
                    let (a, b) = if dir < 0.0 { (outer, inner) } else { (inner, outer) };
                    ends[k] = brent_root(g, a, b, 1e-6, 200)?;
                    break;
                }
                if (outer - limit).abs() < 1e-12 {
                    ends[k] = limit;
                    break;
                }
                inner = outer;
                stepsize *= 1.5;
            }
        }
        Ok((ends[0], ends[1]))
    }
}

/// Measured single-photon efficiency at `attenuation_db`: the model's
/// low-power efficiency scaled by the weighted ratio of measured to model
/// current over the step-1 points the model places within 10% of its
/// linear response. Falls back to the model efficiency when no such point
/// exists.
pub fn data_efficiency(table: &ForwardTable, data: &[PowerSweepData], sigma: SigmaModel, mode_hz: f64, attenuation_db: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for d in data.iter().filter(|d| d.step_index == 1) {
        for (&p, &i) in d.source_powers.iter().zip(&d.currents) {
            let flux = source_power_to_flux(p, attenuation_db, mode_hz);
            let Ok(model) = table.current(1, d.bias, flux) else {
                continue;
            };
            if model / (E_CHARGE * flux) < 0.9 * table.efficiency() {
                continue;
            }
            let w = sigma.sigma(i).powi(-2);
            num += w * i * model;
            den += w * model * model;
        }
    }
    if den > 0.0 {
        table.efficiency() * num / den
    } else {
        table.efficiency()
    }
}

/// Best attenuation for a fixed model, restricted to `window` around `centre`.
pub(super) fn profile_attenuation(
    model: &DetectorModel,
    data: &[PowerSweepData],
    config: &FitConfig,
    centre: f64,
) -> Result<(f64, f64, ForwardTable)> {
    let (b0, b1) = config.attenuation_bounds;
    let w = config.profile_window_db;
    let lo = (centre - w).max(b0);
    let hi = (centre + w).min(b1);
    let grid = config.table.covering(data, lo, hi);
    let table = ForwardTable::build(model, &keys(data), &grid)?;
    let obj = Objective::new(&table, data, config.sigma, model.mode_frequency())?;
    let (a, c) = obj.local_min(centre, w, (lo, hi), config.attenuation_tol)?;
    Ok((a, c, table))
}

/// Scalar line search of `param` with the attenuation profiled out.
/// Returns the new value and whether it sits on the edge of the bracket.
fn line_search<F>(eval: F, current: f64, half_width: f64, bounds: (f64, f64), tol: f64) -> Result<(f64, bool)>
where
    F: Fn(f64) -> Result<f64>,
{
    let failure = RefCell::new(None);
    let f = |x: f64| match eval(x) {
        Ok(c) => c,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::MAX
        }
    };
    let lo = (current - half_width).max(bounds.0);
    let hi = (current + half_width).min(bounds.1);
    let (x, _) = brent_min(f, lo, hi, tol, 200)?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let edge = (x - lo < 20.0 * tol && lo > bounds.0) || (hi - x < 20.0 * tol && hi < bounds.1);
    Ok((x, edge))
}

/// Fits the attenuation (and λ, R_T when released) to the sweeps.
pub fn fit_attenuation(model: &DetectorModel, data: &[PowerSweepData], config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let n_points = check_data(data)?;
    let n_free = config.free_parameters();
    if n_points <= n_free {
        return Err(Error::DegenerateData(format!("{n_points} points for {n_free} parameters")));
    }
    let mode_hz = model.mode_frequency();
    let bounds = config.attenuation_bounds;

    // global attenuation search on the full table
    let full = config.table.covering(data, bounds.0, bounds.1);
    let table = ForwardTable::build(model, &keys(data), &full)?;
    let obj = Objective::new(&table, data, config.sigma, mode_hz)?;
    let minima: Vec<(f64, f64)> = config
        .starts
        .iter()
        .map(|&s| obj.local_min(s, 2.5, bounds, config.attenuation_tol))
        .collect::<Result<_>>()?;
    let &(mut a, _) = minima
        .iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .ok_or_else(|| invalid("starts", "at least one start is required"))?;

    let mut model = model.clone();
    let mut sweeps = 0;
    if config.release_coupling || config.release_resistance {
        let mut lambda = model.coupling();
        let mut log_r = model.r_tunnel().ln();
        let r_bounds = (config.resistance_bounds.0.ln(), config.resistance_bounds.1.ln());
        let tol = config.parameter_tol;
        loop {
            if sweeps == config.max_sweeps {
                return Err(Error::FitDiverged {
                    reason: format!("coordinate descent did not settle in {} sweeps", config.max_sweeps),
                    last: vec![a, lambda, log_r.exp()],
                });
            }
            sweeps += 1;
            let (a_prev, l_prev, r_prev) = (a, lambda, log_r);
            let mut on_edge = false;
            if config.release_coupling {
                let base = model.clone();
                let eval = |l: f64| Ok(profile_attenuation(&base.with_coupling(l)?, data, config, a)?.1);
                let (l, edge) = line_search(eval, lambda, 0.05, config.coupling_bounds, tol)?;
                lambda = l;
                on_edge |= edge;
                model = model.with_coupling(lambda)?;
            }
            if config.release_resistance {
                let base = model.clone();
                let eval = |x: f64| Ok(profile_attenuation(&base.with_resistance(x.exp())?, data, config, a)?.1);
                let (x, edge) = line_search(eval, log_r, 0.08, r_bounds, tol)?;
                log_r = x;
                on_edge |= edge;
                model = model.with_resistance(log_r.exp())?;
            }
            a = profile_attenuation(&model, data, config, a)?.0;
            let settled = (a - a_prev).abs() < 10.0 * config.attenuation_tol.max(1e-3)
                && (lambda - l_prev).abs() < 2.0 * tol
                && (log_r - r_prev).abs() < 2.0 * tol;
            if settled && !on_edge {
                break;
            }
        }
    }

    // final table around the optimum for the derived quantities
    let (a, chi2, table) = profile_attenuation(&model, data, config, a)?;
    let obj = Objective::new(&table, data, config.sigma, mode_hz)?;
    let window = (
        (a - config.profile_window_db).max(bounds.0),
        (a + config.profile_window_db).min(bounds.1),
    );
    let attenuation = if chi2 > 0.0 {
        obj.interval(a, 2.0 * chi2, window)?
    } else {
        (a, a)
    };
    let eff = |x: f64| data_efficiency(&table, data, config.sigma, mode_hz, x);
    let dof = n_points - n_free;
    Ok(FitResult {
        attenuation_db: a,
        quantum_efficiency: eff(a),
        model_efficiency: table.efficiency(),
        chi2,
        chi2_reduced: chi2 / dof as f64,
        dof,
        coupling: model.coupling(),
        r_tunnel: model.r_tunnel(),
        released_coupling: config.release_coupling,
        released_resistance: config.release_resistance,
        multistart_minima: minima.iter().map(|m| m.0).collect(),
        sweeps,
        uncertainty_region: UncertaintyRegion {
            attenuation,
            efficiency: (eff(attenuation.0), eff(attenuation.1)),
        },
    })
}
