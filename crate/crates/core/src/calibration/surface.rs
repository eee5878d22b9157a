//! Reduced χ² over a (λ, R_T) grid with the attenuation fitted per cell.

use std::io::Write;

use rayon::prelude::*;

use super::fit::profile_attenuation;
use super::{data_efficiency, DetectorModel, FitConfig, PowerSweepData};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceCell {
    pub coupling: f64,
    pub r_tunnel: f64,
    pub attenuation_db: f64,
    pub chi2_reduced: f64,
    /// Measured single-photon efficiency at this cell's attenuation.
    pub efficiency: f64,
    /// Set when the cell could not be fitted; the numbers above are then NaN.
    pub error: Option<String>,
}

impl SurfaceCell {
    pub fn is_valid(&self) -> bool {
        self.error.is_none() && self.chi2_reduced.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chi2Surface {
    pub couplings: Vec<f64>,
    pub resistances: Vec<f64>,
    /// Row-major: `cells[i * resistances.len() + j]` is `(couplings[i], resistances[j])`.
    pub cells: Vec<SurfaceCell>,
    pub dof: usize,
    pub min_index: usize,
    /// `2·min χ_r²`.
    pub threshold: f64,
    /// Indices of cells with `χ_r² ≤ threshold`.
    pub inside: Vec<usize>,
    /// Threshold contour as line segments in (λ, R_T).
    pub contour: Vec<[(f64, f64); 2]>,
    /// Smallest and largest efficiency over the inside cells.
    pub efficiency_range: (f64, f64),
    pub attenuation_range: (f64, f64),
}

impl Chi2Surface {
    pub fn cell(&self, i: usize, j: usize) -> &SurfaceCell {
        &self.cells[i * self.resistances.len() + j]
    }

    pub fn minimum(&self) -> &SurfaceCell {
        &self.cells[self.min_index]
    }

    /// Standard deviation of the efficiency over the inside cells.
    pub fn efficiency_spread(&self) -> f64 {
        self.inside_std(|c| c.efficiency)
    }

    /// Standard deviation of the fitted attenuation over the inside cells, dB.
    pub fn attenuation_spread(&self) -> f64 {
        self.inside_std(|c| c.attenuation_db)
    }

    fn inside_std(&self, f: impl Fn(&SurfaceCell) -> f64) -> f64 {
        let n = self.inside.len();
        if n < 2 {
            return 0.0;
        }
        let vals: Vec<f64> = self.inside.iter().map(|&k| f(&self.cells[k])).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let m = self.minimum();
        writeln!(out, "min_coupling\t{:.6e}", m.coupling)?;
        writeln!(out, "min_r_tunnel_ohm\t{:.6e}", m.r_tunnel)?;
        writeln!(out, "min_attenuation_dB\t{:.6e}", m.attenuation_db)?;
        writeln!(out, "min_chi2_reduced\t{:.6e}", m.chi2_reduced)?;
        writeln!(out, "threshold\t{:.6e}", self.threshold)?;
        writeln!(out, "efficiency_range\t{:.6e}\t{:.6e}", self.efficiency_range.0, self.efficiency_range.1)?;
        writeln!(out, "efficiency_spread\t{:.6e}", self.efficiency_spread())?;
        writeln!(out, "attenuation_spread_dB\t{:.6e}", self.attenuation_spread())?;
        writeln!(out, "attenuation_range_dB\t{:.6e}\t{:.6e}", self.attenuation_range.0, self.attenuation_range.1)?;
        writeln!(out, "# coupling\tr_tunnel_ohm\tattenuation_dB\tchi2_reduced\tefficiency\tinside")?;
        for (k, c) in self.cells.iter().enumerate() {
            match &c.error {
                None => writeln!(
                    out,
                    "{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{}",
                    c.coupling,
                    c.r_tunnel,
                    c.attenuation_db,
                    c.chi2_reduced,
                    c.efficiency,
                    self.inside.contains(&k) as u8
                )?,
                Some(e) => writeln!(out, "{:.6e}\t{:.6e}\tinvalid\t{e}", c.coupling, c.r_tunnel)?,
            }
        }
        writeln!(out, "# contour segments: coupling_a\tr_a\tcoupling_b\tr_b")?;
        for [(x0, y0), (x1, y1)] in &self.contour {
            writeln!(out, "segment\t{x0:.6e}\t{y0:.6e}\t{x1:.6e}\t{y1:.6e}")?;
        }
        Ok(())
    }
}

/// Fits the attenuation alone at every `(λ, R_T)` of the grid, starting
/// from `attenuation_guess`, and extracts the `χ_r² ≤ 2·min` region.
pub fn chi2_surface(
    model: &DetectorModel,
    data: &[PowerSweepData],
    couplings: &[f64],
    resistances: &[f64],
    config: &FitConfig,
    attenuation_guess: f64,
) -> Result<Chi2Surface> {
    if couplings.is_empty() || resistances.is_empty() {
        return Err(invalid("grid", "coupling and resistance grids must be non-empty"));
    }
    if couplings.iter().any(|l| !(*l > 0.0 && *l <= 1.5)) {
        return Err(invalid("couplings", "must lie in (0, 1.5]"));
    }
    if resistances.iter().any(|r| !(*r > 0.0)) {
        return Err(invalid("resistances", "must be positive"));
    }
    let n_points: usize = data.iter().map(|d| d.len()).sum();
    if n_points <= 1 {
        return Err(Error::DegenerateData("need more than one data point".into()));
    }
    let dof = n_points - 1;
    let mode_hz = model.mode_frequency();
    let grid: Vec<(f64, f64)> = couplings
        .iter()
        .flat_map(|&l| resistances.iter().map(move |&r| (l, r)))
        .collect();
    let cells: Vec<SurfaceCell> = grid
        .par_iter()
        .map(|&(l, r)| {
            let fitted = model
                .with_coupling(l)
                .and_then(|m| m.with_resistance(r))
                .and_then(|m| profile_attenuation(&m, data, config, attenuation_guess));
            match fitted {
                Ok((a, chi2, table)) => SurfaceCell {
                    coupling: l,
                    r_tunnel: r,
                    attenuation_db: a,
                    chi2_reduced: chi2 / dof as f64,
                    efficiency: data_efficiency(&table, data, config.sigma, mode_hz, a),
                    error: None,
                },
                Err(e) => SurfaceCell {
                    coupling: l,
                    r_tunnel: r,
                    attenuation_db: f64::NAN,
                    chi2_reduced: f64::NAN,
                    efficiency: f64::NAN,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let min_index = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_valid())
        .min_by(|a, b| a.1.chi2_reduced.total_cmp(&b.1.chi2_reduced))
        .map(|(k, _)| k)
        .ok_or_else(|| Error::DegenerateData("no cell of the surface could be fitted".into()))?;
    let threshold = 2.0 * cells[min_index].chi2_reduced;
    let inside: Vec<usize> = (0..cells.len())
        .filter(|&k| cells[k].is_valid() && cells[k].chi2_reduced <= threshold)
        .collect();
    let range = |f: &dyn Fn(&SurfaceCell) -> f64| {
        inside
            .iter()
            .map(|&k| f(&cells[k]))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let efficiency_range = range(&|c| c.efficiency);
    let attenuation_range = range(&|c| c.attenuation_db);
    let field: Vec<f64> = cells
        .iter()
        .map(|c| if c.is_valid() { c.chi2_reduced - threshold } else { f64::NAN })
        .collect();
    let contour = marching_squares(couplings, resistances, &field);
    Ok(Chi2Surface {
        couplings: couplings.to_vec(),
        resistances: resistances.to_vec(),
        cells,
        dof,
        min_index,
        threshold,
        inside,
        contour,
        efficiency_range,
        attenuation_range,
    })
}

/// Zero level of `field` (row-major over `xs × ys`) as line segments.
/// Squares touching an invalid (NaN) node are skipped.
fn marching_squares(xs: &[f64], ys: &[f64], field: &[f64]) -> Vec<[(f64, f64); 2]> {
    let ny = ys.len();
    let at = |i: usize, j: usize| field[i * ny + j];
    let mut segments = Vec::new();
    for i in 0..xs.len().saturating_sub(1) {
        for j in 0..ny.saturating_sub(1) {
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let vals: Vec<f64> = corners.iter().map(|&(a, b)| at(a, b)).collect();
            if vals.iter().any(|v| v.is_nan()) {
                continue;
            }
            let mut crossings = Vec::new();
            for e in 0..4 {
                let (p, q) = (corners[e], corners[(e + 1) % 4]);
                let (fp, fq) = (vals[e], vals[(e + 1) % 4]);
                if (fp <= 0.0) != (fq <= 0.0) {
                    let t = fp / (fp - fq);
                    let x = xs[p.0] + t * (xs[q.0] - xs[p.0]);
                    let y = ys[p.1] + t * (ys[q.1] - ys[p.1]);
                    crossings.push((x, y));
                }
            }
            for pair in crossings.chunks_exact(2) {
                segments.push([pair[0], pair[1]]);
            }
        }
    }
    segments
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contour_of_a_disc() {
        let xs: Vec<f64> = (0..=20).map(|k| -1.0 + 0.1 * k as f64).collect();
        let ys = xs.clone();
        let field: Vec<f64> = xs
            .iter()
            .flat_map(|&x| ys.iter().map(move |&y| x * x + y * y - 0.5))
            .collect();
        let seg = marching_squares(&xs, &ys, &field);
        assert!(!seg.is_empty());
        for s in &seg {
            for (x, y) in s {
                assert!(((x * x + y * y).sqrt() - 0.5f64.sqrt()).abs() < 0.02);
            }
        }
    }

    #[test]
    fn contour_skips_invalid_nodes() {
        let xs = [0.0, 1.0];
        let ys = [0.0, 1.0];
        assert!(marching_squares(&xs, &ys, &[-1.0, 1.0, f64::NAN, 1.0]).is_empty());
        assert_eq!(marching_squares(&xs, &ys, &[-1.0, 1.0, 1.0, 1.0]).len(), 1);
    }
}
