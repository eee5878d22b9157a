//! Superconducting tunnel junction: density of states, quasiparticle
//! current, Kramers-Kronig companion and resistance renormalization.

mod dos;
mod hilbert;
mod iv;

pub use dos::DynesDos;
pub use hilbert::{hilbert_on_grid, kk_transform};
pub use iv::{
    renormalized_resistance, tabulate, CurrentTolerance, CurveKind, IvCurve, TabulationGrid, TunnelJunction,
};

use crate::error::Result;

/// A junction together with its tabulated current and (optionally) the
/// Kramers-Kronig companion, as consumed by the master equation.
#[derive(Debug, Clone)]
pub struct JunctionModel {
    pub junction: TunnelJunction,
    pub iv: IvCurve,
    pub kk: Option<IvCurve>,
}

/// Half-width of the region where the Kramers-Kronig companion is kept.
pub const DEFAULT_KK_ROI: f64 = 2e-3;

impl JunctionModel {
    /// Tabulates the junction on the default grid and transforms it on
    /// `|V| <= 2 mV`.
    pub fn build(junction: TunnelJunction) -> Result<Self> {
        Self::build_with(junction, &TabulationGrid::default(), CurrentTolerance::default(), Some(DEFAULT_KK_ROI))
    }

    pub fn build_with(
        junction: TunnelJunction,
        grid: &TabulationGrid,
        tol: CurrentTolerance,
        kk_roi: Option<f64>,
    ) -> Result<Self> {
        let iv = tabulate(&junction, grid, tol)?;
        let kk = kk_roi.map(|roi| kk_transform(&iv, roi)).transpose()?;
        Ok(Self { junction, iv, kk })
    }

    /// Same junction at another tunnel resistance; currents scale as 1/R_T.
    pub fn with_resistance(&self, r_tunnel: f64) -> Result<Self> {
        let junction = self.junction.with_resistance(r_tunnel)?;
        let factor = self.junction.r_tunnel / r_tunnel;
        Ok(Self {
            junction,
            iv: self.iv.scaled(factor),
            kk: self.kk.as_ref().map(|c| c.scaled(factor)),
        })
    }
}
