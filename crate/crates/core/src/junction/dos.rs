//! Dynes-broadened BCS density of states.

use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Normalized quasiparticle density of states of one electrode.
///
/// Energies are in joules. A zero Dynes parameter gives the sharp BCS
/// result, with square-root divergences at `|E| = gap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynesDos {
    gap: f64,
    dynes: f64,
}

impl DynesDos {
    pub fn new(gap: f64, dynes: f64) -> Result<Self> {
        if !(gap > 0.0) || !gap.is_finite() {
            return Err(invalid("gap", format!("must be positive and finite, got {gap:e}")));
        }
        if !(dynes >= 0.0) || !dynes.is_finite() {
            return Err(invalid("dynes", format!("must be non-negative and finite, got {dynes:e}")));
        }
        Ok(Self { gap, dynes })
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn dynes(&self) -> f64 {
        self.dynes
    }

    /// `Re[z / sqrt(z^2 - gap^2)]` with `z = E + i dynes`, on the branch with
    /// non-negative imaginary part of the root.
    pub fn value(&self, energy: f64) -> f64 {
        if self.dynes == 0.0 {
            let a = energy.abs();
            return if a <= self.gap {
                if a == self.gap {
                    f64::INFINITY
                } else {
                    0.0
                }
            } else {
                a / ((a - self.gap) * (a + self.gap)).sqrt()
            };
        }
        let z = Complex64::new(energy, self.dynes);
        // factored to avoid cancellation near the gap edge
        let mut w = ((z - self.gap) * (z + self.gap)).sqrt();
        if w.im < 0.0 {
            w = -w;
        }
        (z / w).re
    }

    /// Value at `edge * gap + offset` for `edge = ±1`, with the distance to
    /// the gap edge taken from `offset` directly so that points closer to
    /// the edge than one ulp of the gap stay resolved.
    pub fn value_near_edge(&self, edge: f64, offset: f64) -> f64 {
        if self.dynes != 0.0 {
            return self.value(edge * self.gap + offset);
        }
        let outward = edge * offset;
        if outward <= 0.0 {
            return 0.0;
        }
        (self.gap + outward) / (outward * (2.0 * self.gap + outward)).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::micro_ev;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gap() -> f64 {
        micro_ev(203.0)
    }

    #[test]
    fn subgap_vanishes_in_bcs_limit() {
        let dos = DynesDos::new(gap(), 0.0).unwrap();
        assert_eq!(dos.value(0.0), 0.0);
        let tiny = DynesDos::new(gap(), gap() * 1e-12).unwrap();
        assert!(tiny.value(0.0) < 1e-11);
    }

    #[test]
    fn twice_the_gap() {
        let expected = 2.0 / 3f64.sqrt();
        let bcs = DynesDos::new(gap(), 0.0).unwrap();
        assert_relative_eq!(bcs.value(2.0 * gap()), expected, max_relative = 1e-14);
        let broadened = DynesDos::new(gap(), gap() * 1e-9).unwrap();
        assert_relative_eq!(broadened.value(2.0 * gap()), expected, max_relative = 1e-9);
    }

    #[test]
    fn edge_offset_form() {
        let bcs = DynesDos::new(gap(), 0.0).unwrap();
        let x = 1e-3 * gap();
        assert_relative_eq!(bcs.value_near_edge(1.0, x), bcs.value(gap() + x), max_relative = 1e-9);
        assert_relative_eq!(bcs.value_near_edge(-1.0, -x), bcs.value(-gap() - x), max_relative = 1e-9);
        assert_eq!(bcs.value_near_edge(1.0, -x), 0.0);
        assert_eq!(bcs.value_near_edge(-1.0, x), 0.0);
        // well inside one ulp of the gap
        let tiny = 1e-45;
        assert!(bcs.value_near_edge(1.0, tiny).is_finite());
        assert!(bcs.value_near_edge(1.0, tiny) > 1e9);
        let broadened = DynesDos::new(gap(), micro_ev(0.01)).unwrap();
        assert_eq!(broadened.value_near_edge(-1.0, x), broadened.value(-gap() + x));
    }

    #[test]
    fn normal_state_limit() {
        let dos = DynesDos::new(gap(), micro_ev(0.01)).unwrap();
        assert!((dos.value(100.0 * gap()) - 1.0).abs() < 1e-4);
        assert!((dos.value(1e6 * gap()) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DynesDos::new(0.0, 0.0).is_err());
        assert!(DynesDos::new(gap(), -1.0).is_err());
    }

    proptest! {
        #[test]
        fn non_negative_and_even(e_rel in -50.0f64..50.0, g_rel in 1e-6f64..0.2) {
            let dos = DynesDos::new(gap(), g_rel * gap()).unwrap();
            let v = dos.value(e_rel * gap());
            prop_assert!(v >= 0.0);
            prop_assert!((v - dos.value(-e_rel * gap())).abs() <= 1e-12 * v.max(1.0));
        }

        #[test]
        fn tends_to_one_far_from_gap(g_rel in 0.0f64..1e-3) {
            let dos = DynesDos::new(gap(), g_rel * gap()).unwrap();
            prop_assert!((dos.value(100.0 * gap()) - 1.0).abs() < 1e-4);
        }
    }
}
