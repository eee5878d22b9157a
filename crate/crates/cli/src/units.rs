//! Unit-suffixed quantities in configuration files.
//!
//! Every physical field is a string such as `"203ueV"` or `"-130 dBm"`;
//! bare numbers are rejected for these fields.

use std::fmt;
use std::marker::PhantomData;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use patdet_core::constants::E_CHARGE;

pub trait Dimension {
    const NAME: &'static str;
    /// Unit used when writing the resolved configuration; factor 1.
    const SI: &'static str;
    const UNITS: &'static [(&'static str, f64)];
}

macro_rules! dimension {
    ($ty:ident, $name:expr, $si:expr, [$(($u:expr, $f:expr)),* $(,)?]) => {
        #[derive(Debug, Clone, Copy, PartialEq)]
        pub struct $ty;
        impl Dimension for $ty {
            const NAME: &'static str = $name;
            const SI: &'static str = $si;
            const UNITS: &'static [(&'static str, f64)] = &[$(($u, $f)),*];
        }
    };
}

dimension!(Energy, "energy", "J", [
    ("J", 1.0), ("eV", E_CHARGE), ("meV", 1e-3 * E_CHARGE), ("ueV", 1e-6 * E_CHARGE),
    ("µeV", 1e-6 * E_CHARGE), ("neV", 1e-9 * E_CHARGE),
]);
dimension!(Frequency, "frequency", "Hz", [("Hz", 1.0), ("kHz", 1e3), ("MHz", 1e6), ("GHz", 1e9)]);
dimension!(Resistance, "resistance", "Ohm", [
    ("Ohm", 1.0), ("kOhm", 1e3), ("MOhm", 1e6), ("GOhm", 1e9), ("Ω", 1.0), ("kΩ", 1e3), ("MΩ", 1e6),
]);
dimension!(Temperature, "temperature", "K", [("K", 1.0), ("mK", 1e-3), ("uK", 1e-6), ("µK", 1e-6)]);
dimension!(Voltage, "voltage", "V", [("V", 1.0), ("mV", 1e-3), ("uV", 1e-6), ("µV", 1e-6), ("nV", 1e-9)]);
dimension!(Current, "current", "A", [
    ("A", 1.0), ("mA", 1e-3), ("uA", 1e-6), ("µA", 1e-6), ("nA", 1e-9), ("pA", 1e-12), ("fA", 1e-15), ("aA", 1e-18),
]);
dimension!(Capacitance, "capacitance", "F", [("F", 1.0), ("nF", 1e-9), ("pF", 1e-12), ("fF", 1e-15), ("aF", 1e-18)]);
dimension!(SheetInductance, "sheet inductance", "H/sq", [("H/sq", 1.0), ("nH/sq", 1e-9), ("pH/sq", 1e-12)]);
dimension!(Length, "length", "m", [("m", 1.0), ("mm", 1e-3), ("um", 1e-6), ("µm", 1e-6), ("nm", 1e-9)]);
dimension!(CapacitancePerLength, "capacitance per length", "F/m", [
    ("F/m", 1.0), ("nF/m", 1e-9), ("pF/m", 1e-12), ("fF/m", 1e-15),
]);
dimension!(Decibel, "ratio", "dB", [("dB", 1.0)]);
dimension!(PowerDbm, "power", "dBm", [("dBm", 1.0)]);

/// A value in SI units (dB and dBm for the logarithmic dimensions).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Q<D> {
    pub value: f64,
    dim: PhantomData<D>,
}

impl<D> Q<D> {
    pub fn new(value: f64) -> Self {
        Self { value, dim: PhantomData }
    }
}

/// Parses `"<number><unit>"`, allowing whitespace in between.
pub fn parse_quantity<D: Dimension>(text: &str) -> Result<f64, String> {
    let t = text.trim();
    // longest numeric prefix first, so "1e3eV" reads as 1e3 eV
    for split in (1..=t.len()).rev() {
        if !t.is_char_boundary(split) {
            continue;
        }
        let (num, unit) = t.split_at(split);
        let Ok(x) = num.trim().parse::<f64>() else { continue };
        let unit = unit.trim();
        if unit.is_empty() {
            return Err(format!("`{t}` has no unit; expected a {} such as `{}{}`", D::NAME, x, example::<D>()));
        }
        if !x.is_finite() {
            return Err(format!("`{t}` is not finite"));
        }
        return match D::UNITS.iter().find(|(u, _)| *u == unit) {
            Some((_, f)) => Ok(x * f),
            None => Err(format!(
                "unknown {} unit `{unit}` (allowed: {})",
                D::NAME,
                D::UNITS.iter().map(|(u, _)| *u).collect::<Vec<_>>().join(", ")
            )),
        };
    }
    Err(format!("`{t}` does not start with a number"))
}

fn example<D: Dimension>() -> &'static str {
    D::UNITS.get(1).or(D::UNITS.first()).map(|(u, _)| *u).unwrap_or("")
}

impl<'de, D: Dimension> Deserialize<'de> for Q<D> {
    fn deserialize<De: Deserializer<'de>>(deserializer: De) -> Result<Self, De::Error> {
        struct V<D>(PhantomData<D>);
        impl<D: Dimension> Visitor<'_> for V<D> {
            type Value = Q<D>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a {} with an explicit unit, e.g. \"1{}\"", D::NAME, example::<D>())
            }

            fn visit_str<E: de::Error>(self, s: &str) -> Result<Q<D>, E> {
                parse_quantity::<D>(s).map(Q::new).map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Q<D>, E> {
                Err(E::custom(format!("unitless value {v} for a {}; write it as a string with a unit, e.g. \"{v}{}\"", D::NAME, example::<D>())))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Q<D>, E> {
                self.visit_i64(v as i64)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Q<D>, E> {
                Err(E::custom(format!("unitless value {v} for a {}; write it as a string with a unit, e.g. \"{v}{}\"", D::NAME, example::<D>())))
            }
        }
        deserializer.deserialize_any(V(PhantomData))
    }
}

impl<D: Dimension> Serialize for Q<D> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format!("{:e} {}", self.value, D::SI))
    }
}
