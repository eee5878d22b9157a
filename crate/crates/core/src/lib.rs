//! Physics and calibration toolkit for a dc-biased superconducting tunnel
//! junction coupled to a high-impedance resonator, used as a microwave
//! photon-to-electron converter.

pub mod calibration;
pub mod constants;
pub mod error;
pub mod fock;
pub mod interp;
pub mod junction;
pub mod lindblad;
pub mod quad;
pub mod response;
pub mod resonator;
pub mod solve;

pub use error::{Error, Result};
