use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature did not converge on [{lo:.6e}, {hi:.6e}]: achieved error {achieved:.3e}, target {target:.3e}")]
    Quadrature {
        lo: f64,
        hi: f64,
        achieved: f64,
        target: f64,
    },

    #[error("voltage {voltage:.6e} V lies outside the tabulated span [{lo:.6e}, {hi:.6e}] V")]
    OutOfSpan { voltage: f64, lo: f64, hi: f64 },

    #[error("tabulation span {actual:.6e} V is too short: at least {required:.6e} V is required")]
    InsufficientSpan { required: f64, actual: f64 },

    #[error("expected a {expected} curve, got {found}")]
    WrongCurveKind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("root search failed in bracket [{lo:.6e}, {hi:.6e}] after {iterations} iterations (residual {residual:.3e})")]
    RootNotFound {
        lo: f64,
        hi: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("{frequency:.6e} Hz is not a resonance of the line (normalized susceptance {residual:.3e})")]
    NotAResonance { frequency: f64, residual: f64 },

    #[error("load resistance {r_load:.3} Ω is not small compared to the line impedance {z0:.3} Ω")]
    NonPerturbativeLoad { r_load: f64, z0: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("Fock truncation ceiling {ceiling} exceeded: top-level population {population:.3e} at n_max = {n_max}, need n_max >= {required}")]
    TruncationCeiling {
        ceiling: usize,
        n_max: usize,
        population: f64,
        required: usize,
    },

    #[error("time stepper failed at t = {t:.6e} s: {reason}")]
    Stepper { t: f64, reason: String },

    #[error("fit did not converge: {reason} (last iterate {last:?})")]
    FitDiverged { reason: String, last: Vec<f64> },

    #[error("at {power_dbm:.3} dBm: {source}")]
    AtPower {
        power_dbm: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("step index {0} outside 1..=4")]
    StepIndex(usize),

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::invalid(name, reason)
}
