//! Power-sweep data sets, their text format and synthetic noise.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};

/// Current of one multiphoton step measured against source power.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSweepData {
    pub step_index: usize,
    /// Junction bias, V.
    pub bias: f64,
    /// Source powers, dBm, strictly increasing.
    pub source_powers: Vec<f64>,
    /// Currents above the undriven level, A.
    pub currents: Vec<f64>,
}

impl PowerSweepData {
    pub fn new(step_index: usize, bias: f64, source_powers: Vec<f64>, currents: Vec<f64>) -> Result<Self> {
        if !(1..=4).contains(&step_index) {
            return Err(Error::StepIndex(step_index));
        }
        if !bias.is_finite() {
            return Err(invalid("bias", "must be finite"));
        }
        if source_powers.len() != currents.len() {
            return Err(invalid("currents", "length differs from source_powers"));
        }
        if source_powers.iter().chain(&currents).any(|x| !x.is_finite()) {
            return Err(invalid("source_powers", "powers and currents must be finite"));
        }
        if source_powers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("source_powers", "must be strictly increasing"));
        }
        Ok(Self {
            step_index,
            bias,
            source_powers,
            currents,
        })
    }

    pub fn len(&self) -> usize {
        self.source_powers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_powers.is_empty()
    }

    /// Keeps the points with source power in `[lo, hi]`.
    pub fn restricted(&self, lo: f64, hi: f64) -> Self {
        let (p, i): (Vec<f64>, Vec<f64>) = self
            .source_powers
            .iter()
            .zip(&self.currents)
            .filter(|(p, _)| **p >= lo && **p <= hi)
            .unzip();
        Self {
            source_powers: p,
            currents: i,
            ..self.clone()
        }
    }
}

/// Gaussian noise: standard deviation `relative·|I| + floor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub relative: f64,
    /// A.
    pub floor: f64,
}

/// Independent noisy copy of every sweep, drawn from one seeded stream.
pub fn add_noise(data: &[PowerSweepData], noise: NoiseModel, seed: u64) -> Result<Vec<PowerSweepData>> {
    if !(noise.relative >= 0.0 && noise.floor >= 0.0) {
        return Err(invalid("noise", "relative and floor must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    data.iter()
        .map(|d| {
            let currents = d
                .currents
                .iter()
                .map(|&i| i + (noise.relative * i.abs() + noise.floor) * unit.sample(&mut rng))
                .collect();
            PowerSweepData::new(d.step_index, d.bias, d.source_powers.clone(), currents)
        })
        .collect()
}

/// Writes sweeps as tab-separated blocks, each introduced by
/// `# step=N bias_V=...`.
pub fn write_sweeps<W: Write>(data: &[PowerSweepData], mut out: W) -> Result<()> {
    for d in data {
        writeln!(out, "# step={} bias_V={:.9e}", d.step_index, d.bias)?;
        writeln!(out, "# source_power_dBm\tcurrent_A")?;
        for (p, i) in d.source_powers.iter().zip(&d.currents) {
            writeln!(out, "{p:.6e}\t{i:.9e}")?;
        }
    }
    Ok(())
}

/// Reads the format of [`write_sweeps`]. Other `#` lines are ignored;
/// columns may be separated by tabs, spaces or commas.
pub fn read_sweeps<R: BufRead>(input: R) -> Result<Vec<PowerSweepData>> {
    struct Block {
        step: usize,
        bias: f64,
        powers: Vec<f64>,
        currents: Vec<f64>,
    }
    let mut blocks: Vec<Block> = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let parse_err = |reason: String| Error::Parse { line: lineno, reason };
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            let mut step = None;
            let mut bias = None;
            for tok in rest.split_whitespace() {
                if let Some(v) = tok.strip_prefix("step=") {
                    step = Some(v.parse::<usize>().map_err(|e| parse_err(format!("step: {e}")))?);
                } else if let Some(v) = tok.strip_prefix("bias_V=") {
                    bias = Some(v.parse::<f64>().map_err(|e| parse_err(format!("bias: {e}")))?);
                }
            }
            match (step, bias) {
                (Some(step), Some(bias)) => blocks.push(Block {
                    step,
                    bias,
                    powers: Vec::new(),
                    currents: Vec::new(),
                }),
                (None, None) => {}
                _ => return Err(parse_err("header needs both step= and bias_V=".into())),
            }
            continue;
        }
        let block = blocks
            .last_mut()
            .ok_or_else(|| parse_err("data before the first `# step=` header".into()))?;
        let cols: Vec<&str> = t.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if cols.len() != 2 {
            return Err(parse_err(format!("expected 2 columns, found {}", cols.len())));
        }
        let p: f64 = cols[0].parse().map_err(|e| parse_err(format!("power: {e}")))?;
        let i: f64 = cols[1].parse().map_err(|e| parse_err(format!("current: {e}")))?;
        block.powers.push(p);
        block.currents.push(i);
    }
    blocks
        .into_iter()
        .map(|b| PowerSweepData::new(b.step, b.bias, b.powers, b.currents))
        .collect()
}
