//! Fixed observation and text format for the golden-chunk check.
//!
//! Golden file:
//!
//! ```text
//! bundle_crc 1a2b3c4d
//! rows 10 cols 22
//! 3f800000 bf000000 ...
//! ```
//!
//! One line per chunk row, raw head outputs as f32 bit patterns.

use crate::error::{Error, Result};
use crate::grid::{Field, GridShape};
use crate::policy::bundle::{Architecture, WeightBundle};
use crate::policy::model::{ArmObservation, Observation, Policy};
use crate::tactile::{DeformationField, ForceField};

pub const GOLDEN_SEED: u64 = 42;

fn blob(amplitude: f64, ci: f64, cj: f64, width: f64) -> Field {
    let shape = GridShape::SENSOR;
    let mut f = Field::zeros(shape);
    for j in 0..shape.ny {
        for i in 0..shape.nx {
            let r2 = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2);
            f.set(i, j, amplitude * libm::exp(-r2 / (2.0 * width * width)));
        }
    }
    f
}

/// Deterministic observation for `arch`: an off-centre pressure blob and
/// matching indentation on each arm, plus striped views if the policy
/// takes them.
pub fn fixture_observation(arch: &Architecture) -> Observation {
    let arms = (0..arch.arms)
        .map(|k| {
            let s = k as f64;
            ArmObservation {
                pose: [0.10 + 0.05 * s, -0.05, 0.20, 0.1, -0.2 + 0.4 * s, 0.3],
                force: ForceField { pressures: blob(20.0, 5.5 + s, 4.0, 2.0), timestamp: 1.0 },
                deformation: DeformationField { displacements: blob(3.0, 5.5 + s, 4.0, 2.5), timestamp: 1.0 },
            }
        })
        .collect();
    let views = (0..arch.views).map(|v| (0..120).map(|p| ((p + 7 * v) % 12) as f64 / 11.0).collect()).collect();
    Observation { arms, views }
}

pub fn golden_policy() -> Result<Policy> {
    Ok(Policy::new(WeightBundle::seeded(Architecture::default(), GOLDEN_SEED)?))
}

pub fn render(policy: &Policy) -> Result<String> {
    let a = policy.architecture();
    let raw = policy.predict_raw(&fixture_observation(a))?;
    let crc = crc32fast::hash(&policy.bundle().to_bytes());
    let cols = a.output_dim();
    let mut out = format!("bundle_crc {crc:08x}\nrows {} cols {cols}\n", a.chunk_len);
    for row in raw.chunks_exact(cols) {
        let line: Vec<String> = row.iter().map(|v| format!("{:08x}", v.to_bits())).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Golden {
    pub bundle_crc: u32,
    pub rows: usize,
    pub cols: usize,
    pub bits: Vec<u32>,
}

pub fn parse(text: &str) -> Result<Golden> {
    let bad = |m: &str| Error::Format(format!("golden file: {m}"));
    let mut lines = text.lines();
    let crc = lines
        .next()
        .and_then(|l| l.strip_prefix("bundle_crc "))
        .and_then(|h| u32::from_str_radix(h.trim(), 16).ok())
        .ok_or_else(|| bad("missing bundle_crc line"))?;
    let dims: Vec<usize> = lines
        .next()
        .ok_or_else(|| bad("missing rows/cols line"))?
        .split_whitespace()
        .filter_map(|w| w.parse().ok())
        .collect();
    let [rows, cols] = dims[..] else {
        return Err(bad("malformed rows/cols line"));
    };
    let mut bits = Vec::with_capacity(rows * cols);
    for l in lines.filter(|l| !l.trim().is_empty()) {
        for w in l.split_whitespace() {
            bits.push(u32::from_str_radix(w, 16).map_err(|_| bad("non-hex value"))?);
        }
    }
    if bits.len() != rows * cols {
        return Err(bad("value count does not match rows x cols"));
    }
    Ok(Golden { bundle_crc: crc, rows, cols, bits })
}
