//! Visual-tactile sensor emulation: force and deformation fields read off
//! the surface state, screened-Poisson smoothing and scalar features.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{solve_screened, Boundary, Field, GridShape, NodeRole};
use crate::sim::{MaterialParams, SurfaceState};

/// Upper end of the sensor's pressure range, kPa.
pub const MAX_PRESSURE_KPA: f64 = 50.0;
/// Nominal tactile sampling rate, Hz.
pub const SAMPLE_RATE_HZ: f64 = 200.0;
/// Default sensor noise, kPa RMS.
pub const DEFAULT_NOISE_RMS_KPA: f64 = 0.2;

/// Pressure distribution over the tactile matrix, kPa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceField {
    pub pressures: Field,
    pub timestamp: f64,
}

impl ForceField {
    pub fn zeros(shape: GridShape, timestamp: f64) -> Self {
        ForceField { pressures: Field::zeros(shape), timestamp }
    }
}

/// Surface displacement over the tactile matrix, mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationField {
    pub displacements: Field,
    pub timestamp: f64,
}

impl DeformationField {
    pub fn zeros(shape: GridShape, timestamp: f64) -> Self {
        DeformationField { displacements: Field::zeros(shape), timestamp }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldFeatures {
    /// kPa
    pub max_force: f64,
    /// mm
    pub max_deformation: f64,
    /// Pressure-weighted centroid in grid units `(i, j)`.
    pub force_centroid: [f64; 2],
    /// Centroid offset from the grid centre over the half-diagonal, in [0, 1].
    pub asymmetry: f64,
}

/// One tactile pad. Owns its noise stream, so two sensors built with the
/// same seed report identical fields for identical states.
#[derive(Debug, Clone)]
pub struct TactileSensor {
    shape: GridShape,
    noise_rms: f64,
    normal_cos: f64,
    seed: u64,
    rng: ChaCha8Rng,
}

impl TactileSensor {
    pub fn new(shape: GridShape, noise_rms_kpa: f64, seed: u64) -> Result<Self> {
        if !(noise_rms_kpa >= 0.0 && noise_rms_kpa.is_finite()) {
            return Err(Error::config(format!("noise rms {noise_rms_kpa} kPa must be >= 0")));
        }
        Ok(TactileSensor {
            shape,
            noise_rms: noise_rms_kpa,
            normal_cos: 1.0,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Tilt between the pad normal and the surface normal, radians.
    pub fn with_tilt(mut self, tilt: f64) -> Self {
        self.normal_cos = tilt.cos();
        self
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise_rms(&self) -> f64 {
        self.noise_rms
    }

    /// Draws the next noise table, one value per node in storage order.
    fn next_noise(&mut self) -> Vec<f64> {
        let normal = Normal::new(0.0, self.noise_rms).expect("validated rms");
        (0..self.shape.len()).map(|_| normal.sample(&mut self.rng)).collect()
    }

    /// Reads the force field: contact pressure projected on the pad normal,
    /// plus seeded Gaussian noise, clamped to the sensor range.
    pub fn sample_force(
        &mut self,
        state: &SurfaceState,
        params: &MaterialParams,
        timestamp: f64,
    ) -> Result<ForceField> {
        self.shape.ensure_same(&state.shape(), "tactile sensor vs surface")?;
        let noise = self.next_noise();
        Ok(project_force(state, params, self.normal_cos, &noise, timestamp))
    }

    /// Deformation field in millimetres, non-negative.
    pub fn sample_deformation(&self, state: &SurfaceState, timestamp: f64) -> Result<DeformationField> {
        self.shape.ensure_same(&state.shape(), "tactile sensor vs surface")?;
        Ok(DeformationField { displacements: state.phi.map(|v| (v * 1e3).max(0.0)), timestamp })
    }
}

/// Force field for a given noise table (kPa per node).
pub fn project_force(
    state: &SurfaceState,
    params: &MaterialParams,
    normal_cos: f64,
    noise: &[f64],
    timestamp: f64,
) -> ForceField {
    let p = state.contact_pressure(params);
    let data =
        p.data.iter().zip(noise).map(|(&pa, &n)| (pa * 1e-3 * normal_cos + n).clamp(0.0, MAX_PRESSURE_KPA)).collect();
    ForceField { pressures: Field { shape: p.shape, data }, timestamp }
}

/// Screened-Poisson smoothing `(I - lambda ∇²) out = raw` with zero-flux
/// edges. `lambda` in m², `h` the node spacing in m.
pub fn poisson_smooth(raw: &DeformationField, lambda: f64, h: f64) -> Result<DeformationField> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::config(format!("smoothing lambda {lambda} must be >= 0")));
    }
    let shape = raw.displacements.shape;
    if lambda == 0.0 {
        return Ok(raw.clone());
    }
    let roles = vec![NodeRole::Active; shape.len()];
    let data = solve_screened(shape, h, 1.0, lambda, &roles, &raw.displacements.data, Boundary::Neumann)?;
    Ok(DeformationField { displacements: Field { shape, data }, timestamp: raw.timestamp })
}

fn grid_centre(shape: GridShape) -> [f64; 2] {
    [(shape.nx as f64 - 1.0) / 2.0, (shape.ny as f64 - 1.0) / 2.0]
}

pub fn features(force: &ForceField, deformation: &DeformationField) -> FieldFeatures {
    let f = &force.pressures;
    let shape = f.shape;
    let centre = grid_centre(shape);
    let total: f64 = f.data.iter().sum();
    let centroid = if total > 0.0 {
        let (mut cx, mut cy) = (0.0, 0.0);
        for (idx, &w) in f.data.iter().enumerate() {
            let (i, j) = shape.coords(idx);
            cx += w * i as f64;
            cy += w * j as f64;
        }
        [cx / total, cy / total]
    } else {
        centre
    };
    let half_diag = (centre[0] * centre[0] + centre[1] * centre[1]).sqrt();
    let asymmetry = if half_diag > 0.0 {
        let (dx, dy) = (centroid[0] - centre[0], centroid[1] - centre[1]);
        ((dx * dx + dy * dy).sqrt() / half_diag).clamp(0.0, 1.0)
    } else {
        0.0
    };
    FieldFeatures {
        max_force: f.data.iter().fold(0.0, |m, &v| m.max(v)),
        max_deformation: deformation.displacements.data.iter().fold(0.0, |m, &v| m.max(v)),
        force_centroid: centroid,
        asymmetry,
    }
}
