//! Viscoelastic surface under rigid-tool contact.
//!
//! The surface is a node grid carrying a deformation field `phi`. Each node
//! behaves as a standard linear solid: a Kelvin-Voigt pair (`k_e`, `k_v`) in
//! parallel with a Maxwell branch (`k_m`, `tau`). Nodes under the tool take
//! the commanded indentation; free nodes relax by lateral diffusion and
//! Kelvin-Voigt creep,
//!
//! ```text
//! phi_dot = D ∇²phi - (k_e / k_v) phi
//! ```
//!
//! integrated with backward Euler. The Maxwell stress is advanced with the
//! exact exponential update for a constant rate over the step, and the node
//! pressure is `p = k_e phi + k_v phi_dot + sigma_m`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{solve_screened, Boundary, Field, GridShape, Mask, NodeRole};

/// Largest accepted integration step, seconds.
pub const MAX_DT: f64 = 0.01;

/// Constitutive constants of the surface, per metre of indentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Elastic stiffness density, Pa/m.
    pub k_e: f64,
    /// Viscous density, Pa·s/m.
    pub k_v: f64,
    /// Maxwell-branch stiffness density, Pa/m.
    pub k_m: f64,
    /// Maxwell relaxation time, s.
    pub tau: f64,
    /// Lateral diffusion coefficient, m²/s.
    pub diffusion: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams { k_e: 2e6, k_v: 1e4, k_m: 5e5, tau: 0.5, diffusion: 0.02 }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.k_e, self.k_v, self.k_m, self.tau, self.diffusion];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite material parameters {self:?}")));
        }
        if self.k_e <= 0.0 || self.k_v <= 0.0 || self.k_m <= 0.0 {
            return Err(Error::config(format!("material stiffness/viscosity must be positive: {self:?}")));
        }
        if self.tau < 1e-3 {
            return Err(Error::config(format!("relaxation time {} s below 1 ms", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.diffusion) {
            return Err(Error::config(format!("diffusion {} outside [0, 1] m²/s", self.diffusion)));
        }
        Ok(())
    }

    /// Creep rate `k_e / k_v` of a free node, 1/s.
    pub fn decay_rate(&self) -> f64 {
        self.k_e / self.k_v
    }

    /// Every constant multiplied by `factor` except `tau`, which is unitless
    /// in the perturbation sense used by the controller tests.
    pub fn scaled(&self, factor: f64) -> Self {
        MaterialParams {
            k_e: self.k_e * factor,
            k_v: self.k_v * factor,
            k_m: self.k_m * factor,
            tau: self.tau,
            diffusion: self.diffusion,
        }
    }
}

/// Deformation state of the surface grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceState {
    /// Deformation, m.
    pub phi: Field,
    /// Deformation rate over the last step, m/s.
    pub phi_dot: Field,
    /// Maxwell-branch stress, Pa.
    pub sigma_m: Field,
    pub contact_mask: Mask,
    /// Node spacing, m.
    pub h: f64,
    pub boundary: Boundary,
}

impl SurfaceState {
    pub fn new(shape: GridShape, h: f64, boundary: Boundary) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::config(format!("node spacing {h} must be positive")));
        }
        Ok(SurfaceState {
            phi: Field::zeros(shape),
            phi_dot: Field::zeros(shape),
            sigma_m: Field::zeros(shape),
            contact_mask: Mask::empty(shape),
            h,
            boundary,
        })
    }

    pub fn sensor_default() -> Self {
        SurfaceState::new(GridShape::SENSOR, crate::grid::SENSOR_SPACING, Boundary::Neumann).expect("default grid")
    }

    pub fn shape(&self) -> GridShape {
        self.phi.shape
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.shape();
        shape.ensure_same(&self.phi_dot.shape, "phi_dot")?;
        shape.ensure_same(&self.sigma_m.shape, "sigma_m")?;
        shape.ensure_same(&self.contact_mask.shape, "contact mask")?;
        if self.phi.data.len() != shape.len()
            || self.phi_dot.data.len() != shape.len()
            || self.sigma_m.data.len() != shape.len()
            || self.contact_mask.data.len() != shape.len()
        {
            return Err(Error::config("state grids have inconsistent storage"));
        }
        if !(self.phi.is_finite() && self.phi_dot.is_finite() && self.sigma_m.is_finite()) {
            return Err(Error::numeric("state contains non-finite values"));
        }
        Ok(())
    }

    /// Node pressure `k_e phi + k_v phi_dot + sigma_m`, Pa, at every node.
    pub fn pressure(&self, params: &MaterialParams) -> Field {
        let data = self
            .phi
            .data
            .iter()
            .zip(&self.phi_dot.data)
            .zip(&self.sigma_m.data)
            .map(|((&phi, &rate), &sig)| params.k_e * phi + params.k_v * rate + sig)
            .collect();
        Field { shape: self.shape(), data }
    }

    /// Pressure the tool actually feels: node pressure on contact nodes,
    /// floored at zero (the tool cannot pull), zero elsewhere.
    pub fn contact_pressure(&self, params: &MaterialParams) -> Field {
        let mut p = self.pressure(params);
        for (v, &m) in p.data.iter_mut().zip(&self.contact_mask.data) {
            *v = if m { v.max(0.0) } else { 0.0 };
        }
        p
    }
}

/// Dirichlet indentation applied by the tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactCommand {
    /// Indentation, m. Non-negative on the mask, zero off it.
    pub indentation: Field,
    pub mask: Mask,
    /// In-plane tool velocity, m/s.
    pub tangential_velocity: [f64; 2],
}

impl ContactCommand {
    pub fn none(shape: GridShape) -> Self {
        ContactCommand { indentation: Field::zeros(shape), mask: Mask::empty(shape), tangential_velocity: [0.0, 0.0] }
    }

    /// Uniform indentation `depth` over `mask`.
    pub fn uniform(mask: Mask, depth: f64) -> Self {
        let indentation =
            Field { shape: mask.shape, data: mask.data.iter().map(|&m| if m { depth } else { 0.0 }).collect() };
        ContactCommand { indentation, mask, tangential_velocity: [0.0, 0.0] }
    }

    pub fn validate(&self) -> Result<()> {
        self.indentation.shape.ensure_same(&self.mask.shape, "contact command")?;
        if !self.indentation.is_finite() {
            return Err(Error::numeric("non-finite indentation"));
        }
        for (&d, &m) in self.indentation.data.iter().zip(&self.mask.data) {
            if m && d < 0.0 {
                return Err(Error::config(format!("negative indentation {d} on contact node")));
            }
            if !m && d != 0.0 {
                return Err(Error::config(format!("indentation {d} off the contact mask")));
            }
        }
        Ok(())
    }

    pub fn max_depth(&self) -> f64 {
        self.indentation.data.iter().fold(0.0, |m, &v| m.max(v))
    }
}

fn roles_for(state: &SurfaceState, cmd: &ContactCommand) -> Vec<NodeRole> {
    let shape = state.shape();
    (0..shape.len())
        .map(|idx| {
            if cmd.mask.data[idx] {
                NodeRole::Fixed(cmd.indentation.data[idx])
            } else if state.boundary == Boundary::DirichletZero && shape.is_edge(idx) {
                NodeRole::Fixed(0.0)
            } else {
                NodeRole::Active
            }
        })
        .collect()
}

fn check_inputs(state: &SurfaceState, cmd: &ContactCommand, params: &MaterialParams) -> Result<()> {
    state.validate()?;
    cmd.validate()?;
    params.validate()?;
    state.shape().ensure_same(&cmd.mask.shape, "contact command vs state")
}

/// Advances the surface by `dt` seconds under `cmd`.
pub fn step(state: &SurfaceState, cmd: &ContactCommand, params: &MaterialParams, dt: f64) -> Result<SurfaceState> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::config(format!("time step {dt} s outside (0, {MAX_DT}]")));
    }
    check_inputs(state, cmd, params)?;
    let shape = state.shape();
    let roles = roles_for(state, cmd);
    let alpha = 1.0 + dt * params.decay_rate();
    let beta = dt * params.diffusion;
    let phi_new = solve_screened(shape, state.h, alpha, beta, &roles, &state.phi.data, state.boundary)?;

    let decay = (-dt / params.tau).exp();
    let gain = params.k_m * (params.tau / dt) * (1.0 - decay);
    let mut next = state.clone();
    for idx in 0..shape.len() {
        // The implicit solve can leave -0.0 or sub-ulp negatives on free nodes.
        let phi = phi_new[idx].max(0.0);
        let delta = phi - state.phi.data[idx];
        next.phi.data[idx] = phi;
        next.phi_dot.data[idx] = delta / dt;
        next.sigma_m.data[idx] = state.sigma_m.data[idx] * decay + gain * delta;
    }
    next.contact_mask = cmd.mask.clone();
    if !(next.phi.is_finite() && next.phi_dot.is_finite() && next.sigma_m.is_finite()) {
        return Err(Error::numeric("surface step produced non-finite values"));
    }
    Ok(next)
}

/// Total normal force on the tool, N: contact pressure integrated over the
/// contact nodes, `Σ_mask max(p, 0) h²`.
pub fn contact_force(state: &SurfaceState, params: &MaterialParams) -> f64 {
    let area = state.h * state.h;
    let mut total = 0.0;
    for idx in 0..state.shape().len() {
        if !state.contact_mask.data[idx] {
            continue;
        }
        let p = params.k_e * state.phi.data[idx] + params.k_v * state.phi_dot.data[idx] + state.sigma_m.data[idx];
        total += p.max(0.0) * area;
    }
    total
}

/// Equilibrium of the surface under a held command: contact nodes at the
/// indentation, free nodes solving `(k_e/k_v) phi - D ∇²phi = 0`, zero rate
/// and fully relaxed Maxwell stress.
pub fn steady_state(template: &SurfaceState, cmd: &ContactCommand, params: &MaterialParams) -> Result<SurfaceState> {
    check_inputs(template, cmd, params)?;
    let shape = template.shape();
    let roles = roles_for(template, cmd);
    let zeros = vec![0.0; shape.len()];
    let phi =
        solve_screened(shape, template.h, params.decay_rate(), params.diffusion, &roles, &zeros, template.boundary)?;
    let mut out = SurfaceState::new(shape, template.h, template.boundary)?;
    out.phi.data = phi.into_iter().map(|v| v.max(0.0)).collect();
    out.contact_mask = cmd.mask.clone();
    Ok(out)
}

/// Max-norm distance between two states over all three fields.
pub fn state_distance(a: &SurfaceState, b: &SurfaceState) -> f64 {
    a.phi.max_diff(&b.phi).max(a.phi_dot.max_diff(&b.phi_dot)).max(a.sigma_m.max_diff(&b.sigma_m))
}

/// Sum of squared deformation over the grid.
pub fn field_energy(state: &SurfaceState) -> f64 {
    state.phi.data.iter().map(|v| v * v).sum()
}
