//! Dual-loop compliance control: an admittance outer loop turning force
//! error into a reference depth, a diffusive boundary inner loop turning
//! the reference field into Dirichlet commands, presets and safety clamps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{solve_screened, Boundary, Field, GridShape, Mask, NodeRole};
use crate::observer::{AmortizedIdentifier, HistoryBuffer, ObserverConfig, ParamEstimate};
use crate::sim::{ContactCommand, MaterialParams, SurfaceState, MAX_DT};
use crate::tactile::DeformationField;

pub const LAMBDA1_RANGE: (f64, f64) = (50.0, 500.0);
pub const LAMBDA2_RANGE: (f64, f64) = (0.1, 5.0);
pub const EPS_RANGE: (f64, f64) = (0.01, 0.1);

fn in_range(v: f64, r: (f64, f64)) -> bool {
    v >= r.0 && v <= r.1
}

/// Outer-loop stiffness (N/m) and damping (N·s/m), inner-loop diffusion (m²/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplianceParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub eps: f64,
}

impl ComplianceParams {
    pub fn new(lambda1: f64, lambda2: f64, eps: f64) -> Result<Self> {
        let c = ComplianceParams { lambda1, lambda2, eps };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !in_range(self.lambda1, LAMBDA1_RANGE) {
            return Err(Error::config(format!("lambda1 {} outside [50, 500] N/m", self.lambda1)));
        }
        if !in_range(self.lambda2, LAMBDA2_RANGE) {
            return Err(Error::config(format!("lambda2 {} outside [0.1, 5] N·s/m", self.lambda2)));
        }
        if !in_range(self.eps, EPS_RANGE) {
            return Err(Error::config(format!("eps {} outside [0.01, 0.1] m²/s", self.eps)));
        }
        Ok(())
    }

    /// Nearest point inside the allowed box. NaN maps to the lower bound.
    pub fn clamped(&self) -> Self {
        let c = |v: f64, r: (f64, f64)| if v.is_nan() { r.0 } else { v.clamp(r.0, r.1) };
        ComplianceParams {
            lambda1: c(self.lambda1, LAMBDA1_RANGE),
            lambda2: c(self.lambda2, LAMBDA2_RANGE),
            eps: c(self.eps, EPS_RANGE),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Low,
    Mid,
    High,
}

impl PresetName {
    pub const ALL: [PresetName; 3] = [PresetName::Low, PresetName::Mid, PresetName::High];

    pub fn params(self) -> ComplianceParams {
        match self {
            PresetName::Low => ComplianceParams { lambda1: 60.0, lambda2: 0.3, eps: 0.08 },
            PresetName::Mid => ComplianceParams { lambda1: 250.0, lambda2: 2.0, eps: 0.05 },
            PresetName::High => ComplianceParams { lambda1: 480.0, lambda2: 4.0, eps: 0.02 },
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Low => "low",
            PresetName::Mid => "mid",
            PresetName::High => "high",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(PresetName::Low),
            "mid" => Ok(PresetName::Mid),
            "high" => Ok(PresetName::High),
            _ => Err(Error::config(format!("unknown preset '{s}'"))),
        }
    }

    /// Preset whose stiffness is closest to `lambda1`.
    pub fn nearest(lambda1: f64) -> Self {
        let mut best = PresetName::Low;
        for p in PresetName::ALL {
            if (p.params().lambda1 - lambda1).abs() < (best.params().lambda1 - lambda1).abs() {
                best = p;
            }
        }
        best
    }

    pub fn index(self) -> usize {
        match self {
            PresetName::Low => 0,
            PresetName::Mid => 1,
            PresetName::High => 2,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        PresetName::ALL.get(i).copied().ok_or_else(|| Error::config(format!("preset index {i} out of range")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompliancePreset {
    pub name: PresetName,
    pub values: ComplianceParams,
}

impl From<PresetName> for CompliancePreset {
    fn from(name: PresetName) -> Self {
        CompliancePreset { name, values: name.params() }
    }
}

/// Outer-loop state. `rest_depth` is the depth the model expects to hold
/// the desired force; the admittance spring acts around it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmittanceState {
    /// m
    pub ref_depth: f64,
    /// m/s
    pub ref_velocity: f64,
    /// kg
    pub virtual_mass: f64,
    /// m
    pub rest_depth: f64,
    /// m
    pub max_depth: f64,
    pub saturated: bool,
}

impl AdmittanceState {
    pub fn new(virtual_mass: f64, max_depth: f64) -> Result<Self> {
        if !(virtual_mass > 0.0 && virtual_mass.is_finite()) {
            return Err(Error::config(format!("virtual mass {virtual_mass} must be positive")));
        }
        if !(max_depth > 0.0 && max_depth.is_finite()) {
            return Err(Error::config(format!("max depth {max_depth} must be positive")));
        }
        Ok(AdmittanceState {
            ref_depth: 0.0,
            ref_velocity: 0.0,
            virtual_mass,
            rest_depth: 0.0,
            max_depth,
            saturated: false,
        })
    }

    /// `½ M v² + ½ λ1 (x - x0)²`
    pub fn energy(&self, lambda1: f64) -> f64 {
        let dx = self.ref_depth - self.rest_depth;
        0.5 * self.virtual_mass * self.ref_velocity * self.ref_velocity + 0.5 * lambda1 * dx * dx
    }
}

/// Exact zero-order-hold step of `M v̇ + λ2 v + λ1 (x - x0) = f_des - f_meas`
/// with the force error held over `dt`.
pub fn admittance_step(
    a: &AdmittanceState,
    f_des: f64,
    f_meas: f64,
    c: &ComplianceParams,
    dt: f64,
) -> Result<AdmittanceState> {
    admittance_step_coupled(a, f_des, f_meas, c, 0.0, dt)
}

/// Exact zero-order-hold step of `m x'' + c x' + k x = 0` from `(x, v)`.
pub fn spring_damper_step(x: f64, v: f64, m: f64, c: f64, k: f64, dt: f64) -> (f64, f64) {
    let mu = -c / (2.0 * m);
    let w2 = k / m;
    let q = mu * mu - w2;
    let (ch, sh) = if q > 0.0 {
        let r = q.sqrt();
        ((r * dt).cosh(), (r * dt).sinh() / r)
    } else if q < 0.0 {
        let r = (-q).sqrt();
        ((r * dt).cos(), (r * dt).sin() / r)
    } else {
        (1.0, dt)
    };
    let g = (mu * dt).exp();
    (g * ((ch - sh * mu) * x + sh * v), g * (-sh * w2 * x + (ch + sh * mu) * v))
}

/// As [`admittance_step`], but the contact force over the step is taken as
/// `f_meas + k_env (x - x_k)` instead of being held. `k_env` is the
/// estimated contact stiffness in N/m. The equilibrium is unchanged.
pub fn admittance_step_coupled(
    a: &AdmittanceState,
    f_des: f64,
    f_meas: f64,
    c: &ComplianceParams,
    k_env: f64,
    dt: f64,
) -> Result<AdmittanceState> {
    admittance_step_damped(a, f_des, f_meas, c, k_env, 0.0, dt)
}

/// As [`admittance_step_coupled`], with the contact force also growing by
/// `c_env (v - v_k)`.
pub fn admittance_step_damped(
    a: &AdmittanceState,
    f_des: f64,
    f_meas: f64,
    c: &ComplianceParams,
    k_env: f64,
    c_env: f64,
    dt: f64,
) -> Result<AdmittanceState> {
    if !(k_env >= 0.0 && k_env.is_finite()) {
        return Err(Error::config(format!("contact stiffness {k_env} N/m must be >= 0")));
    }
    if !(c_env >= 0.0 && c_env.is_finite()) {
        return Err(Error::config(format!("contact damping {c_env} N·s/m must be >= 0")));
    }
    if !(f_des.is_finite() && f_meas.is_finite()) {
        return Err(Error::numeric(format!("non-finite force (desired {f_des}, measured {f_meas})")));
    }
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::config(format!("control step {dt} s outside (0, {MAX_DT}]")));
    }
    c.validate()?;
    let stiff = c.lambda1 + k_env;
    let x_eq = (c.lambda1 * a.rest_depth + f_des - f_meas + k_env * a.ref_depth + c_env * a.ref_velocity) / stiff;
    let (x1, v1) = spring_damper_step(a.ref_depth - x_eq, a.ref_velocity, a.virtual_mass, c.lambda2 + c_env, stiff, dt);

    let mut out = *a;
    out.ref_depth = x1 + x_eq;
    out.ref_velocity = v1;
    out.saturated = false;
    if out.ref_depth < 0.0 || out.ref_depth > a.max_depth {
        out.ref_depth = out.ref_depth.clamp(0.0, a.max_depth);
        out.ref_velocity = 0.0;
        out.saturated = true;
    }
    Ok(out)
}

/// Analytical indenter shapes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Template {
    FlatPunch,
    /// Radius in grid cells, measured from the mask centroid.
    SphericalCap {
        radius: f64,
    },
}

/// Unit-depth template over the mask: 1 at the deepest node.
pub fn template_profile(template: Template, mask: &Mask) -> Field {
    let shape = mask.shape;
    let mut out = Field::zeros(shape);
    match template {
        Template::FlatPunch => {
            for (v, &m) in out.data.iter_mut().zip(&mask.data) {
                if m {
                    *v = 1.0;
                }
            }
        }
        Template::SphericalCap { radius } => {
            let n = mask.count();
            if n == 0 || radius <= 0.0 {
                return out;
            }
            let (mut ci, mut cj) = (0.0, 0.0);
            for idx in 0..shape.len() {
                if mask.data[idx] {
                    let (i, j) = shape.coords(idx);
                    ci += i as f64;
                    cj += j as f64;
                }
            }
            ci /= n as f64;
            cj /= n as f64;
            for idx in 0..shape.len() {
                if mask.data[idx] {
                    let (i, j) = shape.coords(idx);
                    let r2 = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2);
                    out.data[idx] = (1.0 - r2 / (radius * radius)).max(0.0);
                }
            }
        }
    }
    out
}

/// Reference deformation for a template pressed `depth` metres deep.
/// Returned in millimetres like every other deformation field.
pub fn synthesize_reference(template: Template, depth: f64, mask: &Mask) -> Result<DeformationField> {
    if !(depth >= 0.0 && depth.is_finite()) {
        return Err(Error::config(format!("template depth {depth} must be >= 0")));
    }
    Ok(DeformationField { displacements: template_profile(template, mask).map(|v| v * depth * 1e3), timestamp: 0.0 })
}

/// Steady normal force per metre of template depth, N/m.
pub fn template_stiffness(template: Template, mask: &Mask, k_e: f64, h: f64) -> f64 {
    k_e * h * h * template_profile(template, mask).sum()
}

/// Inner boundary update on the command's contact nodes. The error
/// `e = phi_ref - phi_meas` is pushed through one semi-implicit step of
/// `ė = -K_p e + eps ∇²e` (zero flux at the mask rim), and the command
/// absorbs whatever error the step removes.
pub fn inner_boundary_step(
    u: &ContactCommand,
    phi_ref: &Field,
    phi_meas: &Field,
    eps: f64,
    kp: f64,
    h: f64,
    dt: f64,
) -> Result<ContactCommand> {
    let shape = u.mask.shape;
    shape.ensure_same(&phi_ref.shape, "reference field")?;
    shape.ensure_same(&phi_meas.shape, "measured field")?;
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::config(format!("control step {dt} s outside (0, {MAX_DT}]")));
    }
    if !(eps >= 0.0 && kp >= 0.0 && h > 0.0) {
        return Err(Error::config(format!("bad inner-loop gains eps {eps}, kp {kp}, h {h}")));
    }
    if u.mask.is_empty() {
        return Ok(u.clone());
    }
    let e: Vec<f64> = (0..shape.len())
        .map(|idx| if u.mask.data[idx] { phi_ref.data[idx] - phi_meas.data[idx] } else { 0.0 })
        .collect();
    let roles: Vec<NodeRole> =
        u.mask.data.iter().map(|&m| if m { NodeRole::Active } else { NodeRole::Excluded }).collect();
    let rhs: Vec<f64> = e.iter().map(|v| v * (1.0 - dt * kp)).collect();
    let e_next = solve_screened(shape, h, 1.0, dt * eps, &roles, &rhs, Boundary::Neumann)?;
    let mut out = u.clone();
    for idx in 0..shape.len() {
        if u.mask.data[idx] {
            out.indentation.data[idx] = (u.indentation.data[idx] + e[idx] - e_next[idx]).max(0.0);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyLimits {
    /// N
    pub max_force: f64,
    /// m
    pub max_depth: f64,
}

impl Default for SafetyLimits {
    fn default() -> Self {
        SafetyLimits { max_force: 15.0, max_depth: 12e-3 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Violations {
    pub depth: bool,
    pub force: bool,
    /// Steady force the unclamped command would have produced, N.
    pub predicted_force: f64,
}

impl Violations {
    pub fn any(&self) -> bool {
        self.depth || self.force
    }
}

/// Steady force `k_e Σ depth h²` of a command.
pub fn predicted_force(cmd: &ContactCommand, k_e: f64, h: f64) -> f64 {
    let depth: f64 = cmd.indentation.data.iter().zip(&cmd.mask.data).filter(|(_, &m)| m).map(|(&d, _)| d).sum();
    k_e * depth * h * h
}

/// Caps node depths, then scales the whole command down until the steady
/// force fits under `max_force`.
pub fn safety_clamp(
    cmd: &ContactCommand,
    limits: &SafetyLimits,
    k_e: f64,
    h: f64,
) -> Result<(ContactCommand, Violations)> {
    if !(limits.max_force > 0.0 && limits.max_depth > 0.0) {
        return Err(Error::config("safety limits must be positive"));
    }
    let mut out = cmd.clone();
    let mut v = Violations { predicted_force: predicted_force(cmd, k_e, h), ..Violations::default() };
    for d in &mut out.indentation.data {
        if *d > limits.max_depth {
            *d = limits.max_depth;
            v.depth = true;
        }
    }
    let f = predicted_force(&out, k_e, h);
    if f > limits.max_force {
        let s = limits.max_force / f;
        for d in &mut out.indentation.data {
            *d *= s;
        }
        // Guard the last ulp so the bound holds exactly.
        while predicted_force(&out, k_e, h) > limits.max_force {
            for d in &mut out.indentation.data {
                *d = f64::from_bits(d.to_bits().saturating_sub(1)).max(0.0);
            }
        }
        v.force = true;
    }
    Ok((out, v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Control period, s.
    pub dt: f64,
    /// Inner-loop proportional gain, 1/s.
    pub kp: f64,
    pub virtual_mass: f64,
    pub limits: SafetyLimits,
    /// Time over which the force target ramps in from zero, s.
    pub force_ramp: f64,
    /// Adds the reference change to the command each cycle.
    pub feedforward: bool,
    /// Lets the admittance anticipate the contact force with the estimated
    /// stiffness over each period.
    pub implicit_contact: bool,
    pub template: Template,
    pub observer: ObserverConfig,
    /// When false the material estimate stays at the prior.
    pub observer_enabled: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            dt: 0.01,
            kp: 5.0,
            virtual_mass: 1.0,
            limits: SafetyLimits::default(),
            force_ramp: 0.3,
            feedforward: true,
            implicit_contact: true,
            template: Template::FlatPunch,
            observer: ObserverConfig::default(),
            observer_enabled: true,
        }
    }
}

/// One row of the per-cycle controller log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerLog {
    pub t: f64,
    pub f_des: f64,
    pub f_meas: f64,
    pub ref_depth: f64,
    pub preset: Option<PresetName>,
    pub compliance: ComplianceParams,
    pub violations: Violations,
    pub saturated: bool,
}

/// Owns all controller state for one contact patch.
#[derive(Debug, Clone)]
pub struct ComplianceController {
    cfg: ControllerConfig,
    h: f64,
    mask: Mask,
    profile: Field,
    compliance: ComplianceParams,
    preset: Option<PresetName>,
    admittance: AdmittanceState,
    command: ContactCommand,
    reference: Field,
    estimate: MaterialParams,
    last_estimate: Option<ParamEstimate>,
    history: HistoryBuffer,
    identifier: AmortizedIdentifier,
    f_des: f64,
    t: f64,
}

impl ComplianceController {
    pub fn new(cfg: ControllerConfig, mask: Mask, h: f64, prior: MaterialParams, preset: PresetName) -> Result<Self> {
        if !(cfg.dt > 0.0 && cfg.dt <= MAX_DT) {
            return Err(Error::config(format!("control period {} s outside (0, {MAX_DT}]", cfg.dt)));
        }
        if !(h > 0.0) {
            return Err(Error::config(format!("node spacing {h} must be positive")));
        }
        prior.validate()?;
        let shape = mask.shape;
        Ok(ComplianceController {
            profile: template_profile(cfg.template, &mask),
            command: ContactCommand::uniform(mask.clone(), 0.0),
            reference: Field::zeros(shape),
            admittance: AdmittanceState::new(cfg.virtual_mass, cfg.limits.max_depth)?,
            history: HistoryBuffer::new(cfg.observer.capacity),
            identifier: AmortizedIdentifier::new(cfg.observer),
            compliance: preset.params(),
            preset: Some(preset),
            estimate: prior,
            last_estimate: None,
            f_des: 0.0,
            t: 0.0,
            cfg,
            h,
            mask,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn shape(&self) -> GridShape {
        self.mask.shape
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn command(&self) -> &ContactCommand {
        &self.command
    }

    pub fn reference(&self) -> &Field {
        &self.reference
    }

    pub fn admittance(&self) -> &AdmittanceState {
        &self.admittance
    }

    pub fn estimate(&self) -> &MaterialParams {
        &self.estimate
    }

    pub fn last_estimate(&self) -> Option<&ParamEstimate> {
        self.last_estimate.as_ref()
    }

    pub fn compliance(&self) -> ComplianceParams {
        self.compliance
    }

    pub fn preset(&self) -> Option<PresetName> {
        self.preset
    }

    pub fn set_preset(&mut self, p: PresetName) {
        self.preset = Some(p);
        self.compliance = p.params();
    }

    /// Arbitrary parameters are clamped into range.
    pub fn set_compliance(&mut self, c: ComplianceParams) {
        self.compliance = c.clamped();
        self.preset = PresetName::ALL.into_iter().find(|p| p.params() == self.compliance);
    }

    pub fn set_force_target(&mut self, f_des: f64) -> Result<()> {
        if !(f_des >= 0.0 && f_des.is_finite()) {
            return Err(Error::config(format!("force target {f_des} N must be >= 0")));
        }
        self.f_des = f_des;
        Ok(())
    }

    pub fn force_target(&self) -> f64 {
        self.f_des
    }

    /// Feeds one tactile sample to the observer history.
    pub fn observe(&mut self, state: &SurfaceState, pressure_pa: &Field, t: f64) -> Result<()> {
        self.history.record(state, pressure_pa, t, &self.cfg.observer)?;
        Ok(())
    }

    /// Current ramped force target.
    fn ramped_target(&self) -> f64 {
        if self.cfg.force_ramp > 0.0 {
            self.f_des * (self.t / self.cfg.force_ramp).min(1.0)
        } else {
            self.f_des
        }
    }

    /// One control period: observer candidate, admittance, template, inner
    /// loop, clamps. `phi_meas` is the measured deformation in metres.
    pub fn cycle(&mut self, f_meas: f64, phi_meas: &Field) -> Result<ControllerLog> {
        self.shape().ensure_same(&phi_meas.shape, "measured deformation")?;
        self.t += self.cfg.dt;

        if self.cfg.observer_enabled {
            if let Some(est) = self.identifier.step(&self.history, &self.estimate) {
                if est.confident {
                    self.estimate = est.params;
                }
                self.last_estimate = Some(est);
            }
        }

        let f_des = self.ramped_target();
        let k = template_stiffness(self.cfg.template, &self.mask, self.estimate.k_e, self.h);
        self.admittance.rest_depth = if k > 0.0 { f_des / k } else { 0.0 };
        let k_env = if self.cfg.implicit_contact { k } else { 0.0 };
        self.admittance =
            admittance_step_coupled(&self.admittance, f_des, f_meas, &self.compliance, k_env, self.cfg.dt)?;

        let reference = self.profile.map(|v| v * self.admittance.ref_depth);
        let mut next = inner_boundary_step(
            &self.command,
            &reference,
            phi_meas,
            self.compliance.eps,
            self.cfg.kp,
            self.h,
            self.cfg.dt,
        )?;
        if self.cfg.feedforward {
            for idx in 0..next.indentation.data.len() {
                if self.mask.data[idx] {
                    let d = reference.data[idx] - self.reference.data[idx];
                    next.indentation.data[idx] = (next.indentation.data[idx] + d).max(0.0);
                }
            }
        }
        let (cmd, violations) = safety_clamp(&next, &self.cfg.limits, self.estimate.k_e, self.h)?;
        self.command = cmd;
        self.reference = reference;

        Ok(ControllerLog {
            t: self.t,
            f_des,
            f_meas,
            ref_depth: self.admittance.ref_depth,
            preset: self.preset,
            compliance: self.compliance,
            violations,
            saturated: self.admittance.saturated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_values_and_ordering() {
        let (l, m, h) = (PresetName::Low.params(), PresetName::Mid.params(), PresetName::High.params());
        assert!(l.lambda1 < m.lambda1 && m.lambda1 < h.lambda1);
        for p in PresetName::ALL {
            p.params().validate().unwrap();
            assert_eq!(PresetName::parse(p.as_str()).unwrap(), p);
            assert_eq!(PresetName::from_index(p.index()).unwrap(), p);
            assert_eq!(PresetName::nearest(p.params().lambda1), p);
        }
        assert!(PresetName::parse("extreme").is_err());
    }

    #[test]
    fn range_checks() {
        assert!(ComplianceParams::new(40.0, 1.0, 0.05).is_err());
        assert!(ComplianceParams::new(100.0, 6.0, 0.05).is_err());
        assert!(ComplianceParams::new(100.0, 1.0, 0.2).is_err());
        let c = ComplianceParams { lambda1: 1e4, lambda2: -3.0, eps: f64::NAN }.clamped();
        assert_eq!(c, ComplianceParams { lambda1: 500.0, lambda2: 0.1, eps: 0.01 });
    }

    #[test]
    fn balanced_force_keeps_equilibrium() {
        let mut a = AdmittanceState::new(1.0, 0.02).unwrap();
        a.ref_depth = 3e-3;
        a.rest_depth = 3e-3;
        let next = admittance_step(&a, 2.0, 2.0, &PresetName::Mid.params(), 0.01).unwrap();
        assert_eq!(next, a);
    }

    #[test]
    fn non_finite_force_is_numeric_error() {
        let a = AdmittanceState::new(1.0, 0.02).unwrap();
        let c = PresetName::Mid.params();
        assert!(matches!(admittance_step(&a, f64::NAN, 0.0, &c, 0.01), Err(Error::Numeric(_))));
        assert!(matches!(admittance_step(&a, 0.0, 0.0, &c, 0.02), Err(Error::Config(_))));
    }

    #[test]
    fn saturation_is_flagged() {
        let a = AdmittanceState::new(1.0, 5e-3).unwrap();
        let c = ComplianceParams { lambda1: 50.0, lambda2: 0.1, eps: 0.05 };
        let mut s = a;
        let mut hit = false;
        for _ in 0..200 {
            s = admittance_step(&s, 10.0, 0.0, &c, 0.01).unwrap();
            hit |= s.saturated;
            assert!(s.ref_depth <= 5e-3 && s.ref_depth >= 0.0);
        }
        assert!(hit);
    }

    #[test]
    fn flat_punch_and_zero_depth() {
        let mask = Mask::rect(GridShape::SENSOR, 2, 6, 3, 7);
        let r = synthesize_reference(Template::FlatPunch, 3e-3, &mask).unwrap();
        for idx in 0..120 {
            let want = if mask.data[idx] { 3.0 } else { 0.0 };
            assert!((r.displacements.data[idx] - want).abs() < 1e-12);
        }
        let z = synthesize_reference(Template::SphericalCap { radius: 4.0 }, 0.0, &mask).unwrap();
        assert_eq!(z.displacements.max_abs(), 0.0);
        assert!(synthesize_reference(Template::FlatPunch, -1e-3, &mask).is_err());
    }

    #[test]
    fn zero_error_leaves_command() {
        let mask = Mask::rect(GridShape::SENSOR, 2, 6, 3, 7);
        let u = ContactCommand::uniform(mask, 2e-3);
        let phi = u.indentation.clone();
        let out = inner_boundary_step(&u, &phi, &phi, 0.05, 5.0, 2e-3, 0.01).unwrap();
        assert_eq!(out, u);
    }

    #[test]
    fn clamp_leaves_safe_commands() {
        let mask = Mask::rect(GridShape::SENSOR, 2, 6, 3, 7);
        let u = ContactCommand::uniform(mask, 1e-3);
        let (out, v) = safety_clamp(&u, &SafetyLimits::default(), 2e6, 2e-3).unwrap();
        assert_eq!(out, u);
        assert!(!v.any());
        let bad = SafetyLimits { max_force: 0.0, max_depth: 1e-3 };
        assert!(safety_clamp(&u, &bad, 2e6, 2e-3).is_err());
    }
}
