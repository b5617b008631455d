//! Per-arm actions, chunks, range squashing and axis-angle conversion.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::controller::{ComplianceParams, EPS_RANGE, LAMBDA1_RANGE, LAMBDA2_RANGE};
use crate::error::{Error, Result};
use crate::policy::bundle::ACTION_DIM;

/// Action period, s.
pub const PERIOD: f64 = 0.1;
pub const JOINTS: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmAction {
    /// m
    pub position: [f64; 3],
    /// Axis-angle, each component in [-π, π].
    pub orientation: [f64; 3],
    /// rad
    pub joints: [f64; JOINTS],
    pub compliance: ComplianceParams,
}

impl ArmAction {
    /// Flat layout: position, orientation, joints, (λ1, λ2, ε).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(ACTION_DIM);
        v.extend_from_slice(&self.position);
        v.extend_from_slice(&self.orientation);
        v.extend_from_slice(&self.joints);
        v.extend_from_slice(&[self.compliance.lambda1, self.compliance.lambda2, self.compliance.eps]);
        v
    }

    /// Inverse of [`ArmAction::to_vec`]. Orientation is wrapped and
    /// compliance clamped into range.
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != ACTION_DIM {
            return Err(Error::Shape(format!("arm action has {} values, expected {ACTION_DIM}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric("non-finite action component"));
        }
        let mut a = ArmAction {
            position: [v[0], v[1], v[2]],
            orientation: [wrap_angle(v[3]), wrap_angle(v[4]), wrap_angle(v[5])],
            joints: [0.0; JOINTS],
            compliance: ComplianceParams { lambda1: v[19], lambda2: v[20], eps: v[21] }.clamped(),
        };
        a.joints.copy_from_slice(&v[6..19]);
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub arms: Vec<ArmAction>,
}

impl Action {
    pub fn to_vec(&self) -> Vec<f64> {
        self.arms.iter().flat_map(|a| a.to_vec()).collect()
    }

    pub fn from_slice(v: &[f64], arms: usize) -> Result<Self> {
        if arms == 0 || v.len() != arms * ACTION_DIM {
            return Err(Error::Shape(format!("{} values for {arms} arms", v.len())));
        }
        let arms = v.chunks_exact(ACTION_DIM).map(ArmAction::from_slice).collect::<Result<_>>()?;
        Ok(Action { arms })
    }

    pub fn width(&self) -> usize {
        self.arms.len() * ACTION_DIM
    }
}

/// `actions[k]` executes at tick `start_tick + k`; one tick is [`PERIOD`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionChunk {
    pub start_tick: u64,
    pub actions: Vec<Action>,
}

impl ActionChunk {
    pub fn new(start_tick: u64, actions: Vec<Action>) -> Result<Self> {
        let Some(first) = actions.first() else {
            return Err(Error::Shape("empty action chunk".into()));
        };
        let arms = first.arms.len();
        if actions.iter().any(|a| a.arms.len() != arms) {
            return Err(Error::Shape("chunk mixes arm counts".into()));
        }
        Ok(ActionChunk { start_tick, actions })
    }

    pub fn start_time(&self) -> f64 {
        self.start_tick as f64 * PERIOD
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn covers(&self, tick: u64) -> bool {
        tick >= self.start_tick && tick - self.start_tick < self.actions.len() as u64
    }

    pub fn at(&self, tick: u64) -> Option<&Action> {
        self.covers(tick).then(|| &self.actions[(tick - self.start_tick) as usize])
    }
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + libm::expf(-x))
}

fn squash(logit: f32, (lo, hi): (f64, f64)) -> f64 {
    let s = sigmoid(logit) as f64;
    (lo * (1.0 - s) + hi * s).clamp(lo, hi)
}

/// Maps raw logits `(λ1, λ2, ε)` into their hard ranges through a sigmoid.
/// NaN logits map to the lower bound.
pub fn squash_compliance(logits: [f32; 3]) -> ComplianceParams {
    let l = logits.map(|x| if x.is_nan() { f32::NEG_INFINITY } else { x });
    ComplianceParams {
        lambda1: squash(l[0], LAMBDA1_RANGE),
        lambda2: squash(l[1], LAMBDA2_RANGE),
        eps: squash(l[2], EPS_RANGE),
    }
}

/// π·tanh, so every orientation component lands in [-π, π].
pub fn squash_orientation(x: f32) -> f64 {
    ((std::f32::consts::PI * libm::tanhf(x)) as f64).clamp(-PI, PI)
}

pub fn wrap_angle(a: f64) -> f64 {
    if (-PI..=PI).contains(&a) {
        return a;
    }
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    w.clamp(-PI, PI)
}

pub type Mat3 = [[f64; 3]; 3];

/// Axis-angle to rotation matrix. The zero vector gives the identity.
pub fn rodrigues(w: [f64; 3]) -> Mat3 {
    let theta = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    // Small-angle series keeps the coefficients accurate near zero.
    let (a, b) = if theta < 1e-6 {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    let [x, y, z] = w;
    let k = [[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]];
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let kk: f64 = (0..3).map(|m| k[i][m] * k[m][j]).sum();
            r[i][j] = if i == j { 1.0 } else { 0.0 } + a * k[i][j] + b * kk;
        }
    }
    r
}

/// Rotation matrix to axis-angle with angle in [0, π].
pub fn axis_angle(r: &Mat3) -> [f64; 3] {
    let v = [r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1]];
    let s = 0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let c = 0.5 * (r[0][0] + r[1][1] + r[2][2] - 1.0);
    let theta = s.atan2(c);
    if theta < 1e-6 {
        // θ / sin θ → 1
        return v.map(|x| 0.5 * x);
    }
    if PI - theta > 1e-4 {
        let f = theta / (2.0 * s);
        return v.map(|x| f * x);
    }
    // Near π the antisymmetric part vanishes; read the axis off R + I.
    let d = [r[0][0], r[1][1], r[2][2]];
    let i = (0..3).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
    let mut axis = [0.0; 3];
    axis[i] = ((d[i] - c) / (1.0 - c)).max(0.0).sqrt();
    for j in 0..3 {
        if j != i {
            axis[j] = (r[i][j] + r[j][i]) / (2.0 * axis[i] * (1.0 - c));
        }
    }
    // Keep the sign consistent with the (small) antisymmetric part.
    let dot = axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2];
    let sign = if dot < 0.0 { -1.0 } else { 1.0 };
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    axis.map(|a| sign * theta * a / n)
}
