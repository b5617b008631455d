//! Scripted expert. It knows the nominal scene only (nominal material, the
//! object where it should be, a flat board, the wipe start mark) and closes
//! the loop on the measured contact force and its own arm height.

use std::f64::consts::PI;

use crate::controller::ComplianceParams;
use crate::error::{Error, Result};
use crate::grid::GridShape;
use crate::policy::action::{Action, ArmAction, JOINTS, PERIOD};
use crate::sim::MaterialParams;
use crate::tasks::env::{ContactMode, TaskEnv, HOLE_DEPTH, START_HEIGHT};
use crate::tasks::{Phase, TaskId};

/// Descent speed while searching for contact, m/s.
pub const APPROACH_SPEED: f64 = 0.01;
/// Wipe traverse speed, m/s.
pub const TRAVERSE_SPEED: f64 = 0.02;
/// Blend time between height goals, s.
pub const BLEND_TIME: f64 = 1.0;
/// Force the peg is pushed into the fit with, N.
pub const PUSH_FORCE: f64 = 4.0;
const OVERRUN: f64 = 0.005;
const GRIP: f64 = 0.8;

/// Nominal pad stiffness over `nodes` contact nodes, N/m.
pub fn pad_stiffness(nodes: usize) -> f64 {
    let m = MaterialParams::default();
    m.k_e * nodes as f64 * crate::grid::SENSOR_SPACING * crate::grid::SENSOR_SPACING
}

/// Stiffness of the admittance spring in series with the pad.
pub fn series_stiffness(lambda1: f64, pad: f64) -> f64 {
    lambda1 * pad / (lambda1 + pad)
}

#[derive(Debug, Clone, Copy)]
struct Blend {
    from: f64,
    to: f64,
    t0: f64,
}

impl Blend {
    fn at(&self, t: f64) -> f64 {
        let s = ((t - self.t0) / BLEND_TIME).clamp(0.0, 1.0);
        let w = 0.5 - 0.5 * (PI * s).cos();
        self.from + w * (self.to - self.from)
    }
}

#[derive(Debug, Clone)]
struct ArmPlan {
    z_cmd: f64,
    x_cmd: f64,
    y_cmd: f64,
    blend: Option<Blend>,
    contact_height: Option<f64>,
    hold: Option<f64>,
    lambda1: f64,
}

#[derive(Debug, Clone)]
pub struct Expert {
    plans: Vec<ArmPlan>,
    start: Vec<[f64; 3]>,
}

impl Expert {
    pub fn new(env: &TaskEnv) -> Self {
        let start: Vec<[f64; 3]> = env.arms.iter().map(|a| a.position()).collect();
        let plans = start
            .iter()
            .map(|p| ArmPlan {
                z_cmd: p[2],
                x_cmd: p[0],
                y_cmd: p[1],
                blend: None,
                contact_height: None,
                hold: None,
                lambda1: 0.0,
            })
            .collect();
        Expert { plans, start }
    }

    fn pad_nodes(task: TaskId) -> usize {
        match task {
            TaskId::PressHold => 64,
            _ => GridShape::SENSOR.len(),
        }
    }

    /// Action for the next period.
    pub fn act(&mut self, env: &TaskEnv) -> Action {
        let t = env.time() + PERIOD;
        let phase = env.phase();
        let task = env.spec.task;
        let mut arms = Vec::with_capacity(env.arms.len());
        for (k, arm) in env.arms.iter().enumerate() {
            let compliance: ComplianceParams = env.spec.preset(k, phase).params();
            let plan = &mut self.plans[k];
            let mut joints = [GRIP; JOINTS];
            if arm.mode == ContactMode::Holder {
                arms.push(ArmAction { position: [0.0, 0.0, 0.0], orientation: [0.0; 3], joints, compliance });
                continue;
            }
            let ks = series_stiffness(compliance.lambda1, pad_stiffness(Expert::pad_nodes(task)));
            if phase >= Phase::Contact && plan.contact_height.is_none() {
                plan.contact_height = Some(arm.height() + arm.force() / pad_stiffness(Expert::pad_nodes(task)));
            }
            let goal = match (phase, plan.contact_height) {
                (Phase::Approach, _) | (_, None) => None,
                (Phase::Release, _) if task != TaskId::Insert && task != TaskId::BimanualInsert => Some(START_HEIGHT),
                (Phase::Release, _) => Some(*plan.hold.get_or_insert(arm.height())),
                (Phase::Main, Some(h)) if matches!(task, TaskId::Insert | TaskId::BimanualInsert) => {
                    Some(h - HOLE_DEPTH - PUSH_FORCE / ks)
                }
                (_, Some(h)) => Some(h - env.spec.force_target / ks),
            };
            match goal {
                None => plan.z_cmd = (plan.z_cmd - APPROACH_SPEED * PERIOD).max(START_HEIGHT - 0.03),
                Some(g) => {
                    if plan.blend.is_none_or(|b| (b.to - g).abs() > 1e-12) {
                        let from = if plan.hold.is_some() {
                            g
                        } else if plan.lambda1 != compliance.lambda1 {
                            // Start where the new stiffness holds the present force.
                            arm.height() - arm.force() / compliance.lambda1
                        } else {
                            plan.z_cmd
                        };
                        plan.blend = Some(Blend { from, to: g, t0: t - PERIOD });
                    }
                    plan.z_cmd = plan.blend.expect("set above").at(t);
                }
            }
            plan.lambda1 = compliance.lambda1;
            if task == TaskId::Wipe && phase == Phase::Main {
                let end = self.start[k][0] + env.spec.path_length + OVERRUN;
                plan.x_cmd = (plan.x_cmd + TRAVERSE_SPEED * PERIOD).min(end);
            }
            if phase == Phase::Release {
                joints = [0.0; JOINTS];
            }
            arms.push(ArmAction {
                position: [plan.x_cmd, plan.y_cmd, plan.z_cmd],
                orientation: [0.0; 3],
                joints,
                compliance,
            });
        }
        Action { arms }
    }
}

/// Runs the expert on `env` until the trial ends; returns every
/// (observation time, action) pair it issued.
pub fn run_expert(env: &mut TaskEnv) -> Result<Vec<Action>> {
    let mut expert = Expert::new(env);
    let mut actions = Vec::new();
    while !env.finished() {
        let a = expert.act(env);
        env.step(&a)?;
        actions.push(a);
    }
    Ok(actions)
}

/// As [`run_expert`], but a failed trial is a generation error.
pub fn demonstrate(env: &mut TaskEnv) -> Result<Vec<Action>> {
    let actions = run_expert(env)?;
    if !env.success() {
        let r = env.result(0.0);
        return Err(Error::Generation(format!(
            "expert failed {} seed {}: {}",
            env.spec.task,
            env.setup.seed,
            r.failure.unwrap_or_default()
        )));
    }
    Ok(actions)
}
