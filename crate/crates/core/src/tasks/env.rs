//! Task environment: impedance-driven arms with a simulated gel pad over
//! rigid objects, and the measurable phase machine of each task.
//!
//! Each arm tracks a commanded reference height and planar pose through the
//! second-order admittance law of the compliance controller, with the
//! commanded `(λ1, λ2)` shaping every axis. The pad indentation follows from
//! the object geometry under the tool and is integrated by the continuum
//! model; forces are read back from the tactile sensor.

use serde::{Deserialize, Serialize};

use crate::controller::{admittance_step_damped, spring_damper_step, AdmittanceState, ComplianceParams, PresetName};
use crate::error::{Error, Result};
use crate::grid::{Field, GridShape, Mask, SENSOR_SPACING};
use crate::observer::{AmortizedIdentifier, HistoryBuffer, ObserverConfig, ParamEstimate};
use crate::policy::action::{Action, ArmAction, JOINTS};
use crate::policy::model::{ArmObservation, Observation};
use crate::sim::{contact_force, step, ContactCommand, MaterialParams, SurfaceState};
use crate::tactile::{DeformationField, ForceField, TactileSensor};
use crate::tasks::geometry::{rotate, Surface, Vec2};
use crate::tasks::{Phase, TaskId, TaskSpec, TrialSetup};

/// Control period, s.
pub const CONTROL_DT: f64 = 0.01;
pub const SUBSTEPS: usize = 2;
/// Control cycles per action period.
pub const CYCLES_PER_ACTION: usize = 10;
/// Virtual mass of every arm axis, kg.
pub const VIRTUAL_MASS: f64 = 0.1;
/// Lever converting yaw to arc length for the rotational admittance, m.
pub const YAW_LEVER: f64 = 0.03;
/// Reference height at the start of a trial, m.
pub const START_HEIGHT: f64 = 0.01;
/// Largest descent below the start height, m.
pub const TRAVEL: f64 = 0.1;
/// Force above which the tool counts as touching, N.
pub const CONTACT_FORCE: f64 = 0.2;
/// Force below which the tool counts as free, N.
pub const FREE_FORCE: f64 = 0.1;
pub const HOLD_TIME: f64 = 2.0;
pub const HOLD_BAND_TIME: f64 = 1.0;
pub const INSERT_TARGET_DEPTH: f64 = 0.010;
pub const HOLE_DEPTH: f64 = 0.013;
pub const CHAMFER: f64 = 0.007;
pub const PEG_HALF: Vec2 = [0.008, 0.008];
pub const RELEASE_TIME: f64 = 0.5;
/// Holder displacement that drops the fixture, m.
pub const FIXTURE_SLIP: f64 = 0.01;
pub const HOLDER_PRELOAD: f64 = 1.0;
const WALL_JUMP: f64 = 1e-3;
const WALL_FRICTION: f64 = 0.3;
const TIP_SAMPLES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContactMode {
    /// The pad touches the object directly.
    Direct,
    /// A rigid peg of the given half-size sits between pad and object.
    Peg { half: Vec2 },
    /// The pad grips a fixture; the normal load comes from the other arm.
    Holder,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ControllerChannel {
    /// Commanded reference height, m.
    pub z_cmd: f64,
    /// Reference height, m.
    pub z: f64,
    /// Measured normal force, N.
    pub force: f64,
    pub saturated: bool,
}

#[derive(Debug, Clone)]
pub struct Arm {
    pub mode: ContactMode,
    pub surface: Surface,
    /// Vertical shift of the surface, m.
    pub surface_z: f64,
    surface_shift: f64,
    pub truth: MaterialParams,
    pub nominal: MaterialParams,
    pub state: SurfaceState,
    pub sensor: TactileSensor,
    normal: AdmittanceState,
    lateral: [(f64, f64); 2],
    /// Arc length `YAW_LEVER · yaw` and its rate.
    yaw: (f64, f64),
    applied: ContactCommand,
    force: f64,
    lateral_force: Vec2,
    torque: f64,
    /// Contact stiffness (N/m) and damping (N·s/m) along x, y and yaw
    /// arc length.
    contact_k: [(f64, f64); 3],
    tip_height: f64,
    wall_force: f64,
    /// Friction load passed to the object while sliding in the fit, N.
    drag: f64,
    pub fit_friction: f64,
    external_load: f64,
    /// Rate at which the external load falls with holder displacement and
    /// its velocity.
    external_k: (f64, f64),
    force_field: ForceField,
    history: HistoryBuffer,
    identifier: Option<AmortizedIdentifier>,
    estimate: Option<ParamEstimate>,
    pub channel: ControllerChannel,
}

fn node_offset(shape: GridShape, idx: usize) -> Vec2 {
    let (i, j) = shape.coords(idx);
    let h = SENSOR_SPACING;
    [(i as f64 - (shape.nx as f64 - 1.0) / 2.0) * h, (j as f64 - (shape.ny as f64 - 1.0) / 2.0) * h]
}

impl Arm {
    pub fn new(
        mode: ContactMode,
        surface: Surface,
        truth: MaterialParams,
        nominal: MaterialParams,
        sensor: TactileSensor,
        start: Vec2,
        observer: bool,
    ) -> Result<Self> {
        let state = SurfaceState::sensor_default();
        let shape = state.shape();
        let start_depth = if mode == ContactMode::Holder { 0.0 } else { START_HEIGHT };
        let mut normal = AdmittanceState::new(VIRTUAL_MASS, start_depth + TRAVEL)?;
        normal.ref_depth = 0.0;
        normal.rest_depth = 0.0;
        Ok(Arm {
            mode,
            surface,
            surface_z: 0.0,
            surface_shift: 0.0,
            truth,
            nominal,
            state,
            sensor,
            normal,
            lateral: [(start[0], 0.0), (start[1], 0.0)],
            yaw: (0.0, 0.0),
            applied: ContactCommand::none(shape),
            force: 0.0,
            lateral_force: [0.0; 2],
            torque: 0.0,
            contact_k: [(0.0, 0.0); 3],
            tip_height: f64::INFINITY,
            wall_force: 0.0,
            drag: 0.0,
            fit_friction: 0.0,
            external_load: 0.0,
            external_k: (0.0, 0.0),
            force_field: ForceField::zeros(shape, 0.0),
            history: HistoryBuffer::new(ObserverConfig::default().capacity),
            identifier: observer.then(|| AmortizedIdentifier::new(ObserverConfig::default())),
            estimate: None,
            channel: ControllerChannel::default(),
        })
    }

    fn start_height(&self) -> f64 {
        if self.mode == ContactMode::Holder {
            0.0
        } else {
            START_HEIGHT
        }
    }

    /// Reference height of the tool (pad bottom, or peg tip when
    /// uncompressed), m.
    pub fn height(&self) -> f64 {
        self.start_height() - self.normal.ref_depth
    }

    pub fn position(&self) -> [f64; 3] {
        [self.lateral[0].0, self.lateral[1].0, self.height()]
    }

    pub fn yaw(&self) -> f64 {
        self.yaw.0 / YAW_LEVER
    }

    /// Holder displacement below its hold height, m.
    pub fn displacement(&self) -> f64 {
        self.normal.ref_depth
    }

    /// Measured normal force, N.
    pub fn force(&self) -> f64 {
        self.force
    }

    /// Peg tip height (peg mode), m.
    pub fn tip_height(&self) -> f64 {
        self.tip_height
    }

    pub fn wall_force(&self) -> f64 {
        self.wall_force
    }

    /// Moves the object surface to height `z`. The force expected at the
    /// next step is corrected for the shift.
    pub fn move_surface(&mut self, z: f64) {
        self.surface_shift += z - self.surface_z;
        self.surface_z = z;
    }

    /// Short-term stiffness (N/m) and damping (N·s/m) of the present pad
    /// contact, nominal material.
    pub fn contact_gains(&self) -> (f64, f64) {
        self.pad_gains(self.applied.mask.count())
    }

    /// Normal load passed to the object through the pad and the fit, N.
    pub fn load(&self) -> f64 {
        self.force + self.drag
    }

    pub fn force_field(&self) -> &ForceField {
        &self.force_field
    }

    pub fn deformation(&self, t: f64) -> DeformationField {
        self.sensor.sample_deformation(&self.state, t).expect("sensor matches surface")
    }

    pub fn estimate(&self) -> Option<&ParamEstimate> {
        self.estimate.as_ref()
    }

    pub fn observation(&self, t: f64) -> ArmObservation {
        let p = self.position();
        ArmObservation {
            pose: [p[0], p[1], p[2], 0.0, 0.0, self.yaw()],
            force: self.force_field.clone(),
            deformation: self.deformation(t),
        }
    }

    fn surface_height(&self, p: Vec2) -> Option<f64> {
        self.surface.height(p).map(|h| h + self.surface_z)
    }

    fn world(&self, offset: Vec2, pose: (Vec2, f64)) -> Vec2 {
        let r = rotate(offset, pose.1);
        [pose.0[0] + r[0], pose.0[1] + r[1]]
    }

    fn tip_points(half: Vec2) -> Vec<Vec2> {
        let n = TIP_SAMPLES;
        let mut pts = Vec::with_capacity(n * n);
        for b in 0..n {
            for a in 0..n {
                let u = -1.0 + 2.0 * a as f64 / (n - 1) as f64;
                let v = -1.0 + 2.0 * b as f64 / (n - 1) as f64;
                pts.push([u * half[0], v * half[1]]);
            }
        }
        pts
    }

    /// Highest surface point under the peg tip at `pose`.
    fn tip_support(&self, half: Vec2, pose: (Vec2, f64)) -> f64 {
        Arm::tip_points(half)
            .into_iter()
            .filter_map(|o| self.surface_height(self.world(o, pose)))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn pose(&self) -> (Vec2, f64) {
        ([self.lateral[0].0, self.lateral[1].0], self.yaw())
    }

    /// Pad indentation for the current pose, plus contact points in the tool
    /// frame with their surface gradients (peg mode).
    fn indentation(&mut self) -> (ContactCommand, Vec<(Vec2, Vec2)>) {
        let shape = self.state.shape();
        let z = self.height();
        let pose = self.pose();
        let mut cmd = ContactCommand::none(shape);
        let mut contacts = Vec::new();
        match self.mode {
            ContactMode::Direct => {
                self.tip_height = z;
                for idx in 0..shape.len() {
                    let p = self.world(node_offset(shape, idx), pose);
                    if let Some(s) = self.surface_height(p) {
                        let d = s - z;
                        if d > 0.0 {
                            cmd.mask.data[idx] = true;
                            cmd.indentation.data[idx] = d;
                        }
                    }
                }
            }
            ContactMode::Peg { half } => {
                let support = self.tip_support(half, pose);
                self.tip_height = z.max(support);
                let squeeze = support - z;
                if squeeze > 0.0 {
                    for o in Arm::tip_points(half) {
                        let p = self.world(o, pose);
                        if let Some(s) = self.surface_height(p) {
                            if s >= support - 2e-4 {
                                contacts.push((o, self.surface.gradient(p)));
                            }
                        }
                    }
                    let n = contacts.len() as f64;
                    let c = contacts.iter().fold([0.0, 0.0], |a, (o, _)| [a[0] + o[0] / n, a[1] + o[1] / n]);
                    let rho2: f64 = (0..shape.len())
                        .map(|i| {
                            let r = node_offset(shape, i);
                            r[0] * r[0] + r[1] * r[1]
                        })
                        .sum::<f64>()
                        / shape.len() as f64;
                    for idx in 0..shape.len() {
                        let r = node_offset(shape, idx);
                        let w = 1.0 + (r[0] * c[0] + r[1] * c[1]) / rho2;
                        let d = squeeze * w.max(0.0);
                        if d > 0.0 {
                            cmd.mask.data[idx] = true;
                            cmd.indentation.data[idx] = d;
                        }
                    }
                }
            }
            ContactMode::Holder => {
                self.tip_height = z;
                let load = HOLDER_PRELOAD + self.external_load;
                let grip = Mask::rect(shape, 2, shape.nx - 2, 2, shape.ny - 2);
                let k = self.nominal.k_e * grip.count() as f64 * self.state.h * self.state.h;
                cmd = ContactCommand::uniform(grip, load / k);
            }
        }
        (cmd, contacts)
    }

    fn pad_gains(&self, nodes: usize) -> (f64, f64) {
        let a = nodes as f64 * self.state.h * self.state.h;
        ((self.nominal.k_e + self.nominal.k_m) * a, self.nominal.k_v * a)
    }

    /// One control period under `cmd` (target pose and compliance).
    pub fn cycle(&mut self, cmd: &ArmTarget, t: f64) -> Result<()> {
        let c = cmd.compliance;
        c.validate()?;
        let contact_nodes = self.applied.mask.count();

        // Normal axis.
        let prev = self.normal;
        self.drag = 0.0;
        let mut next = match self.mode {
            ContactMode::Holder => {
                self.normal.rest_depth = -cmd.position[2];
                // The load falls off as the fixture gives way under the other pad.
                let (k_env, c_env) = self.external_k;
                admittance_step_damped(&self.normal, 0.0, -self.external_load, &c, k_env, c_env, CONTROL_DT)?
            }
            _ => {
                self.normal.rest_depth = self.start_height() - cmd.position[2];
                let (k_env, c_env) = self.pad_gains(contact_nodes);
                let f_meas = (self.force + k_env * self.surface_shift).max(0.0);
                self.surface_shift = 0.0;
                let free = admittance_step_damped(&self.normal, 0.0, f_meas, &c, k_env, c_env, CONTROL_DT)?;
                let inside =
                    matches!(self.mode, ContactMode::Peg { .. }) && self.tip_height < self.surface_z - CHAMFER - 5e-4;
                if inside && free.ref_depth > prev.ref_depth {
                    let friction = self.fit_friction + WALL_FRICTION * self.wall_force;
                    let push = c.lambda1 * (self.normal.rest_depth - prev.ref_depth) - self.force;
                    self.drag = friction.min(push.max(0.0));
                    let held =
                        admittance_step_damped(&self.normal, 0.0, f_meas + friction, &c, k_env, c_env, CONTROL_DT)?;
                    if held.ref_depth <= prev.ref_depth {
                        let mut stuck = prev;
                        stuck.ref_velocity = 0.0;
                        stuck.rest_depth = self.normal.rest_depth;
                        stuck
                    } else {
                        held
                    }
                } else {
                    free
                }
            }
        };
        next.rest_depth = self.normal.rest_depth;
        self.normal = next;

        // Planar axes and yaw.
        self.wall_force = 0.0;
        if self.mode != ContactMode::Holder {
            let k = c.lambda1;
            let targets = [cmd.position[0], cmd.position[1], YAW_LEVER * cmd.yaw];
            let loads = [self.lateral_force[0], self.lateral_force[1], self.torque / YAW_LEVER];
            let mut axes = [self.lateral[0], self.lateral[1], self.yaw];
            for a in 0..3 {
                let (kc, cc) = self.contact_k[a];
                let eq = (k * targets[a] + loads[a] + kc * axes[a].0 + cc * axes[a].1) / (k + kc);
                let (x, v) =
                    spring_damper_step(axes[a].0 - eq, axes[a].1, VIRTUAL_MASS, c.lambda2 + cc, k + kc, CONTROL_DT);
                let mut trial = axes;
                trial[a] = (x + eq, v);
                if let ContactMode::Peg { half } = self.mode {
                    let pose = ([trial[0].0, trial[1].0], trial[2].0 / YAW_LEVER);
                    if self.tip_support(half, pose) > self.tip_height + WALL_JUMP {
                        // Blocked by a wall: the spring load goes into the wall.
                        let push = (k * (targets[a] - axes[a].0)).abs();
                        self.wall_force += if a == 2 { push * YAW_LEVER / half[0].min(half[1]) } else { push };
                        axes[a].1 = 0.0;
                        continue;
                    }
                }
                axes[a] = trial[a];
            }
            self.lateral = [axes[0], axes[1]];
            self.yaw = axes[2];
        }

        // Pad.
        let (target, contacts) = self.indentation();
        let from = self.applied.clone();
        let dt = CONTROL_DT / SUBSTEPS as f64;
        for k in 1..=SUBSTEPS {
            let a = k as f64 / SUBSTEPS as f64;
            let mut sub = target.clone();
            for idx in 0..sub.indentation.data.len() {
                if sub.mask.data[idx] {
                    let d0 = if from.mask.data[idx] { from.indentation.data[idx] } else { 0.0 };
                    sub.indentation.data[idx] = d0 + a * (sub.indentation.data[idx] - d0);
                }
            }
            self.state = step(&self.state, &sub, &self.truth, dt)?;
        }
        self.applied = target;

        // Sensing.
        let ff = self.sensor.sample_force(&self.state, &self.truth, t)?;
        let area = self.state.h * self.state.h;
        self.force = ff.pressures.data.iter().map(|kpa| kpa * 1e3 * area).sum();
        let true_pressure = self.state.contact_pressure(&self.truth);
        self.lateral_force = [0.0; 2];
        self.torque = 0.0;
        self.contact_k = [(0.0, 0.0); 3];
        let pose = self.pose();
        let l2 = YAW_LEVER * YAW_LEVER;
        match self.mode {
            ContactMode::Direct => {
                let shape = self.state.shape();
                for idx in 0..shape.len() {
                    if !self.state.contact_mask.data[idx] {
                        continue;
                    }
                    let f = true_pressure.data[idx].max(0.0) * area;
                    let off = rotate(node_offset(shape, idx), pose.1);
                    let g = self.surface.gradient([pose.0[0] + off[0], pose.0[1] + off[1]]);
                    let fl = [-f * g[0], -f * g[1]];
                    self.lateral_force[0] += fl[0];
                    self.lateral_force[1] += fl[1];
                    self.torque += off[0] * fl[1] - off[1] * fl[0];
                    let (kn, cn) = self.pad_gains(1);
                    let arm = off[0] * g[1] - off[1] * g[0];
                    for (gain, w) in self.contact_k.iter_mut().zip([g[0] * g[0], g[1] * g[1], arm * arm / l2]) {
                        gain.0 += kn * w;
                        gain.1 += cn * w;
                    }
                }
            }
            ContactMode::Peg { .. } if !contacts.is_empty() => {
                let total = contact_force(&self.state, &self.truth);
                let n = contacts.len() as f64;
                let share = total / n;
                let (kp, cp) = self.pad_gains(self.applied.mask.count());
                let (kn, cn) = (kp / n, cp / n);
                for (o, g) in &contacts {
                    let off = rotate(*o, pose.1);
                    let fl = [-share * g[0], -share * g[1]];
                    self.lateral_force[0] += fl[0];
                    self.lateral_force[1] += fl[1];
                    self.torque += off[0] * fl[1] - off[1] * fl[0];
                    let arm = off[0] * g[1] - off[1] * g[0];
                    for (gain, w) in self.contact_k.iter_mut().zip([g[0] * g[0], g[1] * g[1], arm * arm / l2]) {
                        gain.0 += kn * w;
                        gain.1 += cn * w;
                    }
                }
            }
            _ => {}
        }
        if let Some(id) = self.identifier.as_mut() {
            let pa = Field { shape: ff.pressures.shape, data: ff.pressures.data.iter().map(|v| v * 1e3).collect() };
            if self.history.record(&self.state, &pa, t, id.config())? {
                if let Some(e) = id.step(&self.history, &self.nominal) {
                    self.estimate = Some(e);
                }
            }
        }
        self.force_field = ff;
        self.channel = ControllerChannel {
            z_cmd: cmd.position[2],
            z: self.height(),
            force: self.force,
            saturated: self.normal.saturated,
        };
        Ok(())
    }
}

/// What an arm is told to do over one control period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmTarget {
    pub position: [f64; 3],
    pub yaw: f64,
    pub compliance: ComplianceParams,
}

impl ArmTarget {
    pub fn from_action(a: &ArmAction) -> Self {
        ArmTarget { position: a.position, yaw: a.orientation[2], compliance: a.compliance.clamped() }
    }

    fn lerp(a: &ArmTarget, b: &ArmTarget, s: f64) -> ArmTarget {
        let l = |x: f64, y: f64| x + s * (y - x);
        ArmTarget {
            position: [
                l(a.position[0], b.position[0]),
                l(a.position[1], b.position[1]),
                l(a.position[2], b.position[2]),
            ],
            yaw: l(a.yaw, b.yaw),
            compliance: b.compliance,
        }
    }
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub success: bool,
    /// Highest phase reached.
    pub phase: Phase,
    /// N
    pub peak_force: f64,
    /// Fraction of main-phase cycles with the force in the task band.
    pub in_band: f64,
    /// Simulated duration, s.
    pub sim_time: f64,
    /// s; left out of serialized results so they are reproducible.
    #[serde(skip_serializing, default)]
    pub wall_time: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnvOptions {
    /// Run the material observer on every arm.
    pub observer: bool,
}

/// One randomized trial of a task.
#[derive(Debug, Clone)]
pub struct TaskEnv {
    pub spec: TaskSpec,
    pub setup: TrialSetup,
    pub arms: Vec<Arm>,
    phase: Phase,
    t: f64,
    cycles: u64,
    phase_start: f64,
    streak: f64,
    best_streak: f64,
    band_hits: usize,
    band_total: usize,
    start_x: f64,
    peak: f64,
    done: bool,
    failure: Option<String>,
    last_target: Vec<Option<ArmTarget>>,
}

impl TaskEnv {
    pub fn new(spec: &TaskSpec, seed: u64, options: EnvOptions) -> Result<Self> {
        spec.validate()?;
        let setup = TrialSetup::sample(spec, seed);
        let nominal = MaterialParams::default();
        let sensor =
            |k: u64| TactileSensor::new(GridShape::SENSOR, spec.noise_rms_kpa, seed.wrapping_mul(31).wrapping_add(k));
        let truth = |k: usize| nominal.scaled(setup.material_factor[k]);
        let mut arms = Vec::new();
        match spec.task {
            TaskId::PressHold => {
                let block = Surface::Block { centre: setup.offset, half: [0.008, 0.008] };
                arms.push(Arm::new(
                    ContactMode::Direct,
                    block,
                    truth(0),
                    nominal,
                    sensor(0)?,
                    [0.0, 0.0],
                    options.observer,
                )?);
            }
            TaskId::Wipe => {
                let board =
                    Surface::Board { slope: setup.tilt, amplitude: 3e-4, wavelength: 0.04, phase: setup.wave_phase };
                let start = [setup.offset[0] - spec.path_length / 2.0, 0.0];
                arms.push(Arm::new(
                    ContactMode::Direct,
                    board,
                    truth(0),
                    nominal,
                    sensor(0)?,
                    start,
                    options.observer,
                )?);
            }
            TaskId::Insert => {
                let hole = TaskEnv::hole(spec, &setup);
                let mut a = Arm::new(
                    ContactMode::Peg { half: PEG_HALF },
                    hole,
                    truth(0),
                    nominal,
                    sensor(0)?,
                    [0.0, 0.0],
                    options.observer,
                )?;
                a.fit_friction = setup.fit_friction;
                arms.push(a);
            }
            TaskId::BimanualInsert => {
                let hole = TaskEnv::hole(spec, &setup);
                let holder = Surface::Block { centre: [0.0, 0.0], half: [1.0, 1.0] };
                arms.push(Arm::new(
                    ContactMode::Holder,
                    holder,
                    truth(0),
                    nominal,
                    sensor(0)?,
                    [0.0, 0.0],
                    options.observer,
                )?);
                let mut a = Arm::new(
                    ContactMode::Peg { half: PEG_HALF },
                    hole,
                    truth(1),
                    nominal,
                    sensor(1)?,
                    [0.0, 0.0],
                    options.observer,
                )?;
                a.fit_friction = setup.fit_friction * 0.5;
                arms.push(a);
            }
        }
        let n = arms.len();
        let mut env = TaskEnv {
            spec: spec.clone(),
            setup,
            arms,
            phase: Phase::Approach,
            t: 0.0,
            cycles: 0,
            phase_start: 0.0,
            streak: 0.0,
            best_streak: 0.0,
            band_hits: 0,
            band_total: 0,
            start_x: 0.0,
            peak: 0.0,
            done: false,
            failure: None,
            last_target: vec![None; n],
        };
        // Fields at t = 0 so the first observation is well formed.
        for a in env.arms.iter_mut() {
            a.force_field = a.sensor.sample_force(&a.state, &a.truth, 0.0)?;
        }
        if spec.time_limit <= 0.0 {
            env.failure = Some("time limit reached in approach".into());
        }
        Ok(env)
    }

    fn hole(spec: &TaskSpec, setup: &TrialSetup) -> Surface {
        let t = spec.tolerance;
        Surface::Hole {
            centre: setup.offset,
            yaw: setup.yaw,
            half: [PEG_HALF[0] + t, PEG_HALF[1] + t],
            chamfer: CHAMFER,
            depth: HOLE_DEPTH,
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn phase_time(&self) -> f64 {
        self.t - self.phase_start
    }

    pub fn finished(&self) -> bool {
        self.done || self.failure.is_some()
    }

    pub fn peak_force(&self) -> f64 {
        self.peak
    }

    /// Index of the arm whose contact drives the phase machine.
    pub fn lead_arm(&self) -> usize {
        self.arms.len() - 1
    }

    /// x where the wipe traverse started.
    pub fn traverse_start(&self) -> f64 {
        self.start_x
    }

    pub fn observation(&self) -> Observation {
        Observation { arms: self.arms.iter().map(|a| a.observation(self.t)).collect(), views: Vec::new() }
    }

    /// Runs one action period: the pose is ramped linearly from the last
    /// action over the period. A change of compliance takes the new pose at
    /// once, since the old reference means a different force.
    pub fn step(&mut self, action: &Action) -> Result<()> {
        if action.arms.len() != self.arms.len() {
            return Err(Error::config(format!(
                "action for {} arms on a {}-arm task",
                action.arms.len(),
                self.arms.len()
            )));
        }
        let targets: Vec<ArmTarget> = action.arms.iter().map(ArmTarget::from_action).collect();
        for k in 1..=CYCLES_PER_ACTION {
            if self.finished() {
                break;
            }
            let s = k as f64 / CYCLES_PER_ACTION as f64;
            let now: Vec<ArmTarget> = targets
                .iter()
                .zip(&self.last_target)
                .map(|(b, a)| match a {
                    Some(a) if a.compliance == b.compliance => ArmTarget::lerp(a, b, s),
                    _ => *b,
                })
                .collect();
            self.cycle(&now)?;
        }
        self.last_target = targets.into_iter().map(Some).collect();
        Ok(())
    }

    fn cycle(&mut self, targets: &[ArmTarget]) -> Result<()> {
        self.t += CONTROL_DT;
        self.cycles += 1;
        if self.spec.task == TaskId::BimanualInsert {
            self.arms[0].external_load = self.arms[1].load();
            self.arms[0].external_k = self.arms[1].contact_gains();
        }
        for k in 0..self.arms.len() {
            self.arms[k].cycle(&targets[k], self.t)?;
            if self.spec.task == TaskId::BimanualInsert && k == 0 {
                let z = -self.arms[0].displacement();
                self.arms[1].move_surface(z);
            }
        }
        if self.spec.task == TaskId::BimanualInsert && self.arms[0].displacement() > FIXTURE_SLIP {
            self.fail("fixture pushed out of the holder's grasp");
        }
        for a in self.arms.iter().filter(|a| a.mode != ContactMode::Holder) {
            self.peak = self.peak.max(a.force());
        }
        if self.peak > self.spec.max_force {
            let msg = format!("contact force {:.2} N above {} N", self.peak, self.spec.max_force);
            self.fail(&msg);
        }
        self.advance();
        if !self.finished() && self.t >= self.spec.time_limit - 1e-9 {
            let msg = format!("time limit reached in {}", self.phase.label(self.spec.task));
            self.fail(&msg);
        }
        Ok(())
    }

    fn fail(&mut self, why: &str) {
        if self.failure.is_none() && !self.done {
            self.failure = Some(format!("{why} (phase {})", self.phase.label(self.spec.task)));
        }
    }

    fn enter(&mut self, p: Phase) {
        if p > self.phase {
            self.phase = p;
            self.phase_start = self.t;
        }
    }

    fn advance(&mut self) {
        let lead = &self.arms[self.lead_arm()];
        let f = lead.force();
        let fd = self.spec.force_target;
        match self.spec.task {
            TaskId::PressHold => {
                let in_band = (f - fd).abs() <= 0.05 * fd;
                if self.phase == Phase::Approach && f > CONTACT_FORCE {
                    self.enter(Phase::Contact);
                }
                if self.phase == Phase::Contact && f >= 0.8 * fd {
                    self.enter(Phase::Engage);
                }
                if self.phase == Phase::Engage && in_band {
                    self.enter(Phase::Main);
                }
                if self.phase == Phase::Main {
                    self.streak = if in_band { self.streak + CONTROL_DT } else { 0.0 };
                    self.best_streak = self.best_streak.max(self.streak);
                    self.band_total += 1;
                    self.band_hits += in_band as usize;
                    if self.phase_time() >= HOLD_TIME - 1e-9 {
                        self.enter(Phase::Release);
                    }
                } else if self.phase == Phase::Release && f < FREE_FORCE {
                    self.done = true;
                }
            }
            TaskId::Wipe => {
                let in_band = f >= 0.75 * fd && f <= 1.25 * fd;
                let x = lead.position()[0];
                if self.phase == Phase::Approach && f > CONTACT_FORCE {
                    self.enter(Phase::Contact);
                }
                if self.phase == Phase::Contact && f >= 0.75 * fd {
                    self.enter(Phase::Engage);
                }
                if self.phase == Phase::Engage && in_band {
                    self.enter(Phase::Main);
                    self.start_x = x;
                }
                if self.phase == Phase::Main {
                    self.band_total += 1;
                    self.band_hits += in_band as usize;
                    if x - self.start_x >= self.spec.path_length - 1e-3 {
                        self.enter(Phase::Release);
                    }
                } else if self.phase == Phase::Release && f < FREE_FORCE {
                    self.done = true;
                }
            }
            TaskId::Insert | TaskId::BimanualInsert => {
                let top = lead.surface_z;
                let tip = lead.tip_height();
                let inside = tip < top - CHAMFER - 5e-4;
                if self.phase == Phase::Approach && (f > CONTACT_FORCE || inside) {
                    self.enter(Phase::Contact);
                }
                if self.phase == Phase::Contact && (f >= 0.6 * fd || inside) {
                    self.enter(Phase::Engage);
                }
                if self.phase == Phase::Engage && inside {
                    self.enter(Phase::Main);
                }
                if self.phase == Phase::Main {
                    let in_band = f <= self.spec.max_force;
                    self.band_total += 1;
                    self.band_hits += in_band as usize;
                    if tip <= top - INSERT_TARGET_DEPTH {
                        self.enter(Phase::Release);
                    }
                } else if self.phase == Phase::Release && self.phase_time() >= RELEASE_TIME - 1e-9 {
                    self.done = true;
                }
            }
        }
    }

    /// Peg centre offset from the hole centre, largest component in the
    /// hole frame, m. Zero for tasks without a hole.
    pub fn lateral_offset(&self) -> f64 {
        let lead = &self.arms[self.lead_arm()];
        match lead.surface {
            Surface::Hole { centre, yaw, .. } => {
                let p = lead.position();
                let local = rotate([p[0] - centre[0], p[1] - centre[1]], -yaw);
                local[0].abs().max(local[1].abs())
            }
            _ => 0.0,
        }
    }

    pub fn success(&self) -> bool {
        if !self.done || self.failure.is_some() || self.peak > self.spec.max_force {
            return false;
        }
        match self.spec.task {
            TaskId::PressHold => self.best_streak >= HOLD_BAND_TIME - 1e-9,
            TaskId::Wipe => self.band_total == 0 || self.band_hits as f64 >= 0.9 * self.band_total as f64,
            TaskId::Insert | TaskId::BimanualInsert => self.lateral_offset() <= self.spec.tolerance + 1e-9,
        }
    }

    pub fn result(&self, wall_time: f64) -> TrialResult {
        let success = self.success();
        let failure = if success {
            None
        } else {
            Some(self.failure.clone().unwrap_or_else(|| {
                if self.done {
                    format!("success predicate not met (phase {})", self.phase.label(self.spec.task))
                } else {
                    format!("stopped in {}", self.phase.label(self.spec.task))
                }
            }))
        };
        TrialResult {
            seed: self.setup.seed,
            success,
            phase: self.phase,
            peak_force: self.peak,
            in_band: if self.band_total == 0 { 1.0 } else { self.band_hits as f64 / self.band_total as f64 },
            sim_time: self.t,
            wall_time,
            failure,
        }
    }

    /// Preset that the arm's commanded λ1 is closest to.
    pub fn active_presets(&self) -> Vec<PresetName> {
        self.last_target
            .iter()
            .map(|t| t.map(|t| PresetName::nearest(t.compliance.lambda1)).unwrap_or(PresetName::Mid))
            .collect()
    }
}

/// Neutral hand posture: all joints at zero.
pub const OPEN_HAND: [f64; JOINTS] = [0.0; JOINTS];
