//! Teleoperation session: scales operator motion, clamps it for safety,
//! drives a task trial one action period per tick and records episodes.
//!
//! Message schema. Text messages are JSON envelopes
//! `{"type": ..., "seq": n, "payload": {...}}`.
//!
//! Client to server:
//!
//! | type           | payload                                  |
//! |----------------|------------------------------------------|
//! | `hello`        | `{client}`                               |
//! | `command_pose` | `{arm, delta: [dx, dy, dz, rx, ry, rz]}` |
//! | `set_preset`   | `{arm, preset: "low" \| "mid" \| "high"}` |
//! | `rezero`       | `{}`                                     |
//! | `record_start` | `{}`                                     |
//! | `record_stop`  | `{}`                                     |
//!
//! `delta` is hand motion (m, rad) relative to the reference pose set at
//! the last `rezero`. `seq` must grow across `command_pose`, `set_preset`
//! and `rezero`; older commands are dropped with a notice.
//!
//! Server to client: `hello` ([`Hello`]), `state` ([`StatePacket`]) at the
//! stream rate, `ack` ([`Ack`]), `cue` ([`CueEvent`]) when flags change,
//! `recording` ([`RecordingStatus`]), `error` (`{message}`).
//! Every `state` text message is followed by one binary message:
//!
//! ```text
//! b"CFST"  u64 packet seq  u32 arms  u32 nx  u32 ny
//! per arm: nx*ny f32 force (kPa), nx*ny f32 deformation (m)
//! ```
//!
//! all little-endian, row-major.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::controller::{safety_clamp, PresetName, SafetyLimits, Violations};
use crate::dataset::{quantize_action, Episode, EpisodeHeader, Frame};
use crate::error::{Error, Result};
use crate::grid::{GridShape, Mask, SENSOR_SPACING};
use crate::policy::action::{Action, ArmAction, JOINTS, PERIOD};
use crate::sim::{ContactCommand, MaterialParams};
use crate::tactile::{features, FieldFeatures};
use crate::tasks::env::{ContactMode, EnvOptions, TaskEnv};
use crate::tasks::{TaskId, TaskSpec};

pub const DEFAULT_SCALE: f64 = 1.5;
pub const DEFAULT_STREAM_HZ: f64 = 60.0;
pub const FIELD_MAGIC: &[u8; 4] = b"CFST";
const GRIP: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeleopConfig {
    pub spec: TaskSpec,
    /// Seed of the first trial; each recording starts the next one.
    pub seed: u64,
    /// Robot motion per unit of hand motion.
    pub motion_scale: f64,
    /// Force cue threshold, N.
    pub max_force: f64,
    /// Deformation cue threshold, mm.
    pub max_deformation_mm: f64,
    /// Half extent of the workspace box around the start pose, m.
    pub workspace: f64,
    pub stream_hz: f64,
    pub observer: bool,
}

impl Default for TeleopConfig {
    fn default() -> Self {
        TeleopConfig {
            spec: TaskSpec::default_for(TaskId::PressHold),
            seed: 0,
            motion_scale: DEFAULT_SCALE,
            max_force: 10.0,
            max_deformation_mm: 8.0,
            workspace: 0.1,
            stream_hz: DEFAULT_STREAM_HZ,
            observer: true,
        }
    }
}

impl TeleopConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let pos = [
            ("motion_scale", self.motion_scale),
            ("max_force", self.max_force),
            ("max_deformation_mm", self.max_deformation_mm),
            ("workspace", self.workspace),
        ];
        for (k, v) in pos {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{k} = {v} must be positive")));
            }
        }
        if !(self.stream_hz > 0.0 && self.stream_hz <= 1000.0) {
            return Err(Error::config(format!("stream_hz {} outside (0, 1000]", self.stream_hz)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub seq: u64,
    pub applied: bool,
    /// The command was changed by the workspace or safety clamp.
    pub clamped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cues {
    pub force: bool,
    pub deformation: bool,
    pub workspace: bool,
}

impl Cues {
    pub fn any(&self) -> bool {
        self.force || self.deformation || self.workspace
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    /// Position (m) then axis-angle orientation.
    pub pose: [f64; 6],
    /// Commanded pose after clamping.
    pub command: [f64; 6],
    /// Measured normal force, N.
    pub force: f64,
    /// Steady force of the last command before clamping, N.
    pub predicted_force: f64,
    pub features: FieldFeatures,
    pub preset: PresetName,
    pub cues: Cues,
    /// kPa, row-major; sent in the binary message.
    #[serde(skip)]
    pub force_field: Vec<f64>,
    /// m, row-major; sent in the binary message.
    #[serde(skip)]
    pub deformation_field: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePacket {
    /// Packet counter.
    pub packet: u64,
    /// Simulated time, s.
    pub t: f64,
    pub phase: String,
    pub finished: bool,
    pub recording: bool,
    pub arms: Vec<ArmState>,
}

impl StatePacket {
    pub fn cues(&self) -> Vec<Cues> {
        self.arms.iter().map(|a| a.cues).collect()
    }

    /// Binary field message that follows the text packet.
    pub fn field_bytes(&self) -> Vec<u8> {
        let shape = GridShape::SENSOR;
        let mut out = Vec::with_capacity(24 + self.arms.len() * 8 * shape.len());
        out.extend_from_slice(FIELD_MAGIC);
        out.extend_from_slice(&self.packet.to_le_bytes());
        out.extend_from_slice(&(self.arms.len() as u32).to_le_bytes());
        out.extend_from_slice(&(shape.nx as u32).to_le_bytes());
        out.extend_from_slice(&(shape.ny as u32).to_le_bytes());
        for a in &self.arms {
            for v in a.force_field.iter().chain(&a.deformation_field) {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }
}

/// Decoded binary field message: packet seq and per-arm (force, deformation).
pub fn parse_field_bytes(b: &[u8]) -> Result<(u64, Vec<(Vec<f32>, Vec<f32>)>)> {
    if b.len() < 24 || &b[..4] != FIELD_MAGIC {
        return Err(Error::Format("not a field message".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().expect("4 bytes")) as usize;
    let packet = u64::from_le_bytes(b[4..12].try_into().expect("8 bytes"));
    let (arms, n) = (u32_at(12), u32_at(16) * u32_at(20));
    if b.len() != 24 + arms * 8 * n {
        return Err(Error::Format(format!("field message of {} bytes for {arms} arms x {n} nodes", b.len())));
    }
    let vals: Vec<f32> = b[24..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    let out = vals.chunks_exact(2 * n).map(|c| (c[..n].to_vec(), c[n..].to_vec())).collect();
    Ok((packet, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub session: u64,
    pub task: TaskId,
    pub arms: usize,
    pub motion_scale: f64,
    pub max_force: f64,
    pub max_deformation_mm: f64,
    pub stream_hz: f64,
    /// nx, ny
    pub grid: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueEvent {
    pub t: f64,
    pub cues: Vec<Cues>,
}

/// A finalized recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeRef {
    /// Position in [`TeleopSession::episodes`].
    pub index: usize,
    pub frames: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingStatus {
    pub recording: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode: Option<EpisodeRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientMessage {
    Hello { client: String },
    CommandPose { seq: u64, arm: usize, delta: [f64; 6] },
    SetPreset { seq: u64, arm: usize, preset: PresetName },
    Rezero { seq: u64 },
    RecordStart,
    RecordStop,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ServerMessage {
    Hello(Hello),
    State(StatePacket),
    Ack(Ack),
    Cue(CueEvent),
    Recording(RecordingStatus),
    Error(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Envelope {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    seq: u64,
    #[serde(default)]
    payload: Value,
}

fn envelope(kind: &str, seq: u64, payload: impl Serialize) -> String {
    let e = Envelope { kind: kind.into(), seq, payload: serde_json::to_value(payload).expect("payload serializes") };
    serde_json::to_string(&e).expect("envelope serializes")
}

fn field<T: for<'de> Deserialize<'de>>(p: &Value, k: &str) -> Result<T> {
    let v = p.get(k).ok_or_else(|| Error::Format(format!("payload lacks '{k}'")))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::Format(format!("payload '{k}': {e}")))
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self> {
        let e: Envelope = serde_json::from_str(text).map_err(|e| Error::Format(format!("message: {e}")))?;
        let p = &e.payload;
        Ok(match e.kind.as_str() {
            "hello" => ClientMessage::Hello { client: field(p, "client").unwrap_or_default() },
            "command_pose" => {
                ClientMessage::CommandPose { seq: e.seq, arm: field(p, "arm")?, delta: field(p, "delta")? }
            }
            "set_preset" => ClientMessage::SetPreset {
                seq: e.seq,
                arm: field(p, "arm")?,
                preset: PresetName::parse(&field::<String>(p, "preset")?).map_err(|e| Error::Format(e.to_string()))?,
            },
            "rezero" => ClientMessage::Rezero { seq: e.seq },
            "record_start" => ClientMessage::RecordStart,
            "record_stop" => ClientMessage::RecordStop,
            other => return Err(Error::Format(format!("unknown message type '{other}'"))),
        })
    }

    pub fn to_text(&self) -> String {
        use serde_json::json;
        match self {
            ClientMessage::Hello { client } => envelope("hello", 0, json!({ "client": client })),
            ClientMessage::CommandPose { seq, arm, delta } => {
                envelope("command_pose", *seq, json!({ "arm": arm, "delta": delta }))
            }
            ClientMessage::SetPreset { seq, arm, preset } => {
                envelope("set_preset", *seq, json!({ "arm": arm, "preset": preset.as_str() }))
            }
            ClientMessage::Rezero { seq } => envelope("rezero", *seq, json!({})),
            ClientMessage::RecordStart => envelope("record_start", 0, json!({})),
            ClientMessage::RecordStop => envelope("record_stop", 0, json!({})),
        }
    }
}

fn payload<T: for<'de> Deserialize<'de>>(v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::Format(format!("payload: {e}")))
}

impl ServerMessage {
    pub fn to_text(&self) -> String {
        match self {
            ServerMessage::Hello(h) => envelope("hello", 0, h),
            ServerMessage::State(s) => envelope("state", s.packet, s),
            ServerMessage::Ack(a) => envelope("ack", a.seq, a),
            ServerMessage::Cue(c) => envelope("cue", 0, c),
            ServerMessage::Recording(r) => envelope("recording", 0, r),
            ServerMessage::Error(m) => envelope("error", 0, serde_json::json!({ "message": m })),
        }
    }

    /// Inverse of [`ServerMessage::to_text`]; state packets come back
    /// without their fields.
    pub fn parse(text: &str) -> Result<Self> {
        let e: Envelope = serde_json::from_str(text).map_err(|e| Error::Format(format!("message: {e}")))?;
        Ok(match e.kind.as_str() {
            "hello" => ServerMessage::Hello(payload(e.payload)?),
            "state" => ServerMessage::State(payload(e.payload)?),
            "ack" => ServerMessage::Ack(payload(e.payload)?),
            "cue" => ServerMessage::Cue(payload(e.payload)?),
            "recording" => ServerMessage::Recording(payload(e.payload)?),
            "error" => ServerMessage::Error(field(&e.payload, "message")?),
            other => return Err(Error::Format(format!("unknown message type '{other}'"))),
        })
    }
}

#[derive(Debug, Clone)]
struct ArmCommand {
    anchor: [f64; 6],
    target: [f64; 6],
    origin: [f64; 3],
    preset: PresetName,
    violations: Violations,
    workspace_hit: bool,
}

struct Recording {
    header: EpisodeHeader,
    frames: Vec<Frame>,
}

/// One operator session over a sequence of task trials.
pub struct TeleopSession {
    id: u64,
    config: TeleopConfig,
    env: TaskEnv,
    trial_seed: u64,
    arms: Vec<ArmCommand>,
    last_seq: Option<u64>,
    packets: u64,
    last_cues: Vec<Cues>,
    recording: Option<Recording>,
    episodes: Vec<Episode>,
    last_stop: Option<EpisodeRef>,
    closed: bool,
}

impl TeleopSession {
    pub fn open(id: u64, config: TeleopConfig) -> Result<Self> {
        config.validate()?;
        let env = TaskEnv::new(&config.spec, config.seed, EnvOptions { observer: config.observer })?;
        let arms = TeleopSession::fresh_arms(&env);
        let n = arms.len();
        Ok(TeleopSession {
            id,
            trial_seed: config.seed,
            config,
            env,
            arms,
            last_seq: None,
            packets: 0,
            last_cues: vec![Cues::default(); n],
            recording: None,
            episodes: Vec::new(),
            last_stop: None,
            closed: false,
        })
    }

    fn fresh_arms(env: &TaskEnv) -> Vec<ArmCommand> {
        env.arms
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let p = a.position();
                let pose = [p[0], p[1], p[2], 0.0, 0.0, 0.0];
                ArmCommand {
                    anchor: pose,
                    target: pose,
                    origin: p,
                    preset: env.spec.preset(k, crate::tasks::Phase::Approach),
                    violations: Violations::default(),
                    workspace_hit: false,
                }
            })
            .collect()
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn config(&self) -> &TeleopConfig {
        &self.config
    }

    pub fn env(&self) -> &TaskEnv {
        &self.env
    }

    pub fn is_recording(&self) -> bool {
        self.recording.is_some()
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    /// Commanded pose of `arm` after scaling and clamping.
    pub fn command(&self, arm: usize) -> Option<[f64; 6]> {
        self.arms.get(arm).map(|a| a.target)
    }

    pub fn hello(&self) -> Hello {
        Hello {
            session: self.id,
            task: self.config.spec.task,
            arms: self.arms.len(),
            motion_scale: self.config.motion_scale,
            max_force: self.config.max_force,
            max_deformation_mm: self.config.max_deformation_mm,
            stream_hz: self.config.stream_hz,
            grid: [GridShape::SENSOR.nx, GridShape::SENSOR.ny],
        }
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    fn live(&self) -> Result<()> {
        if self.closed {
            Err(Error::Session(format!("session {} is closed", self.id)))
        } else {
            Ok(())
        }
    }

    /// Returns a notice when `seq` is not newer than the last command.
    fn fresh(&mut self, seq: u64) -> Option<String> {
        match self.last_seq {
            Some(last) if seq <= last => Some(format!("stale command {seq} dropped (last applied {last})")),
            _ => {
                self.last_seq = Some(seq);
                None
            }
        }
    }

    fn arm_index(&self, arm: usize) -> Result<usize> {
        if arm < self.arms.len() {
            Ok(arm)
        } else {
            Err(Error::Session(format!("no arm {arm} in a {}-arm task", self.arms.len())))
        }
    }

    fn dropped(seq: u64, notice: String) -> Ack {
        Ack { seq, applied: false, clamped: false, notice: Some(notice) }
    }

    /// Height of the nominal surface under `p`, if any.
    fn plane(&self, arm: usize, p: [f64; 2]) -> Option<f64> {
        let a = &self.env.arms[arm];
        a.surface.height(p).map(|h| h + a.surface_z)
    }

    pub fn command_pose(&mut self, seq: u64, arm: usize, delta: [f64; 6]) -> Result<Ack> {
        self.live()?;
        let arm = self.arm_index(arm)?;
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite pose delta"));
        }
        if let Some(n) = self.fresh(seq) {
            return Ok(TeleopSession::dropped(seq, n));
        }
        let s = self.config.motion_scale;
        let w = self.config.workspace;
        let c = &self.arms[arm];
        let mut target = c.anchor;
        for i in 0..3 {
            target[i] += s * delta[i];
            target[i + 3] += delta[i + 3];
        }
        let mut workspace_hit = false;
        for i in 0..3 {
            let v = target[i].clamp(c.origin[i] - w, c.origin[i] + w);
            workspace_hit |= v != target[i];
            target[i] = v;
        }
        let mut violations = Violations::default();
        if self.env.arms[arm].mode != ContactMode::Holder {
            if let Some(plane) = self.plane(arm, [target[0], target[1]]) {
                let depth = (plane - target[2]).max(0.0);
                let limits =
                    SafetyLimits { max_force: self.config.max_force, max_depth: self.config.max_deformation_mm * 1e-3 };
                let cmd = ContactCommand::uniform(Mask::full(GridShape::SENSOR), depth);
                let (safe, v) = safety_clamp(&cmd, &limits, MaterialParams::default().k_e, SENSOR_SPACING)?;
                violations = v;
                if v.any() {
                    target[2] = plane - safe.max_depth();
                }
            }
        }
        let c = &mut self.arms[arm];
        c.target = target;
        c.violations = violations;
        c.workspace_hit = workspace_hit;
        Ok(Ack { seq, applied: true, clamped: workspace_hit || violations.any(), notice: None })
    }

    pub fn set_preset(&mut self, seq: u64, arm: usize, preset: PresetName) -> Result<Ack> {
        self.live()?;
        let arm = self.arm_index(arm)?;
        if let Some(n) = self.fresh(seq) {
            return Ok(TeleopSession::dropped(seq, n));
        }
        self.arms[arm].preset = preset;
        Ok(Ack { seq, applied: true, clamped: false, notice: None })
    }

    /// Makes the present commanded poses the reference for later deltas.
    pub fn rezero(&mut self, seq: u64) -> Result<Ack> {
        self.live()?;
        if let Some(n) = self.fresh(seq) {
            return Ok(TeleopSession::dropped(seq, n));
        }
        for a in self.arms.iter_mut() {
            a.anchor = a.target;
        }
        Ok(Ack { seq, applied: true, clamped: false, notice: None })
    }

    /// Starts a fresh trial and records it. Already recording is a no-op.
    pub fn start_recording(&mut self) -> Result<RecordingStatus> {
        self.live()?;
        if self.recording.is_none() {
            self.trial_seed = self.config.seed + self.episodes.len() as u64;
            self.env = TaskEnv::new(&self.config.spec, self.trial_seed, EnvOptions { observer: self.config.observer })?;
            let presets: Vec<PresetName> = self.arms.iter().map(|a| a.preset).collect();
            self.arms = TeleopSession::fresh_arms(&self.env);
            for (a, p) in self.arms.iter_mut().zip(presets) {
                a.preset = p;
            }
            let mut header = EpisodeHeader::new(self.config.spec.task, "teleop");
            header.observer = self.config.observer;
            header.seed = Some(self.trial_seed);
            header.spec = Some(self.config.spec.clone());
            self.recording = Some(Recording { header, frames: Vec::new() });
        }
        Ok(RecordingStatus { recording: true, episode: None })
    }

    /// Finalizes the recording. Stopping again returns the same episode.
    pub fn stop_recording(&mut self) -> Result<EpisodeRef> {
        self.live()?;
        match self.recording.take() {
            Some(r) => {
                let ep = Episode { header: r.header, frames: r.frames, truncated: false };
                let e = EpisodeRef { index: self.episodes.len(), frames: ep.frames.len(), seed: self.trial_seed };
                self.episodes.push(ep);
                self.last_stop = Some(e);
                Ok(e)
            }
            None => self.last_stop.ok_or_else(|| Error::Session("not recording".into())),
        }
    }

    fn action(&self) -> Action {
        let release = self.env.phase() == crate::tasks::Phase::Release;
        let arms = self
            .arms
            .iter()
            .map(|a| ArmAction {
                position: [a.target[0], a.target[1], a.target[2]],
                orientation: [a.target[3], a.target[4], a.target[5]],
                joints: [if release { 0.0 } else { GRIP }; JOINTS],
                compliance: a.preset.params(),
            })
            .collect();
        quantize_action(&Action { arms })
    }

    /// Runs one action period with the freshest commands. Returns false
    /// once the trial has ended.
    pub fn tick(&mut self) -> Result<bool> {
        self.live()?;
        if self.env.finished() {
            return Ok(false);
        }
        let a = self.action();
        if let Some(r) = self.recording.as_mut() {
            r.frames.push(Frame::capture(&self.env, &a));
        }
        self.env.step(&a)?;
        Ok(true)
    }

    /// Snapshot for the stream.
    pub fn state(&mut self) -> StatePacket {
        let obs = self.env.observation();
        let mut arms = Vec::with_capacity(self.arms.len());
        for (k, (c, o)) in self.arms.iter().zip(obs.arms).enumerate() {
            let f = features(&o.force, &o.deformation);
            let force = self.env.arms[k].force();
            let cues = Cues {
                force: force > self.config.max_force || c.violations.predicted_force > self.config.max_force,
                deformation: f.max_deformation > self.config.max_deformation_mm || c.violations.depth,
                workspace: c.workspace_hit,
            };
            arms.push(ArmState {
                pose: o.pose,
                command: c.target,
                force,
                predicted_force: c.violations.predicted_force,
                features: f,
                preset: c.preset,
                cues,
                force_field: o.force.pressures.data,
                deformation_field: o.deformation.displacements.data,
            });
        }
        self.packets += 1;
        StatePacket {
            packet: self.packets,
            t: self.env.time(),
            phase: self.env.phase().label(self.config.spec.task).into(),
            finished: self.env.finished(),
            recording: self.recording.is_some(),
            arms,
        }
    }

    /// A cue event when the flags in `packet` differ from the last packet's.
    pub fn cue_change(&mut self, packet: &StatePacket) -> Option<CueEvent> {
        let cues = packet.cues();
        if cues == self.last_cues {
            return None;
        }
        self.last_cues = cues.clone();
        Some(CueEvent { t: packet.t, cues })
    }

    /// Applies a client message and returns the replies.
    pub fn handle(&mut self, msg: ClientMessage) -> Result<Vec<ServerMessage>> {
        Ok(match msg {
            ClientMessage::Hello { .. } => {
                self.live()?;
                vec![ServerMessage::Hello(self.hello())]
            }
            ClientMessage::CommandPose { seq, arm, delta } => {
                vec![ServerMessage::Ack(self.command_pose(seq, arm, delta)?)]
            }
            ClientMessage::SetPreset { seq, arm, preset } => {
                vec![ServerMessage::Ack(self.set_preset(seq, arm, preset)?)]
            }
            ClientMessage::Rezero { seq } => vec![ServerMessage::Ack(self.rezero(seq)?)],
            ClientMessage::RecordStart => vec![ServerMessage::Recording(self.start_recording()?)],
            ClientMessage::RecordStop => {
                let e = self.stop_recording()?;
                vec![ServerMessage::Recording(RecordingStatus { recording: false, episode: Some(e) })]
            }
        })
    }
}

/// Ticks per second of the session.
pub fn tick_hz() -> f64 {
    1.0 / PERIOD
}
