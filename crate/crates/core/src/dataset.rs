//! Episode files, normalization statistics, manifests and scripted demo
//! generation.
//!
//! Episode byte layout (little-endian):
//!
//! ```text
//! b"CFEP"  u32 header_len  header_len bytes of TOML header
//! repeated: u32 n  n x f32  u32 crc32(the n floats)
//! ```
//!
//! `n` always equals the header's `frame_len`. Frame layout:
//! `t, phase`, then per arm `pose[6] force[nx*ny] deformation[nx*ny]
//! action[22] preset observer[7] controller[4]`, then `views x nx*ny`.
//! The header's `channels` list spells this out with units.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{ComplianceParams, PresetName};
use crate::error::{Error, Result};
use crate::grid::{Field, GridShape, SENSOR_SPACING};
use crate::policy::action::{Action, ArmAction, JOINTS, PERIOD};
use crate::policy::bundle::ACTION_DIM;
use crate::policy::model::{ArmObservation, Observation};
use crate::sim::MaterialParams;
use crate::tactile::{DeformationField, ForceField};
use crate::tasks::env::{ControllerChannel, EnvOptions, TaskEnv};
use crate::tasks::expert::Expert;
use crate::tasks::{Phase, TaskId, TaskSpec};

pub const MAGIC: &[u8; 4] = b"CFEP";
pub const EPISODE_VERSION: u32 = 1;
pub const MANIFEST_VERSION: u32 = 1;
const POSE: usize = 6;
const OBSERVER: usize = 7;
const CONTROLLER: usize = 4;
/// Largest allowed gap between a frame's spacing and the period, s.
const PERIOD_TOL: f64 = 1e-3;

/// Demonstrations per bundled demo set.
pub fn demo_count(task: TaskId) -> usize {
    match task {
        TaskId::Insert => 30,
        _ => 20,
    }
}

/// CRC-32 of the canonical text form of `m`, as 8 hex digits.
pub fn material_hash(m: &MaterialParams) -> String {
    let text = format!("k_e={} k_v={} k_m={} tau={} diffusion={}", m.k_e, m.k_v, m.k_m, m.tau, m.diffusion);
    format!("{:08x}", crc32fast::hash(text.as_bytes()))
}

fn r32(x: f64) -> f64 {
    x as f32 as f64
}

/// `a` with every component rounded to f32, as stored in episode files.
pub fn quantize_action(a: &Action) -> Action {
    Action {
        arms: a
            .arms
            .iter()
            .map(|a| ArmAction {
                position: a.position.map(r32),
                orientation: a.orientation.map(r32),
                joints: a.joints.map(r32),
                compliance: ComplianceParams {
                    lambda1: r32(a.compliance.lambda1),
                    lambda2: r32(a.compliance.lambda2),
                    eps: r32(a.compliance.eps),
                },
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Channel {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<usize>,
    pub dims: Vec<usize>,
    pub unit: String,
}

impl Channel {
    fn new(name: &str, arm: Option<usize>, dims: &[usize], unit: &str) -> Self {
        Channel { name: name.into(), arm, dims: dims.to_vec(), unit: unit.into() }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Channel list for a frame of `arms` arms on `grid` with `views` views.
pub fn layout(arms: usize, grid: GridShape, views: usize) -> Vec<Channel> {
    let g = [grid.ny, grid.nx];
    let mut c = vec![Channel::new("t", None, &[1], "s"), Channel::new("phase", None, &[1], "index")];
    for k in 0..arms {
        let a = Some(k);
        c.push(Channel::new("pose", a, &[POSE], "m,m,m,rad,rad,rad"));
        c.push(Channel::new("force", a, &g, "kPa"));
        c.push(Channel::new("deformation", a, &g, "m"));
        c.push(Channel::new("action", a, &[ACTION_DIM], "m,rad,rad,N/m,N*s/m,1"));
        c.push(Channel::new("preset", a, &[1], "index"));
        c.push(Channel::new("observer", a, &[OBSERVER], "Pa/m,Pa*s/m,Pa/m,s,m^2/s,Pa,bool"));
        c.push(Channel::new("controller", a, &[CONTROLLER], "m,m,N,bool"));
    }
    if views > 0 {
        c.push(Channel::new("views", None, &[views, g[0], g[1]], "1"));
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeHeader {
    pub version: u32,
    pub task: TaskId,
    pub arms: usize,
    /// nx, ny
    pub grid: [usize; 2],
    /// m
    pub spacing: f64,
    pub material_hash: String,
    /// s
    pub period: f64,
    pub views: usize,
    pub frame_len: usize,
    /// "scripted", "teleop", ...
    pub source: String,
    /// Whether frames carry observer estimates.
    pub observer: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Spec the episode ran under; needed for the determinism audit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<TaskSpec>,
    pub channels: Vec<Channel>,
}

impl EpisodeHeader {
    pub fn new(task: TaskId, source: &str) -> Self {
        let arms = task.arms();
        let channels = layout(arms, GridShape::SENSOR, 0);
        EpisodeHeader {
            version: EPISODE_VERSION,
            task,
            arms,
            grid: [GridShape::SENSOR.nx, GridShape::SENSOR.ny],
            spacing: SENSOR_SPACING,
            material_hash: material_hash(&MaterialParams::default()),
            period: PERIOD,
            views: 0,
            frame_len: channels.iter().map(Channel::len).sum(),
            source: source.into(),
            observer: false,
            seed: None,
            spec: None,
            channels,
        }
    }

    pub fn shape(&self) -> GridShape {
        GridShape { nx: self.grid[0], ny: self.grid[1] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != EPISODE_VERSION {
            return Err(Error::Format(format!("episode version {}, expected {EPISODE_VERSION}", self.version)));
        }
        if self.arms != self.task.arms() {
            return Err(Error::Format(format!("{} arms in header for task {}", self.arms, self.task)));
        }
        if self.grid[0] == 0 || self.grid[1] == 0 || !(self.period > 0.0) {
            return Err(Error::Format("empty grid or non-positive period".into()));
        }
        let want = layout(self.arms, self.shape(), self.views);
        if self.channels != want {
            return Err(Error::Format("channel list does not match arms, grid and views".into()));
        }
        let len: usize = want.iter().map(Channel::len).sum();
        if self.frame_len != len {
            return Err(Error::Format(format!("frame_len {} but channels total {len}", self.frame_len)));
        }
        if let Some(spec) = &self.spec {
            if spec.task != self.task {
                return Err(Error::Format(format!("header task {} but spec task {}", self.task, spec.task)));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("header serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let h: EpisodeHeader = toml::from_str(text).map_err(|e| Error::Format(format!("episode header: {e}")))?;
        h.validate()?;
        Ok(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverSample {
    pub params: MaterialParams,
    /// Pa
    pub residual_rms: f64,
    pub confident: bool,
}

/// One action-period record.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// s
    pub t: f64,
    pub phase: Phase,
    pub observation: Observation,
    /// Action executed over `[t, t + period)`.
    pub action: Action,
    pub presets: Vec<PresetName>,
    pub observer: Vec<Option<ObserverSample>>,
    pub controller: Vec<ControllerChannel>,
}

impl Frame {
    /// State of `env` before `action` runs, rounded to f32 as stored.
    pub fn capture(env: &TaskEnv, action: &Action) -> Frame {
        let t = r32(env.time());
        let mut observation = env.observation();
        for a in observation.arms.iter_mut() {
            a.pose = a.pose.map(r32);
            a.force.pressures.data.iter_mut().for_each(|v| *v = r32(*v));
            a.force.timestamp = t;
            a.deformation.displacements.data.iter_mut().for_each(|v| *v = r32(*v));
            a.deformation.timestamp = t;
        }
        for v in observation.views.iter_mut() {
            v.iter_mut().for_each(|x| *x = r32(*x));
        }
        let observer = env
            .arms
            .iter()
            .map(|a| {
                a.estimate().map(|e| ObserverSample {
                    params: MaterialParams {
                        k_e: r32(e.params.k_e),
                        k_v: r32(e.params.k_v),
                        k_m: r32(e.params.k_m),
                        tau: r32(e.params.tau),
                        diffusion: r32(e.params.diffusion),
                    },
                    residual_rms: r32(e.residual_rms),
                    confident: e.confident,
                })
            })
            .collect();
        let controller = env
            .arms
            .iter()
            .map(|a| ControllerChannel {
                z_cmd: r32(a.channel.z_cmd),
                z: r32(a.channel.z),
                force: r32(a.channel.force),
                saturated: a.channel.saturated,
            })
            .collect();
        let action = quantize_action(action);
        let presets = action.arms.iter().map(|a| PresetName::nearest(a.compliance.lambda1)).collect();
        Frame { t, phase: env.phase(), observation, action, presets, observer, controller }
    }

    fn encode(&self, h: &EpisodeHeader, out: &mut Vec<f32>) -> Result<()> {
        let cells = h.grid[0] * h.grid[1];
        let arms = h.arms;
        let ok = self.observation.arms.len() == arms
            && self.action.arms.len() == arms
            && self.presets.len() == arms
            && self.observer.len() == arms
            && self.controller.len() == arms
            && self.observation.views.len() == h.views
            && self.observation.views.iter().all(|v| v.len() == cells)
            && self
                .observation
                .arms
                .iter()
                .all(|a| a.force.pressures.data.len() == cells && a.deformation.displacements.data.len() == cells);
        if !ok {
            return Err(Error::Shape(format!("frame at t = {} does not match the episode header", self.t)));
        }
        let start = out.len();
        out.push(self.t as f32);
        out.push(self.phase.index() as f32);
        for k in 0..arms {
            let o = &self.observation.arms[k];
            out.extend(o.pose.iter().map(|&v| v as f32));
            out.extend(o.force.pressures.data.iter().map(|&v| v as f32));
            out.extend(o.deformation.displacements.data.iter().map(|&v| v as f32));
            out.extend(self.action.arms[k].to_vec().iter().map(|&v| v as f32));
            out.push(self.presets[k].index() as f32);
            match &self.observer[k] {
                Some(s) => {
                    let p = &s.params;
                    out.extend([p.k_e, p.k_v, p.k_m, p.tau, p.diffusion, s.residual_rms].map(|v| v as f32));
                    out.push(if s.confident { 1.0 } else { 0.0 });
                }
                None => out.extend([f32::NAN; OBSERVER]),
            }
            let c = &self.controller[k];
            out.extend([c.z_cmd as f32, c.z as f32, c.force as f32, if c.saturated { 1.0 } else { 0.0 }]);
        }
        for v in &self.observation.views {
            out.extend(v.iter().map(|&x| x as f32));
        }
        debug_assert_eq!(out.len() - start, h.frame_len);
        Ok(())
    }

    /// The frame as stored on disk, in the header's channel order.
    pub fn to_vec(&self, h: &EpisodeHeader) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(h.frame_len);
        self.encode(h, &mut out)?;
        Ok(out)
    }

    fn decode(h: &EpisodeHeader, v: &[f32]) -> Result<Frame> {
        let shape = h.shape();
        let cells = shape.len();
        let mut it = v.iter().map(|&x| x as f64);
        let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
        let index = |x: f64, what: &str| -> Result<usize> {
            if x >= 0.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(Error::Format(format!("{what} index {x}")))
            }
        };
        let flag = |x: f64| -> Result<bool> {
            match x {
                0.0 => Ok(false),
                1.0 => Ok(true),
                _ => Err(Error::Format(format!("flag value {x}"))),
            }
        };
        let head = take(2);
        let t = head[0];
        let phase = Phase::from_index(index(head[1], "phase")?)?;
        let mut frame = Frame {
            t,
            phase,
            observation: Observation { arms: Vec::new(), views: Vec::new() },
            action: Action { arms: Vec::new() },
            presets: Vec::new(),
            observer: Vec::new(),
            controller: Vec::new(),
        };
        for _ in 0..h.arms {
            let pose: [f64; POSE] = take(POSE).try_into().expect("length");
            let force = Field { shape, data: take(cells) };
            let deformation = Field { shape, data: take(cells) };
            frame.observation.arms.push(ArmObservation {
                pose,
                force: ForceField { pressures: force, timestamp: t },
                deformation: DeformationField { displacements: deformation, timestamp: t },
            });
            let a = take(ACTION_DIM);
            let mut joints = [0.0; JOINTS];
            joints.copy_from_slice(&a[6..6 + JOINTS]);
            frame.action.arms.push(ArmAction {
                position: [a[0], a[1], a[2]],
                orientation: [a[3], a[4], a[5]],
                joints,
                compliance: ComplianceParams { lambda1: a[19], lambda2: a[20], eps: a[21] },
            });
            frame.presets.push(PresetName::from_index(index(take(1)[0], "preset")?)?);
            let o = take(OBSERVER);
            frame.observer.push(if o.iter().all(|x| x.is_nan()) {
                None
            } else {
                Some(ObserverSample {
                    params: MaterialParams { k_e: o[0], k_v: o[1], k_m: o[2], tau: o[3], diffusion: o[4] },
                    residual_rms: o[5],
                    confident: flag(o[6])?,
                })
            });
            let c = take(CONTROLLER);
            frame.controller.push(ControllerChannel { z_cmd: c[0], z: c[1], force: c[2], saturated: flag(c[3])? });
        }
        for _ in 0..h.views {
            frame.observation.views.push(take(cells));
        }
        Ok(frame)
    }
}

fn check_spacing(h: &EpisodeHeader, last: Option<f64>, t: f64) -> Result<()> {
    if !t.is_finite() {
        return Err(Error::Format(format!("frame timestamp {t}")));
    }
    if let Some(prev) = last {
        if t <= prev || (t - prev - h.period).abs() > PERIOD_TOL {
            return Err(Error::Ordering { last: prev, got: t });
        }
    }
    Ok(())
}

/// Streams frames into an episode file. The header goes out first; each
/// frame is flushed as it is pushed.
pub struct EpisodeWriter<W: Write> {
    out: W,
    header: EpisodeHeader,
    last_t: Option<f64>,
    frames: usize,
    buf: Vec<f32>,
}

impl EpisodeWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, header: EpisodeHeader) -> Result<Self> {
        EpisodeWriter::new(BufWriter::new(File::create(path)?), header)
    }
}

impl<W: Write> EpisodeWriter<W> {
    pub fn new(mut out: W, header: EpisodeHeader) -> Result<Self> {
        header.validate()?;
        let text = header.to_toml();
        out.write_all(MAGIC)?;
        out.write_all(&(text.len() as u32).to_le_bytes())?;
        out.write_all(text.as_bytes())?;
        out.flush()?;
        Ok(EpisodeWriter { out, header, last_t: None, frames: 0, buf: Vec::new() })
    }

    pub fn header(&self) -> &EpisodeHeader {
        &self.header
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn push(&mut self, frame: &Frame) -> Result<()> {
        check_spacing(&self.header, self.last_t, frame.t)?;
        self.buf.clear();
        frame.encode(&self.header, &mut self.buf)?;
        let bytes: Vec<u8> = self.buf.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.out.write_all(&(self.buf.len() as u32).to_le_bytes())?;
        self.out.write_all(&bytes)?;
        self.out.write_all(&crc32fast::hash(&bytes).to_le_bytes())?;
        self.out.flush()?;
        self.last_t = Some(frame.t);
        self.frames += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Reads `buf.len()` bytes unless the stream ends first; returns the count.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(n)
}

/// Frame iterator over an episode stream. A stream that ends inside a frame
/// stops the iteration and sets [`EpisodeReader::truncated`].
pub struct EpisodeReader<R: Read> {
    input: R,
    header: EpisodeHeader,
    truncated: bool,
    done: bool,
    last_t: Option<f64>,
    count: usize,
}

impl EpisodeReader<std::io::BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        EpisodeReader::new(std::io::BufReader::new(File::open(path)?))
    }
}

impl<R: Read> EpisodeReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut head = [0u8; 8];
        if read_full(&mut input, &mut head)? < 8 || &head[..4] != MAGIC {
            return Err(Error::Format("not an episode file".into()));
        }
        let len = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes")) as usize;
        let mut text = vec![0u8; len];
        if read_full(&mut input, &mut text)? < len {
            return Err(Error::Format("episode header cut short".into()));
        }
        let text = String::from_utf8(text).map_err(|_| Error::Format("episode header is not UTF-8".into()))?;
        let header = EpisodeHeader::from_toml(&text)?;
        Ok(EpisodeReader { input, header, truncated: false, done: false, last_t: None, count: 0 })
    }

    pub fn header(&self) -> &EpisodeHeader {
        &self.header
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn next_frame(&mut self) -> Result<Option<Frame>> {
        if self.done {
            return Ok(None);
        }
        let mut len = [0u8; 4];
        match read_full(&mut self.input, &mut len)? {
            0 => {
                self.done = true;
                return Ok(None);
            }
            4 => {}
            _ => return Ok(self.cut()),
        }
        let n = u32::from_le_bytes(len) as usize;
        if n != self.header.frame_len {
            self.done = true;
            return Err(Error::Format(format!("frame of {n} values, header says {}", self.header.frame_len)));
        }
        let mut body = vec![0u8; 4 * n + 4];
        if read_full(&mut self.input, &mut body)? < body.len() {
            return Ok(self.cut());
        }
        let (data, crc) = body.split_at(4 * n);
        let want = u32::from_le_bytes(crc.try_into().expect("4 bytes"));
        if crc32fast::hash(data) != want {
            self.done = true;
            return Err(Error::Corruption(format!("frame {} checksum mismatch", self.count)));
        }
        let values: Vec<f32> =
            data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        let frame = Frame::decode(&self.header, &values)?;
        check_spacing(&self.header, self.last_t, frame.t)?;
        self.last_t = Some(frame.t);
        self.count += 1;
        Ok(Some(frame))
    }

    fn cut(&mut self) -> Option<Frame> {
        self.truncated = true;
        self.done = true;
        None
    }
}

impl<R: Read> Iterator for EpisodeReader<R> {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub header: EpisodeHeader,
    pub frames: Vec<Frame>,
    /// The source ended inside a frame; `frames` holds the complete ones.
    pub truncated: bool,
}

impl Episode {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = EpisodeWriter::new(Vec::new(), self.header.clone())?;
        for f in &self.frames {
            w.push(f)?;
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Episode::from_reader(bytes)
    }

    pub fn from_reader(input: impl Read) -> Result<Self> {
        let mut r = EpisodeReader::new(input)?;
        let mut frames = Vec::new();
        while let Some(f) = r.next_frame()? {
            frames.push(f);
        }
        Ok(Episode { header: r.header.clone(), frames, truncated: r.truncated })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Episode::from_reader(std::io::BufReader::new(File::open(path)?))
    }
}

/// Runs the scripted expert and records every period. A failed trial is a
/// generation error carrying the tail of the trace.
pub fn record_expert(spec: &TaskSpec, seed: u64, options: EnvOptions) -> Result<Episode> {
    let mut env = TaskEnv::new(spec, seed, options)?;
    let mut header = EpisodeHeader::new(spec.task, "scripted");
    header.observer = options.observer;
    header.seed = Some(seed);
    header.spec = Some(spec.clone());
    let mut expert = Expert::new(&env);
    let mut frames: Vec<Frame> = Vec::new();
    while !env.finished() {
        let a = quantize_action(&expert.act(&env));
        frames.push(Frame::capture(&env, &a));
        env.step(&a)?;
    }
    if !env.success() {
        let r = env.result(0.0);
        let mut msg = format!(
            "expert failed {} seed {seed}: {} (phase {}, t = {:.2} s, peak {:.2} N)",
            spec.task,
            r.failure.unwrap_or_else(|| "success predicate not met".into()),
            r.phase.label(spec.task),
            r.sim_time,
            r.peak_force
        );
        for f in frames.iter().rev().take(5).rev() {
            let forces: Vec<String> = f.controller.iter().map(|c| format!("{:.2}", c.force)).collect();
            msg.push_str(&format!("\n  t {:.1} {} force [{}]", f.t, f.phase.label(spec.task), forces.join(", ")));
        }
        return Err(Error::Generation(msg));
    }
    Ok(Episode { header, frames, truncated: false })
}

/// Re-simulates `ep` from its seed and spec with the recorded actions and
/// returns the largest deviation between recorded and re-simulated frames.
pub fn audit(ep: &Episode) -> Result<f64> {
    let h = &ep.header;
    let (Some(spec), Some(seed)) = (&h.spec, h.seed) else {
        return Err(Error::Usage("episode lacks the spec or seed needed to re-simulate".into()));
    };
    let mut env = TaskEnv::new(spec, seed, EnvOptions { observer: h.observer })?;
    let mut worst: f64 = 0.0;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for f in &ep.frames {
        if env.finished() {
            return Err(Error::Usage(format!("re-simulated trial ended before t = {}", f.t)));
        }
        let again = Frame::capture(&env, &f.action);
        a.clear();
        b.clear();
        f.encode(h, &mut a)?;
        again.encode(h, &mut b)?;
        for (x, y) in a.iter().zip(&b) {
            let d = match (x.is_nan(), y.is_nan()) {
                (true, true) => 0.0,
                (false, false) if x == y => 0.0,
                (false, false) => (*x as f64 - *y as f64).abs(),
                _ => f64::INFINITY,
            };
            worst = worst.max(d);
        }
        env.step(&f.action)?;
    }
    Ok(worst)
}

/// Per-dimension mean and standard deviation. Dimensions with no spread get
/// std = 1 and a constancy flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub frames: usize,
    /// All arms' actions, concatenated.
    pub action: DimStats,
    /// All arms' poses, concatenated.
    pub pose: DimStats,
    /// Over every force node, kPa.
    pub force: DimStats,
    /// Over every deformation node, m.
    pub deformation: DimStats,
}

/// Population statistics merged group by group.
#[derive(Debug, Clone)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(dims: usize) -> Self {
        Moments { n: 0.0, mean: vec![0.0; dims], m2: vec![0.0; dims] }
    }

    /// Adds a group of rows: two passes over the group, then a pairwise merge.
    fn add_group(&mut self, rows: &[Vec<f64>]) {
        if rows.is_empty() {
            return;
        }
        let nb = rows.len() as f64;
        for d in 0..self.mean.len() {
            let mb = rows.iter().map(|r| r[d]).sum::<f64>() / nb;
            let m2b: f64 = rows.iter().map(|r| (r[d] - mb).powi(2)).sum();
            let n = self.n + nb;
            let delta = mb - self.mean[d];
            self.mean[d] += delta * nb / n;
            self.m2[d] += m2b + delta * delta * self.n * nb / n;
        }
        self.n += nb;
    }

    fn finish(&self) -> DimStats {
        let mut out = DimStats { mean: self.mean.clone(), std: Vec::new(), constant: Vec::new() };
        for (m, m2) in self.mean.iter().zip(&self.m2) {
            let s = (m2 / self.n).max(0.0).sqrt();
            let flat = s <= 1e-12 * m.abs().max(1.0);
            out.std.push(if flat { 1.0 } else { s });
            out.constant.push(flat);
        }
        out
    }
}

pub fn compute_stats(episodes: &[Episode]) -> Result<NormStats> {
    let Some(first) = episodes.first() else {
        return Err(Error::Usage("normalization statistics need at least one episode".into()));
    };
    let arms = first.header.arms;
    if let Some(e) = episodes.iter().find(|e| e.header.arms != arms) {
        return Err(Error::Usage(format!("episodes mix {arms}-arm and {}-arm tasks", e.header.arms)));
    }
    let frames: usize = episodes.iter().map(|e| e.frames.len()).sum();
    if frames == 0 {
        return Err(Error::Usage("episodes hold no frames".into()));
    }
    let mut action = Moments::new(arms * ACTION_DIM);
    let mut pose = Moments::new(arms * POSE);
    let mut force = Moments::new(1);
    let mut deformation = Moments::new(1);
    for e in episodes {
        let acts: Vec<Vec<f64>> = e.frames.iter().map(|f| f.action.to_vec()).collect();
        let poses: Vec<Vec<f64>> =
            e.frames.iter().map(|f| f.observation.arms.iter().flat_map(|a| a.pose).collect()).collect();
        let nodes = |sel: fn(&ArmObservation) -> &Vec<f64>| -> Vec<Vec<f64>> {
            e.frames
                .iter()
                .flat_map(|f| f.observation.arms.iter().flat_map(move |a| sel(a).iter().map(|v| vec![*v])))
                .collect()
        };
        action.add_group(&acts);
        pose.add_group(&poses);
        force.add_group(&nodes(|a| &a.force.pressures.data));
        deformation.add_group(&nodes(|a| &a.deformation.displacements.data));
    }
    Ok(NormStats {
        frames,
        action: action.finish(),
        pose: pose.finish(),
        force: force.finish(),
        deformation: deformation.finish(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// Seeded split of `n` episodes with `round(n * val_fraction)` held out
/// (at least one when `n >= 2` and the fraction is positive).
pub fn assign_splits(n: usize, val_fraction: f64, seed: u64) -> Result<Vec<Split>> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::config(format!("validation fraction {val_fraction} outside [0, 1)")));
    }
    let mut val = (n as f64 * val_fraction).round() as usize;
    if val == 0 && n >= 2 && val_fraction > 0.0 {
        val = 1;
    }
    let val = val.min(n.saturating_sub(1));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Split::Train; n];
    for &i in &order[..val] {
        out[i] = Split::Val;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub frames: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub task: TaskId,
    pub episodes: Vec<ManifestEntry>,
    pub stats: NormStats,
}

pub const MANIFEST_FILE: &str = "manifest.toml";

impl Manifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Manifest = toml::from_str(text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Format(format!("manifest version {}, expected {MANIFEST_VERSION}", m.version)));
        }
        Ok(m)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Manifest::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Loads the listed episodes from the manifest's directory `dir`.
    pub fn load_episodes(&self, dir: impl AsRef<Path>) -> Result<Vec<Episode>> {
        self.episodes.iter().map(|e| Episode::read(dir.as_ref().join(&e.file))).collect()
    }
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub episodes: usize,
    pub seed0: u64,
    pub val_fraction: f64,
    pub observer: bool,
}

impl GenerateOptions {
    pub fn for_task(task: TaskId) -> Self {
        GenerateOptions { episodes: demo_count(task), seed0: 0, val_fraction: 0.1, observer: true }
    }
}

/// Records scripted demonstrations into `dir` and writes the manifest.
/// Stops at the first failed demonstration.
pub fn generate(spec: &TaskSpec, opts: &GenerateOptions, dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    if opts.episodes == 0 {
        return Err(Error::Usage("at least one episode required".into()));
    }
    std::fs::create_dir_all(dir)?;
    let splits = assign_splits(opts.episodes, opts.val_fraction, opts.seed0)?;
    let mut episodes = Vec::with_capacity(opts.episodes);
    let mut entries = Vec::with_capacity(opts.episodes);
    for (k, split) in splits.into_iter().enumerate() {
        let seed = opts.seed0 + k as u64;
        let ep = record_expert(spec, seed, EnvOptions { observer: opts.observer })?;
        let file = format!("{}_{k:03}.cfep", spec.task);
        ep.write(dir.join(&file))?;
        entries.push(ManifestEntry { file, seed: Some(seed), frames: ep.frames.len(), split });
        episodes.push(ep);
    }
    let manifest =
        Manifest { version: MANIFEST_VERSION, task: spec.task, episodes: entries, stats: compute_stats(&episodes)? };
    manifest.write(dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Path of the manifest inside a dataset directory.
pub fn manifest_path(dir: impl AsRef<Path>) -> PathBuf {
    dir.as_ref().join(MANIFEST_FILE)
}
