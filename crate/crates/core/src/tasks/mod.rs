//! Simulated tasks: specs, randomized trials, the phase-tracking
//! environment, the scripted expert and the evaluation harness.

pub mod env;
pub mod eval;
pub mod expert;
pub mod geometry;

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::PresetName;
use crate::error::{Error, Result};

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    PressHold,
    Wipe,
    Insert,
    BimanualInsert,
}

impl TaskId {
    pub const ALL: [TaskId; 4] = [TaskId::PressHold, TaskId::Wipe, TaskId::Insert, TaskId::BimanualInsert];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::PressHold => "press_hold",
            TaskId::Wipe => "wipe",
            TaskId::Insert => "insert",
            TaskId::BimanualInsert => "bimanual_insert",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let k = s.to_ascii_lowercase().replace('-', "_");
        TaskId::ALL
            .into_iter()
            .find(|t| t.as_str() == k || t.as_str().replace('_', "") == k)
            .ok_or_else(|| Error::config(format!("unknown task '{s}'")))
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Result<Self> {
        TaskId::ALL.get(i as usize).copied().ok_or_else(|| Error::Format(format!("task index {i}")))
    }

    pub fn arms(self) -> usize {
        if self == TaskId::BimanualInsert {
            2
        } else {
            1
        }
    }

    /// Name of the main phase.
    pub fn main_phase(self) -> &'static str {
        match self {
            TaskId::PressHold => "hold",
            TaskId::Wipe => "traverse",
            TaskId::Insert | TaskId::BimanualInsert => "insert",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Approach, Contact, Engage, then the task's main phase (hold, traverse
/// or insert), then Release.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Approach = 0,
    Contact = 1,
    Engage = 2,
    Main = 3,
    Release = 4,
}

impl Phase {
    pub const ALL: [Phase; 5] = [Phase::Approach, Phase::Contact, Phase::Engage, Phase::Main, Phase::Release];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Phase::ALL.get(i).copied().ok_or_else(|| Error::Format(format!("phase index {i}")))
    }

    pub fn label(self, task: TaskId) -> &'static str {
        match self {
            Phase::Approach => "approach",
            Phase::Contact => "contact",
            Phase::Engage => "engage",
            Phase::Main => task.main_phase(),
            Phase::Release => "release",
        }
    }
}

/// Task description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub version: u32,
    pub task: TaskId,
    /// s
    pub time_limit: f64,
    /// Contact force target of the main phase, N.
    pub force_target: f64,
    /// Per-side insertion clearance, m.
    pub tolerance: f64,
    /// Object yaw drawn from ±this, degrees.
    pub yaw_range_deg: f64,
    /// Object placement drawn from ±this per axis, m.
    pub offset_range: f64,
    /// Wipe traverse length, m.
    pub path_length: f64,
    /// Board slope drawn from ±this (wipe).
    pub tilt_range: f64,
    /// Material constants scaled by a factor in 1 ± this.
    pub material_spread: f64,
    pub noise_rms_kpa: f64,
    /// Upper bound on measured contact force, N.
    pub max_force: f64,
    /// Preset per phase, one row per arm.
    pub schedule: Vec<[PresetName; 5]>,
}

impl TaskSpec {
    pub fn default_for(task: TaskId) -> Self {
        use PresetName::*;
        let base = TaskSpec {
            version: SPEC_VERSION,
            task,
            time_limit: 10.0,
            force_target: 3.0,
            tolerance: 0.002,
            yaw_range_deg: 0.0,
            offset_range: 0.0,
            path_length: 0.0,
            tilt_range: 0.0,
            material_spread: 0.1,
            noise_rms_kpa: 0.2,
            max_force: 15.0,
            schedule: vec![[Mid, Mid, Low, Low, Mid]],
        };
        match task {
            TaskId::PressHold => TaskSpec { offset_range: 0.002, ..base },
            TaskId::Wipe => {
                TaskSpec { time_limit: 14.0, offset_range: 0.05, path_length: 0.10, tilt_range: 0.06, ..base }
            }
            TaskId::Insert => TaskSpec {
                time_limit: 12.0,
                force_target: 1.5,
                yaw_range_deg: 15.0,
                offset_range: 0.006,
                schedule: vec![[Mid, Mid, Low, High, Mid]],
                ..base
            },
            TaskId::BimanualInsert => TaskSpec {
                time_limit: 14.0,
                force_target: 1.5,
                yaw_range_deg: 15.0,
                offset_range: 0.005,
                schedule: vec![[Mid, Mid, High, High, High], [Mid, Mid, Low, Low, Low]],
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SPEC_VERSION {
            return Err(Error::config(format!("task spec version {}, expected {SPEC_VERSION}", self.version)));
        }
        let nonneg = [
            ("time_limit", self.time_limit),
            ("tolerance", self.tolerance),
            ("yaw_range_deg", self.yaw_range_deg),
            ("offset_range", self.offset_range),
            ("path_length", self.path_length),
            ("tilt_range", self.tilt_range),
            ("noise_rms_kpa", self.noise_rms_kpa),
        ];
        for (k, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{k} = {v} must be finite and >= 0")));
            }
        }
        if !(self.force_target > 0.0 && self.force_target < self.max_force) {
            return Err(Error::config(format!(
                "force_target {} N must lie in (0, max_force = {})",
                self.force_target, self.max_force
            )));
        }
        if !(0.0..0.5).contains(&self.material_spread) {
            return Err(Error::config(format!("material_spread {} outside [0, 0.5)", self.material_spread)));
        }
        if self.yaw_range_deg > 45.0 || self.tilt_range > 0.2 {
            return Err(Error::config("yaw_range_deg <= 45 and tilt_range <= 0.2 required"));
        }
        if self.schedule.len() != self.task.arms() {
            return Err(Error::config(format!(
                "schedule has {} rows for a {}-arm task",
                self.schedule.len(),
                self.task.arms()
            )));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: TaskSpec = toml::from_str(text).map_err(|e| Error::config(format!("task spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("task spec serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read task spec {}: {e}", path.display())))?;
        TaskSpec::from_toml(&text)
    }

    pub fn preset(&self, arm: usize, phase: Phase) -> PresetName {
        self.schedule[arm][phase.index()]
    }

    /// Same spec with every phase of every arm at `preset`.
    pub fn frozen(&self, preset: PresetName) -> Self {
        TaskSpec { schedule: vec![[preset; 5]; self.schedule.len()], ..self.clone() }
    }
}

/// Randomized conditions of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSetup {
    pub seed: u64,
    /// Per-arm material scale factor.
    pub material_factor: [f64; 2],
    /// Object yaw, rad.
    pub yaw: f64,
    /// Object placement error, m.
    pub offset: [f64; 2],
    /// Board slope (wipe).
    pub tilt: [f64; 2],
    /// Waviness phase (wipe).
    pub wave_phase: f64,
    /// Insertion fit friction, N.
    pub fit_friction: f64,
}

impl TrialSetup {
    pub fn sample(spec: &TaskSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7A5C_0000_0000_0000);
        let mut sym = |r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
        let s = spec.material_spread;
        let material_factor = [1.0 + sym(s), 1.0 + sym(s)];
        let yaw = sym(spec.yaw_range_deg).to_radians();
        let offset = [sym(spec.offset_range), sym(spec.offset_range)];
        let tilt = [sym(spec.tilt_range), sym(spec.tilt_range) * 0.25];
        let wave_phase = sym(std::f64::consts::PI);
        let fit_friction = 1.0 + sym(0.5) + 0.5;
        TrialSetup { seed, material_factor, yaw, offset, tilt, wave_phase, fit_friction }
    }
}
