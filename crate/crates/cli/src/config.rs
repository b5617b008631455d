//! Run configuration: TOML file, then environment overrides, then flags.
//!
//! ```toml
//! version = 1
//! seed = 0
//! out = "results"
//! trials = 20
//! task = "insert"              # optional
//! task_spec = "insert.toml"    # optional, overrides `task` defaults
//! weights = "policy.cfa"       # optional
//!
//! [material]                   # optional, all five keys
//! k_e = 2e6
//! k_v = 1e4
//! k_m = 5e5
//! tau = 0.5
//! diffusion = 0.02
//!
//! [teleop]                     # optional
//! port = 8765
//! stream_hz = 60.0
//! motion_scale = 1.5
//! max_force = 10.0
//! max_deformation_mm = 8.0
//! workspace = 0.1
//! ```
//!
//! Environment overrides: `CFA_SEED`, `CFA_OUT`, `CFA_TELEOP_PORT`,
//! `CFA_STREAM_HZ`.

use std::path::{Path, PathBuf};

use catchform_core::sim::MaterialParams;
use catchform_core::tasks::{TaskId, TaskSpec};
use catchform_core::{Error, Result};
use serde::Deserialize;

pub const CONFIG_VERSION: u32 = 1;
pub const DEFAULT_PORT: u16 = 8765;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeleopSection {
    pub port: u16,
    pub stream_hz: f64,
    pub motion_scale: f64,
    pub max_force: f64,
    pub max_deformation_mm: f64,
    pub workspace: f64,
}

impl Default for TeleopSection {
    fn default() -> Self {
        let d = catchform_core::teleop::TeleopConfig::default();
        TeleopSection {
            port: DEFAULT_PORT,
            stream_hz: d.stream_hz,
            motion_scale: d.motion_scale,
            max_force: d.max_force,
            max_deformation_mm: d.max_deformation_mm,
            workspace: d.workspace,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    version: u32,
    seed: Option<u64>,
    out: Option<PathBuf>,
    trials: Option<usize>,
    task: Option<String>,
    task_spec: Option<PathBuf>,
    weights: Option<PathBuf>,
    material: Option<MaterialParams>,
    #[serde(default)]
    teleop: TeleopSection,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub trials: usize,
    pub task: Option<TaskId>,
    pub task_spec: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub material: MaterialParams,
    pub teleop: TeleopSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("results"),
            trials: 20,
            task: None,
            task_spec: None,
            weights: None,
            material: MaterialParams::default(),
            teleop: TeleopSection::default(),
        }
    }
}

fn env_parse<T: std::str::FromStr>(key: &str) -> Result<Option<T>> {
    match std::env::var(key) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| Error::Config(format!("{key}='{v}' is not valid"))),
        Err(_) => Ok(None),
    }
}

fn relative(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Defaults, then the file at `path`, then environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut c = RunConfig::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            let f: FileConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if f.version != CONFIG_VERSION {
                return Err(Error::Config(format!("config version {}, expected {CONFIG_VERSION}", f.version)));
            }
            let base = path.parent().unwrap_or(Path::new("."));
            c.seed = f.seed.unwrap_or(c.seed);
            c.out = f.out.map(|p| relative(base, p)).unwrap_or(c.out);
            c.trials = f.trials.unwrap_or(c.trials);
            c.task = f.task.as_deref().map(TaskId::parse).transpose()?;
            c.task_spec = f.task_spec.map(|p| relative(base, p));
            c.weights = f.weights.map(|p| relative(base, p));
            if let Some(m) = f.material {
                m.validate()?;
                c.material = m;
            }
            c.teleop = f.teleop;
        }
        if let Some(v) = env_parse("CFA_SEED")? {
            c.seed = v;
        }
        if let Ok(v) = std::env::var("CFA_OUT") {
            c.out = PathBuf::from(v);
        }
        if let Some(v) = env_parse("CFA_TELEOP_PORT")? {
            c.teleop.port = v;
        }
        if let Some(v) = env_parse("CFA_STREAM_HZ")? {
            c.teleop.stream_hz = v;
        }
        Ok(c)
    }

    /// Spec for `task`: the configured spec file when it is for that task,
    /// else the built-in defaults.
    pub fn spec(&self, task: TaskId) -> Result<TaskSpec> {
        if let Some(p) = &self.task_spec {
            let spec = TaskSpec::load(p)?;
            if spec.task == task {
                return Ok(spec);
            }
        }
        Ok(TaskSpec::default_for(task))
    }

    pub fn check_paths(&self) -> Result<()> {
        for p in [&self.task_spec, &self.weights].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }
}
