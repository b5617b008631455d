//! Python bindings: surface simulation, the weight bundle, episode files,
//! trial evaluation and teleop message parsing.

use std::path::PathBuf;

use catchform_core::bench::bench_mask;
use catchform_core::dataset::Episode;
use catchform_core::policy::bundle::{Architecture, WeightBundle};
use catchform_core::policy::golden;
use catchform_core::policy::model::Policy;
use catchform_core::sim::{self, ContactCommand, MaterialParams, SurfaceState};
use catchform_core::tasks::eval::{self, Source};
use catchform_core::tasks::{TaskId, TaskSpec};
use catchform_core::teleop::ServerMessage;
use catchform_core::{controller::PresetName, Error, Result};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

/// Contact force after each step of a held flat punch, N.
pub fn punch_forces(depth: f64, duration: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt <= sim::MAX_DT) || !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::Usage(format!("dt {dt} or duration {duration} out of range")));
    }
    let p = MaterialParams::default();
    let cmd = ContactCommand::uniform(bench_mask(), depth);
    let mut state = SurfaceState::sensor_default();
    let n = (duration / dt).round() as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        state = sim::step(&state, &cmd, &p, dt)?;
        out.push(sim::contact_force(&state, &p));
    }
    Ok(out)
}

/// Header TOML, the raw frame vectors and the truncation flag.
pub fn episode_frames(path: &PathBuf) -> Result<(String, Vec<Vec<f32>>, bool)> {
    let ep = Episode::read(path)?;
    let frames = ep.frames.iter().map(|f| f.to_vec(&ep.header)).collect::<Result<_>>()?;
    Ok((ep.header.to_toml(), frames, ep.truncated))
}

/// Success rate of `source` on `task` over `trials` seeds from `seed`.
pub fn success_rate(task: &str, source: &str, trials: usize, seed: u64, weights: Option<&PathBuf>) -> Result<f64> {
    let spec = TaskSpec::default_for(TaskId::parse(task)?);
    let policy = weights.map(|w| WeightBundle::read(w).map(Policy::new)).transpose()?;
    let need = || policy.as_ref().ok_or_else(|| Error::Usage(format!("source '{source}' needs weights")));
    let src = match source {
        "scripted" => Source::Scripted,
        "policy" => Source::Policy { policy: need()?, decay: None },
        "policy-no-field" => Source::NoField { policy: need()?, decay: None },
        s => match s.strip_prefix("fixed-") {
            Some(p) => Source::Fixed(PresetName::parse(p)?),
            None => return Err(Error::Usage(format!("unknown source '{s}'"))),
        },
    };
    Ok(eval::evaluate(&spec, &src, trials, seed)?.success_rate())
}

#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

#[pyfunction]
#[pyo3(signature = (depth, duration=1.0, dt=0.005))]
fn simulate_punch(depth: f64, duration: f64, dt: f64) -> PyResult<Vec<f64>> {
    punch_forces(depth, duration, dt).map_err(py_err)
}

/// Golden chunk text for the seed-42 bundle.
#[pyfunction]
fn golden_chunk() -> PyResult<String> {
    golden::golden_policy().and_then(|p| golden::render(&p)).map_err(py_err)
}

/// CFA1 bytes of a seeded default-architecture bundle.
#[pyfunction]
fn seeded_bundle<'py>(py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyBytes>> {
    let b = WeightBundle::seeded(Architecture::default(), seed).map_err(py_err)?;
    Ok(PyBytes::new(py, &b.to_bytes()))
}

/// Descriptor of a CFA1 bundle; raises on a malformed one.
#[pyfunction]
fn bundle_descriptor(data: &[u8]) -> PyResult<Vec<(String, String)>> {
    let b = WeightBundle::from_bytes(data).map_err(py_err)?;
    Ok(b.architecture().to_descriptor())
}

#[pyfunction]
fn read_episode(path: PathBuf) -> PyResult<(String, Vec<Vec<f32>>, bool)> {
    episode_frames(&path).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (task, source="scripted", trials=10, seed=0, weights=None))]
fn evaluate(task: &str, source: &str, trials: usize, seed: u64, weights: Option<PathBuf>) -> PyResult<f64> {
    success_rate(task, source, trials, seed, weights.as_ref()).map_err(py_err)
}

/// Message type of a server text message; raises if it does not parse.
#[pyfunction]
fn message_type(text: &str) -> PyResult<&'static str> {
    Ok(match ServerMessage::parse(text).map_err(py_err)? {
        ServerMessage::Hello(_) => "hello",
        ServerMessage::State(_) => "state",
        ServerMessage::Ack(_) => "ack",
        ServerMessage::Cue(_) => "cue",
        ServerMessage::Recording(_) => "recording",
        ServerMessage::Error(_) => "error",
    })
}

#[pymodule]
fn catchform(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(version, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_punch, m)?)?;
    m.add_function(wrap_pyfunction!(golden_chunk, m)?)?;
    m.add_function(wrap_pyfunction!(seeded_bundle, m)?)?;
    m.add_function(wrap_pyfunction!(bundle_descriptor, m)?)?;
    m.add_function(wrap_pyfunction!(read_episode, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(message_type, m)?)?;
    Ok(())
}
