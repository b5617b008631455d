//! Benchmark rollouts shared by the command line and the acceptance checks.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::controller::{
    inner_boundary_step, template_profile, ComplianceController, ControllerConfig, PresetName, Template,
};
use crate::error::Result;
use crate::grid::{Field, GridShape, Mask};
use crate::observer::{identify, HistoryBuffer, ObserverConfig};
use crate::rig::ClosedLoop;
use crate::sim::{step, ContactCommand, MaterialParams, SurfaceState};
use crate::tactile::TactileSensor;

const HISTORY_DT: f64 = 0.005;
const CONTROL_DT: f64 = 0.01;

/// Pad mask used by the closed-loop benchmarks.
pub fn bench_mask() -> Mask {
    Mask::rect(GridShape::SENSOR, 2, 10, 1, 9)
}

fn excitation(t: f64) -> f64 {
    use std::f64::consts::PI;
    6e-3 + 2e-3 * (2.0 * PI * 0.7 * t).sin() + 2e-3 * (2.0 * PI * 4.0 * t).sin()
}

/// Observer history from a 6x6 patch driven with a two-tone indentation
/// for 3 s, sensed with `noise_kpa` RMS noise.
pub fn synthetic_history(truth: &MaterialParams, noise_kpa: f64, seed: u64) -> Result<HistoryBuffer> {
    let cfg = ObserverConfig::default();
    let mut state = SurfaceState::sensor_default();
    let mask = Mask::rect(GridShape::SENSOR, 3, 9, 2, 8);
    let mut sensor = TactileSensor::new(GridShape::SENSOR, noise_kpa, seed)?;
    let mut buf = HistoryBuffer::new(cfg.capacity);
    for k in 1..=600 {
        let t = k as f64 * HISTORY_DT;
        let cmd = ContactCommand::uniform(mask.clone(), excitation(t));
        state = step(&state, &cmd, truth, HISTORY_DT)?;
        let f = sensor.sample_force(&state, truth, t)?;
        let pa = Field { shape: f.pressures.shape, data: f.pressures.data.iter().map(|v| v * 1e3).collect() };
        buf.record(&state, &pa, t, &cfg)?;
    }
    Ok(buf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyRun {
    pub seed: u64,
    pub estimate: MaterialParams,
    /// Relative errors of k_e, k_v, k_m.
    pub rel_error: [f64; 3],
    /// Distance of the chosen tau from the truth, in grid points.
    pub tau_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyReport {
    pub noise_kpa: f64,
    pub prior_factor: f64,
    pub runs: Vec<IdentifyRun>,
    pub worst_rel_error: f64,
    pub worst_tau_steps: usize,
}

fn tau_index(cfg: &ObserverConfig, tau: f64) -> usize {
    let grid = cfg.tau_grid();
    (0..grid.len()).min_by(|&a, &b| (grid[a] - tau).abs().total_cmp(&(grid[b] - tau).abs())).unwrap_or(0)
}

/// Identifies the default material from `seeds` synthetic histories,
/// starting from a prior scaled by `prior_factor`.
pub fn identify_bench(noise_kpa: f64, seeds: &[u64], prior_factor: f64) -> Result<IdentifyReport> {
    let truth = MaterialParams::default();
    let cfg = ObserverConfig::default();
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let buf = synthetic_history(&truth, noise_kpa, seed)?;
        let p = identify(&buf, &truth.scaled(prior_factor), &cfg)?.params;
        let rel = |a: f64, b: f64| (a / b - 1.0).abs();
        runs.push(IdentifyRun {
            seed,
            estimate: p,
            rel_error: [rel(p.k_e, truth.k_e), rel(p.k_v, truth.k_v), rel(p.k_m, truth.k_m)],
            tau_steps: tau_index(&cfg, p.tau).abs_diff(tau_index(&cfg, truth.tau)),
        });
    }
    Ok(IdentifyReport {
        noise_kpa,
        prior_factor,
        worst_rel_error: runs.iter().flat_map(|r| r.rel_error).fold(0.0, f64::max),
        worst_tau_steps: runs.iter().map(|r| r.tau_steps).max().unwrap_or(0),
        runs,
    })
}

/// Closed-loop press-and-hold rig on the default material.
pub fn press_rig(prior_factor: f64, preset: PresetName, f_des: f64, seed: u64) -> Result<ClosedLoop> {
    let truth = MaterialParams::default();
    let mut c =
        ComplianceController::new(ControllerConfig::default(), bench_mask(), 2e-3, truth.scaled(prior_factor), preset)?;
    c.set_force_target(f_des)?;
    let sensor = TactileSensor::new(GridShape::SENSOR, 0.2, seed)?;
    ClosedLoop::new(truth, SurfaceState::sensor_default(), sensor, c, 2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressHoldReport {
    pub f_des: f64,
    pub prior_factor: f64,
    pub preset: PresetName,
    pub seed: u64,
    /// Time after which the force stays within ±5% of target, s.
    pub settle_time: Option<f64>,
    /// Largest relative error after settling.
    pub hold_error: f64,
    pub final_force: f64,
    /// Largest deformation tracking error over the last second, m.
    pub tracking_error: f64,
    pub wall_time: f64,
}

/// Runs the rig for `seconds` and reports settling against ±5%.
pub fn press_hold_bench(
    prior_factor: f64,
    preset: PresetName,
    f_des: f64,
    seed: u64,
    seconds: f64,
) -> Result<PressHoldReport> {
    let clock = Instant::now();
    let mut rig = press_rig(prior_factor, preset, f_des, seed)?;
    let n = (seconds / CONTROL_DT).round() as usize;
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let s = rig.run_cycle()?;
        samples.push((s.log.t, s.force, s.tracking_error));
    }
    let rel = |f: f64| (f - f_des).abs() / f_des;
    let last_out = samples.iter().rposition(|s| rel(s.1) > 0.05);
    let settle_time = match last_out {
        None => Some(0.0),
        Some(i) if i + 1 < samples.len() => Some(samples[i].0),
        Some(_) => None,
    };
    let from = last_out.map_or(0, |i| i + 1);
    let tail = n.saturating_sub((1.0 / CONTROL_DT) as usize);
    Ok(PressHoldReport {
        f_des,
        prior_factor,
        preset,
        seed,
        settle_time,
        hold_error: samples[from..].iter().map(|s| rel(s.1)).fold(0.0, f64::max),
        final_force: samples.last().map_or(0.0, |s| s.1),
        tracking_error: samples[tail..].iter().map(|s| s.2).fold(0.0, f64::max),
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

/// Inner boundary loop alone against the simulator holding `template`
/// at `depth`; the max-norm error over the mask after `seconds`, m.
pub fn deformation_bench(template: Template, depth: f64, eps: f64, seconds: f64) -> Result<f64> {
    let p = MaterialParams::default();
    let shape = GridShape::SENSOR;
    let mask = bench_mask();
    let reference = template_profile(template, &mask).map(|v| v * depth);
    let mut state = SurfaceState::sensor_default();
    let mut u = ContactCommand::uniform(mask.clone(), 0.0);
    let half = CONTROL_DT / 2.0;
    for _ in 0..(seconds / CONTROL_DT).round() as usize {
        let from = u.clone();
        u = inner_boundary_step(&u, &reference, &state.phi, eps, 5.0, 2e-3, CONTROL_DT)?;
        for k in 1..=2 {
            let mut c = u.clone();
            for (idx, d) in c.indentation.data.iter_mut().enumerate() {
                *d = from.indentation.data[idx]
                    + 0.5 * k as f64 * (u.indentation.data[idx] - from.indentation.data[idx]);
            }
            state = step(&state, &c, &p, half)?;
        }
    }
    Ok((0..shape.len())
        .filter(|&i| mask.data[i])
        .map(|i| (reference.data[i] - state.phi.data[i]).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycles: usize,
    /// ms
    pub mean_ms: f64,
    /// ms
    pub worst_ms: f64,
}

/// Times `cycles` controller cycles after the observer history is full.
pub fn cycle_bench(cycles: usize, seed: u64) -> Result<CycleReport> {
    let mut rig = press_rig(0.9, PresetName::Mid, 3.0, seed)?;
    for _ in 0..300 {
        rig.run_cycle()?;
    }
    let phi = rig.state.phi.clone();
    let f = rig.force();
    let mut worst = Duration::ZERO;
    let mut total = Duration::ZERO;
    for _ in 0..cycles {
        let start = Instant::now();
        rig.controller.cycle(f, &phi)?;
        let e = start.elapsed();
        worst = worst.max(e);
        total += e;
    }
    Ok(CycleReport {
        cycles,
        mean_ms: total.as_secs_f64() * 1e3 / cycles.max(1) as f64,
        worst_ms: worst.as_secs_f64() * 1e3,
    })
}
