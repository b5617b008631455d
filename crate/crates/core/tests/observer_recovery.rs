use catchform_core::grid::{Field, GridShape, Mask};
use catchform_core::observer::{fit_tau, identify, AmortizedIdentifier, HistoryBuffer, HistorySample, ObserverConfig};
use catchform_core::sim::{step, ContactCommand, MaterialParams, SurfaceState};
use catchform_core::tactile::TactileSensor;

const DT: f64 = 0.005;

fn indentation(t: f64) -> f64 {
    use std::f64::consts::PI;
    6e-3 + 2e-3 * (2.0 * PI * 0.7 * t).sin() + 2e-3 * (2.0 * PI * 4.0 * t).sin()
}

/// Drives a patch with a two-tone indentation and records the observer
/// history from the (optionally noisy) tactile force field.
fn synthetic_history(truth: &MaterialParams, noise_kpa: f64, seed: u64) -> HistoryBuffer {
    let cfg = ObserverConfig::default();
    let mut state = SurfaceState::sensor_default();
    let mask = Mask::rect(GridShape::SENSOR, 3, 9, 2, 8);
    let mut sensor = TactileSensor::new(GridShape::SENSOR, noise_kpa, seed).unwrap();
    let mut buf = HistoryBuffer::new(cfg.capacity);
    for k in 1..=600 {
        let t = k as f64 * DT;
        let cmd = ContactCommand::uniform(mask.clone(), indentation(t));
        state = step(&state, &cmd, truth, DT).unwrap();
        let f = sensor.sample_force(&state, truth, t).unwrap();
        let pa = Field { shape: f.pressures.shape, data: f.pressures.data.iter().map(|v| v * 1e3).collect() };
        buf.record(&state, &pa, t, &cfg).unwrap();
    }
    buf
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn grid_index(cfg: &ObserverConfig, tau: f64) -> usize {
    let grid = cfg.tau_grid();
    (0..grid.len()).min_by(|&a, &b| (grid[a] - tau).abs().total_cmp(&(grid[b] - tau).abs())).unwrap()
}

#[test]
fn noiseless_history_recovers_material() {
    let truth = MaterialParams::default();
    let cfg = ObserverConfig::default();
    let buf = synthetic_history(&truth, 0.0, 0);
    let est = identify(&buf, &truth.scaled(0.9), &cfg).unwrap();
    let p = est.params;
    assert!(rel(p.k_e, truth.k_e) < 0.01, "k_e {}", p.k_e);
    assert!(rel(p.k_v, truth.k_v) < 0.01, "k_v {}", p.k_v);
    assert!(rel(p.k_m, truth.k_m) < 0.01, "k_m {}", p.k_m);
    let (gi, ti) = (grid_index(&cfg, p.tau), grid_index(&cfg, truth.tau));
    assert!(gi.abs_diff(ti) <= 1, "tau {} at index {gi}, truth index {ti}", p.tau);
    assert!(rel(p.diffusion, truth.diffusion) < 0.05, "D {}", p.diffusion);
    assert!(est.confident);
}

#[test]
fn noisy_history_recovers_material_within_five_percent() {
    let truth = MaterialParams::default();
    let cfg = ObserverConfig::default();
    for seed in 0..10 {
        let buf = synthetic_history(&truth, 0.2, seed);
        let est = identify(&buf, &truth.scaled(0.9), &cfg).unwrap();
        let p = est.params;
        for (name, got, want) in [("k_e", p.k_e, truth.k_e), ("k_v", p.k_v, truth.k_v), ("k_m", p.k_m, truth.k_m)] {
            assert!(rel(got, want) < 0.05, "seed {seed}: {name} {got} vs {want}");
        }
        assert!(grid_index(&cfg, p.tau).abs_diff(grid_index(&cfg, truth.tau)) <= 1, "seed {seed}");
    }
}

#[test]
fn softer_material_is_recovered_too() {
    let cfg = ObserverConfig::default();
    let tau = cfg.tau_grid()[8];
    let truth = MaterialParams { k_e: 8e5, k_v: 5e3, k_m: 2e5, tau, diffusion: 0.01 };
    let est = identify(&synthetic_history(&truth, 0.0, 0), &MaterialParams::default(), &cfg).unwrap();
    assert!(rel(est.params.k_e, truth.k_e) < 0.01);
    assert!(rel(est.params.k_v, truth.k_v) < 0.01);
    assert!(rel(est.params.k_m, truth.k_m) < 0.01);
    assert_eq!(est.params.tau, tau);
}

fn scale_pressures(buf: &HistoryBuffer, c: f64) -> HistoryBuffer {
    let mut out = HistoryBuffer::new(buf.capacity());
    for s in buf.samples() {
        let mut s: HistorySample = s.clone();
        for n in &mut s.nodes {
            n.pressure *= c;
        }
        out.push(s).unwrap();
    }
    out
}

#[test]
fn scaling_pressures_scales_densities() {
    let truth = MaterialParams::default();
    let cfg = ObserverConfig::default();
    let buf = synthetic_history(&truth, 0.2, 4);
    let base = identify(&buf, &truth, &cfg).unwrap();
    for c in [0.25, 3.0, 10.0] {
        let est = identify(&scale_pressures(&buf, c), &truth, &cfg).unwrap();
        assert_eq!(est.params.tau, base.params.tau, "c = {c}");
        assert!(rel(est.params.k_e, c * base.params.k_e) < 1e-9);
        assert!(rel(est.params.k_v, c * base.params.k_v) < 1e-9);
        assert!(rel(est.params.k_m, c * base.params.k_m) < 1e-9);
        assert!(rel(est.residual_rms, c * base.residual_rms) < 1e-9);
    }
}

#[test]
fn chosen_tau_minimizes_residual_over_grid() {
    let truth = MaterialParams::default();
    let cfg = ObserverConfig::default();
    let buf = synthetic_history(&truth, 0.2, 5);
    let est = identify(&buf, &truth, &cfg).unwrap();
    for tau in cfg.tau_grid() {
        let fit = fit_tau(&buf, tau).unwrap();
        assert!(fit.full_rank);
        assert!(est.residual_rms <= fit.residual_rms, "tau {tau} beats the pick");
    }
}

#[test]
fn amortized_sweep_matches_full_identification() {
    let truth = MaterialParams::default();
    let cfg = ObserverConfig::default();
    let buf = synthetic_history(&truth, 0.2, 6);
    let full = identify(&buf, &truth, &cfg).unwrap();
    let mut am = AmortizedIdentifier::new(cfg);
    let mut got = None;
    for cycle in 0..am.sweep_len() {
        let out = am.step(&buf, &truth);
        if cycle + 1 < am.sweep_len() {
            assert!(out.is_none());
        } else {
            got = out;
        }
    }
    assert_eq!(got.unwrap(), full);
}
