//! Acceptance checks, one line each. Runs without the trainer or the UI:
//! demonstrations are scripted and weights are seeded or golden.

use std::process::ExitCode;
use std::time::Instant;

use catchform_core::bench::{cycle_bench, deformation_bench, identify_bench, press_hold_bench};
use catchform_core::controller::{PresetName, Template, EPS_RANGE, LAMBDA1_RANGE, LAMBDA2_RANGE};
use catchform_core::dataset::{audit, record_expert};
use catchform_core::grid::{Boundary, GridShape, Mask};
use catchform_core::policy::golden::{self, fixture_observation};
use catchform_core::policy::{squash_compliance, Architecture, ChunkScheduler, Policy, WeightBundle, ACTION_DIM};
use catchform_core::sim::{field_energy, step, ContactCommand, MaterialParams, SurfaceState};
use catchform_core::tasks::env::EnvOptions;
use catchform_core::tasks::eval::{evaluate, run_trial, Source};
use catchform_core::tasks::{TaskId, TaskSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn force_tracking() -> Check {
    let mut worst_settle: f64 = 0.0;
    let mut worst_hold: f64 = 0.0;
    let mut worst_wall: f64 = 0.0;
    for prior in [0.9, 1.1] {
        for seed in [1, 2] {
            let r = press_hold_bench(prior, PresetName::Mid, 3.0, seed, 8.0).map_err(|e| e.to_string())?;
            let Some(t) = r.settle_time else {
                return Err(format!("prior x{prior} seed {seed}: never within 5%"));
            };
            worst_settle = worst_settle.max(t);
            worst_hold = worst_hold.max(r.hold_error);
            worst_wall = worst_wall.max(r.wall_time);
        }
    }
    ensure(
        worst_settle <= 2.0 && worst_hold <= 0.05 && worst_wall < 10.0,
        format!(
            "settled by {worst_settle:.2} s, held within {:.2}%, {worst_wall:.2} s wall (10% prior error)",
            100.0 * worst_hold
        ),
    )
}

fn deformation_accuracy() -> Check {
    let mut worst: f64 = 0.0;
    for mm in 1..=10 {
        let e = deformation_bench(Template::FlatPunch, mm as f64 * 1e-3, PresetName::Mid.params().eps, 4.0)
            .map_err(|e| e.to_string())?;
        worst = worst.max(e);
    }
    ensure(worst < 1e-3, format!("worst steady error {:.2e} mm over 1..10 mm flat punches", worst * 1e3))
}

/// `I - dt (D ∇² - k_e/k_v)` with zero-flux edges, one row per node.
fn dense_operator(shape: GridShape, h: f64, p: &MaterialParams, dt: f64) -> DMatrix<f64> {
    let n = shape.len();
    let mut a = DMatrix::<f64>::identity(n, n);
    let c = dt * p.diffusion / (h * h);
    for j in 0..shape.ny {
        for i in 0..shape.nx {
            let r = j * shape.nx + i;
            a[(r, r)] += dt * p.k_e / p.k_v;
            let nbrs = [
                (i > 0).then(|| r - 1),
                (i + 1 < shape.nx).then(|| r + 1),
                (j > 0).then(|| r - shape.nx),
                (j + 1 < shape.ny).then(|| r + shape.nx),
            ];
            for col in nbrs.into_iter().flatten() {
                a[(r, col)] -= c;
                a[(r, r)] += c;
            }
        }
    }
    a
}

fn pde_oracle() -> Check {
    let shape = GridShape::new(4, 4).map_err(|e| e.to_string())?;
    let p = MaterialParams { diffusion: 0.05, ..MaterialParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut s = SurfaceState::new(shape, 2e-3, Boundary::Neumann).map_err(|e| e.to_string())?;
    for v in &mut s.phi.data {
        *v = rng.random_range(0.0..5e-3);
    }
    let next = step(&s, &ContactCommand::none(shape), &p, 1e-3).map_err(|e| e.to_string())?;
    let oracle = dense_operator(shape, 2e-3, &p, 1e-3)
        .lu()
        .solve(&DVector::from_vec(s.phi.data.clone()))
        .ok_or("singular oracle")?;
    let dev = (0..shape.len()).map(|i| (next.phi.data[i] - oracle[i]).abs()).fold(0.0, f64::max);
    if dev >= 1e-10 {
        return Err(format!("4x4 step deviates {dev:.2e} from the dense solve"));
    }

    let sensor = GridShape::SENSOR;
    let mut steps = 0;
    let mut max_principle = 0;
    let mut dissipation = 0;
    while steps < 100_000 {
        let boundary = if rng.random_bool(0.5) { Boundary::Neumann } else { Boundary::DirichletZero };
        let p = MaterialParams {
            k_e: rng.random_range(1e5..5e6),
            k_v: rng.random_range(1e3..5e4),
            k_m: rng.random_range(1e4..1e6),
            tau: rng.random_range(0.01..5.0),
            diffusion: rng.random_range(0.0..0.2),
        };
        let mut s = SurfaceState::new(sensor, 2e-3, boundary).map_err(|e| e.to_string())?;
        let free = rng.random_bool(0.5);
        if free {
            for v in &mut s.phi.data {
                *v = rng.random_range(0.0..10e-3);
            }
        }
        let mut bound = s.phi.max_abs();
        for _ in 0..250 {
            let cmd = if free {
                ContactCommand::none(sensor)
            } else {
                let i0 = rng.random_range(0..sensor.nx);
                let j0 = rng.random_range(0..sensor.ny);
                let mask = Mask::rect(
                    sensor,
                    i0,
                    rng.random_range(i0 + 1..=sensor.nx),
                    j0,
                    rng.random_range(j0 + 1..=sensor.ny),
                );
                ContactCommand::uniform(mask, rng.random_range(0.0..10e-3))
            };
            bound = bound.max(cmd.max_depth());
            let before = field_energy(&s);
            s = step(&s, &cmd, &p, rng.random_range(1e-5..=0.01)).map_err(|e| e.to_string())?;
            if s.phi.data.iter().any(|&v| v < 0.0) || s.phi.max_abs() > bound * (1.0 + 1e-12) {
                max_principle += 1;
            }
            if free && field_energy(&s) > before {
                dissipation += 1;
            }
            steps += 1;
        }
    }
    ensure(
        max_principle == 0 && dissipation == 0,
        format!(
            "4x4 max deviation {dev:.1e}; {steps} random steps, {max_principle} bound and {dissipation} energy violations"
        ),
    )
}

fn observer_recovery() -> Check {
    let seeds: Vec<u64> = (0..5).collect();
    let clean = identify_bench(0.0, &seeds, 0.9).map_err(|e| e.to_string())?;
    let seeds: Vec<u64> = (0..10).collect();
    let noisy = identify_bench(0.2, &seeds, 0.9).map_err(|e| e.to_string())?;
    ensure(
        clean.worst_rel_error <= 0.01 && clean.worst_tau_steps <= 1 && noisy.worst_rel_error <= 0.05,
        format!(
            "noiseless {:.3}% (tau off {}), 0.2 kPa {:.2}%",
            100.0 * clean.worst_rel_error,
            clean.worst_tau_steps,
            100.0 * noisy.worst_rel_error
        ),
    )
}

fn policy_contracts() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut outputs = 0;
    for arms in [1, 2] {
        let arch = Architecture { arms, ..Architecture::default() };
        let p = Policy::new(WeightBundle::seeded(arch, 42).map_err(|e| e.to_string())?);
        for _ in 0..20 {
            let mut obs = fixture_observation(p.architecture());
            let gain = 10f64.powf(rng.random_range(-2.0..3.0));
            for a in obs.arms.iter_mut() {
                a.force.pressures.data.iter_mut().for_each(|v| *v *= gain * rng.random_range(0.0..2.0));
                a.deformation.displacements.data.iter_mut().for_each(|v| *v *= gain);
            }
            let chunk = p.predict_chunk(&obs, 0).map_err(|e| e.to_string())?;
            for a in &chunk.actions {
                if a.to_vec().len() != ACTION_DIM * arms {
                    return Err(format!("{} outputs for {arms} arms", a.to_vec().len()));
                }
                for arm in &a.arms {
                    arm.compliance.validate().map_err(|e| e.to_string())?;
                    outputs += 1;
                }
            }
        }
    }
    for l in [f32::NEG_INFINITY, -1e30, 0.0, 1e30, f32::INFINITY] {
        let c = squash_compliance([l; 3]);
        let inside = |v: f64, r: (f64, f64)| v >= r.0 && v <= r.1;
        if !(inside(c.lambda1, LAMBDA1_RANGE) && inside(c.lambda2, LAMBDA2_RANGE) && inside(c.eps, EPS_RANGE)) {
            return Err(format!("logit {l} squashes outside the ranges: {c:?}"));
        }
    }

    let stored = golden::parse(include_str!("fixtures/golden_chunk_seed42.txt")).map_err(|e| e.to_string())?;
    let policy = golden::golden_policy().map_err(|e| e.to_string())?;
    let got = golden::parse(&golden::render(&policy).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let diffs =
        got.bits.iter().zip(&stored.bits).filter(|(a, b)| a != b).count() + got.bits.len().abs_diff(stored.bits.len());
    if diffs != 0 {
        return Err(format!("golden chunk: {diffs} values differ"));
    }

    let obs = fixture_observation(policy.architecture());
    let mut s = ChunkScheduler::new(Some(0.1)).map_err(|e| e.to_string())?;
    for k in 0..200u64 {
        if k % 4 == 0 {
            s.push(policy.predict_chunk(&obs, s.next_tick()).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        }
        let (t, _) = s.pop().map_err(|e| e.to_string())?;
        if t != k as f64 * 0.1 {
            return Err(format!("tick {k} emitted at {t} s"));
        }
    }
    Ok(format!("{outputs} arm outputs inside the ranges, golden chunk bit-exact, 200 ticks at 10 Hz without gaps"))
}

fn cycle_time() -> Check {
    let c = cycle_bench(1000, 5).map_err(|e| e.to_string())?;
    ensure(c.worst_ms <= 10.0, format!("worst {:.3} ms, mean {:.3} ms over {} cycles", c.worst_ms, c.mean_ms, c.cycles))
}

fn ordering() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for task in [TaskId::Insert, TaskId::Wipe] {
        let spec = TaskSpec::default_for(task);
        let s = evaluate(&spec, &Source::Scripted, 20, 0).map_err(|e| e.to_string())?;
        let f = evaluate(&spec, &Source::Fixed(PresetName::Mid), 20, 0).map_err(|e| e.to_string())?;
        ok &= s.successes > f.successes;
        parts.push(format!("{task} scheduled {}/20 vs frozen-mid {}/20", s.successes, f.successes));
    }
    ensure(ok, parts.join(", "))
}

fn headless() -> Check {
    let spec = TaskSpec::default_for(TaskId::Insert);
    let ep = record_expert(&spec, 0, EnvOptions { observer: true }).map_err(|e| e.to_string())?;
    let dev = audit(&ep).map_err(|e| e.to_string())?;
    let policy = golden::golden_policy().map_err(|e| e.to_string())?;
    let r = run_trial(&spec, &Source::Policy { policy: &policy, decay: Some(0.1) }, 0).map_err(|e| e.to_string())?;
    ensure(
        dev < 1e-9,
        format!("scripted demo replays to {dev:.1e}; golden-weight trial ran {:.1} s of task time", r.sim_time),
    )
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Check); 8] = [
        ("force tracking within 5%", force_tracking),
        ("sub-millimetre deformation", deformation_accuracy),
        ("integrator oracle and invariants", pde_oracle),
        ("observer recovery", observer_recovery),
        ("policy runtime contracts", policy_contracts),
        ("control cycle within 10 ms", cycle_time),
        ("scheduled beats frozen compliance", ordering),
        ("headless run", headless),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let (tag, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {name}: {detail} [{:.1} s]", start.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
