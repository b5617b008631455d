use std::f64::consts::PI;

use catchform_core::controller::{EPS_RANGE, LAMBDA1_RANGE, LAMBDA2_RANGE};
use catchform_core::policy::action::{axis_angle, rodrigues, squash_compliance};
use catchform_core::policy::golden::{self, fixture_observation};
use catchform_core::policy::{
    ensemble_step, Action, ActionChunk, Architecture, ArmAction, ChunkScheduler, Policy, Tensor, WeightBundle,
    ACTION_DIM,
};
use catchform_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn seeded(arms: usize, views: usize) -> WeightBundle {
    WeightBundle::seeded(Architecture { arms, views, ..Architecture::default() }, 42).unwrap()
}

#[test]
fn seeded_bundle_round_trips() {
    let b = seeded(1, 0);
    let bytes = b.to_bytes();
    let back = WeightBundle::from_bytes(&bytes).unwrap();
    assert_eq!(back, b);
    assert_eq!(back.descriptor, b.descriptor);
    assert_eq!(back.to_bytes(), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.cfa");
    b.write(&path).unwrap();
    assert_eq!(WeightBundle::read(&path).unwrap(), b);
}

#[test]
fn truncated_tensor_is_corruption() {
    let bytes = seeded(1, 0).to_bytes();
    // Drop the last tensor's final value and re-seal the checksum, so only
    // the tensor table disagrees with the data.
    let body = &bytes[..bytes.len() - 8];
    let mut cut = body.to_vec();
    cut.extend_from_slice(&crc32fast::hash(body).to_le_bytes());
    assert!(matches!(WeightBundle::from_bytes(&cut), Err(Error::Corruption(_))));
    // Plain truncation fails the checksum.
    assert!(matches!(WeightBundle::from_bytes(&bytes[..bytes.len() - 100]), Err(Error::Corruption(_))));
    let mut flipped = bytes.clone();
    flipped[200] ^= 1;
    assert!(matches!(WeightBundle::from_bytes(&flipped), Err(Error::Corruption(_))));
}

#[test]
fn edited_d_model_is_shape_error() {
    let b = seeded(1, 0);
    let mut desc = b.descriptor.clone();
    for (k, v) in desc.iter_mut() {
        if k == "d_model" {
            *v = "32".into();
        }
    }
    assert!(matches!(WeightBundle::new(desc.clone(), b.tensors.clone()), Err(Error::Shape(_))));

    // Same edit inside a well-sealed file.
    let mut raw = WeightBundle::seeded(Architecture { d_model: 32, ..Architecture::default() }, 1).unwrap();
    raw.tensors = b.tensors.clone();
    let bytes = raw.to_bytes();
    assert!(matches!(WeightBundle::from_bytes(&bytes), Err(Error::Shape(_))));
}

#[test]
fn bad_magic_and_version_are_format_errors() {
    let mut bytes = seeded(1, 0).to_bytes();
    bytes[0] = b'X';
    assert!(matches!(WeightBundle::from_bytes(&bytes), Err(Error::Format(_))));
    let mut bytes = seeded(1, 0).to_bytes();
    bytes[4] = 2;
    assert!(matches!(WeightBundle::from_bytes(&bytes), Err(Error::Format(_))));
}

#[test]
fn unknown_tensors_are_ignored() {
    let b = seeded(1, 0);
    let mut tensors = b.tensors.clone();
    tensors.push(("encoder.cls".into(), Tensor::zeros(vec![3, 3])));
    let extra = WeightBundle::new(b.descriptor.clone(), tensors).unwrap();
    let back = WeightBundle::from_bytes(&extra.to_bytes()).unwrap();
    let obs = fixture_observation(back.architecture());
    assert_eq!(Policy::new(back).predict_raw(&obs).unwrap(), Policy::new(b).predict_raw(&obs).unwrap());
}

#[test]
fn zero_logit_gives_range_midpoints() {
    let c = squash_compliance([0.0; 3]);
    assert_eq!((c.lambda1, c.lambda2), (275.0, 2.55));
    assert!((c.eps - 0.055).abs() < 1e-17);
}

#[test]
fn infinite_logit_gives_upper_bounds() {
    let c = squash_compliance([f32::INFINITY; 3]);
    assert_eq!((c.lambda1, c.lambda2, c.eps), (500.0, 5.0, 0.1));
    let c = squash_compliance([1e30; 3]);
    assert_eq!((c.lambda1, c.lambda2, c.eps), (500.0, 5.0, 0.1));
    let c = squash_compliance([f32::NEG_INFINITY; 3]);
    assert_eq!((c.lambda1, c.lambda2, c.eps), (50.0, 0.1, 0.01));
}

proptest! {
    #[test]
    fn compliance_always_in_range(a in proptest::num::f32::ANY, b in proptest::num::f32::ANY, c in proptest::num::f32::ANY) {
        let p = squash_compliance([a, b, c]);
        prop_assert!(p.lambda1 >= LAMBDA1_RANGE.0 && p.lambda1 <= LAMBDA1_RANGE.1);
        prop_assert!(p.lambda2 >= LAMBDA2_RANGE.0 && p.lambda2 <= LAMBDA2_RANGE.1);
        prop_assert!(p.eps >= EPS_RANGE.0 && p.eps <= EPS_RANGE.1);
    }

    #[test]
    fn rodrigues_is_a_rotation(x in -PI..PI, y in -PI..PI, z in -PI..PI) {
        let r = rodrigues([x, y, z]);
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-12);
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        prop_assert!((det - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rodrigues_round_trip(theta in 0.0..(PI - 1e-3), u in -1.0..1.0f64, phi in 0.0..(2.0 * PI)) {
        let s = (1.0 - u * u).sqrt();
        let w = [theta * s * phi.cos(), theta * s * phi.sin(), theta * u];
        let back = axis_angle(&rodrigues(w));
        for k in 0..3 {
            prop_assert!((back[k] - w[k]).abs() < 1e-9, "{:?} vs {:?}", back, w);
        }
    }
}

#[test]
fn rodrigues_fixed_examples() {
    assert_eq!(rodrigues([0.0; 3]), [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    let r = rodrigues([0.0, 0.0, PI / 2.0]);
    let want = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
    for i in 0..3 {
        for j in 0..3 {
            assert!((r[i][j] - want[i][j]).abs() < 1e-15);
        }
    }
}

fn random_action(rng: &mut ChaCha8Rng, arms: usize) -> Action {
    let arms = (0..arms)
        .map(|_| {
            let mut v: Vec<f64> = (0..ACTION_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
            v[19] = rng.random_range(50.0..500.0);
            v[20] = rng.random_range(0.1..5.0);
            v[21] = rng.random_range(0.01..0.1);
            ArmAction::from_slice(&v).unwrap()
        })
        .collect();
    Action { arms }
}

fn random_chunk(rng: &mut ChaCha8Rng, start: u64, n: usize) -> ActionChunk {
    ActionChunk::new(start, (0..n).map(|_| random_action(rng, 1)).collect()).unwrap()
}

#[test]
fn ensemble_single_and_identical_chunks() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = random_chunk(&mut rng, 3, 10);
    for k in 0..10 {
        let t = (3 + k) as f64 * 0.1;
        assert_eq!(ensemble_step(std::slice::from_ref(&c), t, 0.1).unwrap(), c.actions[k]);
    }
    let twice = [c.clone(), c.clone()];
    let a = ensemble_step(&twice, 0.5, 0.1).unwrap();
    for (x, y) in a.to_vec().iter().zip(c.actions[2].to_vec()) {
        assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
    }
}

#[test]
fn ensemble_without_decay_is_the_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_chunk(&mut rng, 0, 10);
    let b = random_chunk(&mut rng, 4, 10);
    let got = ensemble_step(&[a.clone(), b.clone()], 0.6, 0.0).unwrap().to_vec();
    let (va, vb) = (a.actions[6].to_vec(), b.actions[2].to_vec());
    for k in 0..ACTION_DIM {
        let want = (va[k] + vb[k]) / 2.0;
        assert!((got[k] - want).abs() < 1e-12, "dim {k}");
    }
}

#[test]
fn ensemble_weights_follow_decay() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let chunks: Vec<ActionChunk> = (0..3).map(|s| random_chunk(&mut rng, s, 10)).collect();
    let m = 0.1;
    let got = ensemble_step(&chunks, 0.5, m).unwrap().to_vec();
    let w: Vec<f64> = (0..3).map(|k| (-m * k as f64).exp()).collect();
    let total: f64 = w.iter().sum();
    for d in 0..ACTION_DIM {
        let want: f64 = (0..3).map(|k| w[k] * chunks[k].actions[5 - k].to_vec()[d]).sum::<f64>() / total;
        assert!((got[d] - want).abs() < 1e-12);
    }
}

#[test]
fn uncovered_time_is_a_scheduling_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let c = random_chunk(&mut rng, 0, 10);
    assert!(matches!(ensemble_step(std::slice::from_ref(&c), 1.0, 0.1), Err(Error::Scheduling(_))));
    assert!(matches!(ensemble_step(&[], 0.0, 0.1), Err(Error::Scheduling(_))));
    assert!(matches!(ensemble_step(std::slice::from_ref(&c), 0.05, 0.1), Err(Error::Scheduling(_))));
}

#[test]
fn scheduler_emits_every_tick_once() {
    let policy = Policy::new(seeded(1, 0));
    let obs = fixture_observation(policy.architecture());
    for decay in [Some(0.1), None] {
        let mut s = ChunkScheduler::new(decay).unwrap();
        let mut times = Vec::new();
        // Re-plan every 3 ticks; each chunk covers 10.
        for step in 0..95u64 {
            if step % 3 == 0 {
                s.push(policy.predict_chunk(&obs, s.next_tick()).unwrap()).unwrap();
            }
            let (t, a) = s.pop().unwrap();
            assert_eq!(a.width(), 22);
            times.push(t);
        }
        for (k, t) in times.iter().enumerate() {
            assert_eq!(*t, k as f64 * 0.1);
        }
        assert!(s.history_len() <= 4);
    }
    let mut s = ChunkScheduler::new(None).unwrap();
    s.push(policy.predict_chunk(&obs, 0).unwrap()).unwrap();
    for _ in 0..10 {
        s.pop().unwrap();
    }
    assert!(matches!(s.pop(), Err(Error::Scheduling(_))));
}

#[test]
fn output_width_per_arm() {
    for arms in [1, 2] {
        for views in [0, 2] {
            let p = Policy::new(seeded(arms, views));
            let chunk = p.predict_chunk(&fixture_observation(p.architecture()), 0).unwrap();
            assert_eq!(chunk.len(), 10);
            for a in &chunk.actions {
                assert_eq!(a.to_vec().len(), 22 * arms);
                for arm in &a.arms {
                    arm.compliance.validate().unwrap();
                    assert!(arm.orientation.iter().all(|o| o.abs() <= PI));
                }
            }
        }
    }
}

#[test]
fn inference_is_deterministic() {
    let p = Policy::new(seeded(2, 1));
    let obs = fixture_observation(p.architecture());
    let a = p.predict_raw(&obs).unwrap();
    let q = Policy::new(seeded(2, 1));
    let b = std::thread::spawn(move || q.predict_raw(&obs).unwrap()).join().unwrap();
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn golden_chunk_is_bit_exact() {
    let stored = golden::parse(include_str!("fixtures/golden_chunk_seed42.txt")).unwrap();
    let policy = golden::golden_policy().unwrap();
    assert_eq!(crc32fast::hash(&policy.bundle().to_bytes()), stored.bundle_crc, "seeded bundle changed");
    let got = golden::parse(&golden::render(&policy).unwrap()).unwrap();
    assert_eq!((got.rows, got.cols), (10, 22));
    let diffs = got.bits.iter().zip(&stored.bits).filter(|(a, b)| a != b).count();
    assert_eq!(diffs, 0, "{diffs} of {} values differ", stored.bits.len());
}

#[test]
fn wrong_observation_shape_is_rejected() {
    let p = Policy::new(seeded(1, 0));
    let mut obs = fixture_observation(&Architecture { arms: 2, ..Architecture::default() });
    assert!(matches!(p.predict_raw(&obs), Err(Error::Shape(_))));
    obs.arms.truncate(1);
    obs.arms[0].pose[0] = f64::NAN;
    assert!(matches!(p.predict_raw(&obs), Err(Error::Numeric(_))));
}

#[test]
fn non_finite_weights_name_the_layer() {
    let b = seeded(1, 0);
    let mut tensors = b.tensors.clone();
    for (name, t) in tensors.iter_mut() {
        if name == "enc.1.ff2.bias" {
            t.data[0] = f32::INFINITY;
        }
    }
    let p = Policy::new(WeightBundle::new(b.descriptor.clone(), tensors).unwrap());
    let err = p.predict_raw(&fixture_observation(p.architecture())).unwrap_err();
    assert!(err.to_string().contains("encoder layer 1"), "{err}");
}
