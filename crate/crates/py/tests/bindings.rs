use catchform::{episode_frames, punch_forces, success_rate};
use catchform_core::bench::bench_mask;
use catchform_core::dataset::record_expert;
use catchform_core::sim::{contact_force, steady_state, ContactCommand, MaterialParams, SurfaceState};
use catchform_core::tasks::env::EnvOptions;
use catchform_core::tasks::{TaskId, TaskSpec};

#[test]
fn punch_force_settles_on_the_equilibrium() {
    let p = MaterialParams::default();
    let cmd = ContactCommand::uniform(bench_mask(), 4e-3);
    let eq = contact_force(&steady_state(&SurfaceState::sensor_default(), &cmd, &p).unwrap(), &p);
    let f = punch_forces(4e-3, 6.0, 0.005).unwrap();
    assert_eq!(f.len(), 1200);
    assert!((f[f.len() - 1] / eq - 1.0).abs() < 1e-3, "{} vs {eq}", f[f.len() - 1]);
    assert!(f[0] > eq);
    assert!(punch_forces(4e-3, 1.0, 0.0).is_err());
}

#[test]
fn episode_frames_follow_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ep.cfep");
    let ep = record_expert(&TaskSpec::default_for(TaskId::PressHold), 3, EnvOptions { observer: false }).unwrap();
    ep.write(&path).unwrap();
    let (header, frames, truncated) = episode_frames(&path).unwrap();
    assert!(!truncated);
    assert!(header.contains("press_hold"));
    assert_eq!(frames.len(), ep.frames.len());
    for (raw, f) in frames.iter().zip(&ep.frames) {
        assert_eq!(raw.len(), ep.header.frame_len);
        assert_eq!(raw[0], f.t as f32);
    }
}

#[test]
fn success_rate_rejects_bad_sources() {
    assert_eq!(success_rate("press_hold", "scripted", 2, 0, None).unwrap(), 1.0);
    assert!(success_rate("press_hold", "policy", 2, 0, None).is_err());
    assert!(success_rate("press_hold", "oracle", 2, 0, None).is_err());
    assert!(success_rate("juggle", "scripted", 2, 0, None).is_err());
}
