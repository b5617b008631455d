use catchform_core::controller::PresetName;
use catchform_core::dataset::{audit, Episode};
use catchform_core::grid::{GridShape, Mask};
use catchform_core::sim::{contact_force, steady_state, ContactCommand, MaterialParams, SurfaceState};
use catchform_core::tasks::{TaskId, TaskSpec};
use catchform_core::teleop::{parse_field_bytes, ClientMessage, ServerMessage, TeleopConfig, TeleopSession};
use catchform_core::Error;

fn session(task: TaskId) -> TeleopSession {
    let config = TeleopConfig { spec: TaskSpec::default_for(task), observer: false, ..TeleopConfig::default() };
    TeleopSession::open(7, config).unwrap()
}

#[test]
fn one_centimetre_becomes_one_and_a_half() {
    let mut s = session(TaskId::PressHold);
    let start = s.command(0).unwrap();
    let ack = s.command_pose(1, 0, [0.01, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    assert!(ack.applied && !ack.clamped);
    let c = s.command(0).unwrap();
    assert!((c[0] - start[0] - 0.015).abs() < 1e-15);
    assert_eq!(c[1..], start[1..]);
}

#[test]
fn zero_motion_leaves_the_pose() {
    let mut s = session(TaskId::Wipe);
    let start = s.command(0).unwrap();
    s.command_pose(1, 0, [0.0; 6]).unwrap();
    assert_eq!(s.command(0).unwrap(), start);
}

#[test]
fn stale_commands_are_dropped_with_notice() {
    let mut s = session(TaskId::PressHold);
    s.command_pose(5, 0, [0.002, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let before = s.command(0).unwrap();
    for seq in [5, 3] {
        let ack = s.command_pose(seq, 0, [0.004, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(!ack.applied);
        assert!(ack.notice.unwrap().contains("stale"));
    }
    assert!(!s.set_preset(4, 0, PresetName::High).unwrap().applied);
    assert_eq!(s.command(0).unwrap(), before);
    assert!(s.set_preset(6, 0, PresetName::High).unwrap().applied);
}

#[test]
fn deep_command_is_clamped_and_cued() {
    let mut s = session(TaskId::PressHold);
    let limit_force = s.config().max_force;
    let limit_depth = s.config().max_deformation_mm * 1e-3;
    // 20 mm below the block top after scaling.
    let dz = -(0.02 + 0.01) / 1.5;
    let ack = s.command_pose(1, 0, [0.0, 0.0, dz, 0.0, 0.0, 0.0]).unwrap();
    assert!(ack.applied && ack.clamped);
    let depth = -s.command(0).unwrap()[2];
    assert!(depth > 0.0 && depth <= limit_depth + 1e-15);

    // Steady force of the clamped and unclamped commands, from the solver.
    let template = SurfaceState::sensor_default();
    let params = MaterialParams::default();
    let shape = GridShape::SENSOR;
    let clamped = steady_state(&template, &ContactCommand::uniform(Mask::full(shape), depth), &params).unwrap();
    assert!(contact_force(&clamped, &params) <= limit_force);
    let raw = steady_state(&template, &ContactCommand::uniform(Mask::full(shape), 0.02), &params).unwrap();
    let raw_force = contact_force(&raw, &params);
    assert!(raw_force > limit_force);

    let p = s.state();
    let a = &p.arms[0];
    assert!((a.predicted_force - raw_force).abs() < 1e-9 * raw_force);
    assert!(a.cues.force && a.cues.deformation && !a.cues.workspace);
    assert!(s.cue_change(&p).is_some());
    assert!(s.cue_change(&p).is_none());
}

#[test]
fn workspace_limit_clamps_and_cues() {
    let mut s = session(TaskId::Wipe);
    let start = s.command(0).unwrap();
    let ack = s.command_pose(1, 0, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    assert!(ack.clamped);
    assert!((s.command(0).unwrap()[0] - start[0] - s.config().workspace).abs() < 1e-15);
    assert!(s.state().arms[0].cues.workspace);
}

#[test]
fn cue_flags_follow_force_and_prediction() {
    let mut s = session(TaskId::PressHold);
    let thr = s.config().max_force;
    let mut saw = [false; 2];
    for k in 0..60u64 {
        let dz = -(0.01 + 0.0002 * k as f64) / 1.5;
        s.command_pose(k + 1, 0, [0.0, 0.0, dz, 0.0, 0.0, 0.0]).unwrap();
        s.tick().unwrap();
        let p = s.state();
        let a = &p.arms[0];
        assert_eq!(a.cues.force, a.force > thr || a.predicted_force > thr, "packet {}", p.packet);
        saw[a.cues.force as usize] = true;
    }
    assert_eq!(saw, [true, true]);
}

#[test]
fn packets_are_ordered() {
    let mut s = session(TaskId::PressHold);
    let mut last = s.state();
    for k in 0..20 {
        if k % 3 == 0 {
            s.tick().unwrap();
        }
        let p = s.state();
        assert!(p.packet > last.packet);
        assert!(p.t >= last.t);
        last = p;
    }
}

#[test]
fn recording_counts_frames_and_stops_once() {
    let mut s = session(TaskId::PressHold);
    assert!(matches!(s.stop_recording(), Err(Error::Session(_))));
    s.start_recording().unwrap();
    s.start_recording().unwrap();
    for k in 0..25 {
        s.command_pose(k + 1, 0, [0.0, 0.0, -0.0005 * k as f64, 0.0, 0.0, 0.0]).unwrap();
        assert!(s.tick().unwrap());
    }
    let a = s.stop_recording().unwrap();
    let b = s.stop_recording().unwrap();
    assert_eq!(a, b);
    assert_eq!(a.frames, 25);
    assert_eq!(s.episodes().len(), 1);
    s.tick().unwrap();
    assert_eq!(s.episodes()[0].frames.len(), 25);
}

#[test]
fn teleop_episode_passes_the_audit() {
    let config = TeleopConfig { spec: TaskSpec::default_for(TaskId::BimanualInsert), ..TeleopConfig::default() };
    let mut s = TeleopSession::open(1, config).unwrap();
    s.start_recording().unwrap();
    let mut seq = 0;
    for k in 0..30 {
        seq += 1;
        s.command_pose(seq, 1, [0.0, 0.0, -0.0004 * k as f64, 0.0, 0.0, 0.0]).unwrap();
        s.tick().unwrap();
    }
    s.stop_recording().unwrap();
    let ep = &s.episodes()[0];
    assert_eq!(ep.header.source, "teleop");
    let back = Episode::from_bytes(&ep.to_bytes().unwrap()).unwrap();
    assert_eq!(&back, ep);
    assert!(audit(&back).unwrap() < 1e-9);
}

#[test]
fn closed_session_rejects_commands() {
    let mut s = session(TaskId::PressHold);
    s.close();
    assert!(matches!(s.command_pose(1, 0, [0.0; 6]), Err(Error::Session(_))));
    assert!(matches!(s.tick(), Err(Error::Session(_))));
    assert!(matches!(s.start_recording(), Err(Error::Session(_))));
}

#[test]
fn missing_arm_is_a_session_error() {
    let mut s = session(TaskId::Insert);
    assert!(matches!(s.command_pose(1, 1, [0.0; 6]), Err(Error::Session(_))));
}

#[test]
fn bad_config_is_rejected() {
    let c = TeleopConfig { motion_scale: 0.0, ..TeleopConfig::default() };
    assert!(matches!(TeleopSession::open(0, c), Err(Error::Config(_))));
    let c = TeleopConfig { stream_hz: 0.0, ..TeleopConfig::default() };
    assert!(matches!(TeleopSession::open(0, c), Err(Error::Config(_))));
}

#[test]
fn messages_round_trip() {
    let msgs = [
        ClientMessage::Hello { client: "ui".into() },
        ClientMessage::CommandPose { seq: 3, arm: 0, delta: [0.01, -0.02, 0.0, 0.0, 0.1, 0.0] },
        ClientMessage::SetPreset { seq: 4, arm: 1, preset: PresetName::Low },
        ClientMessage::Rezero { seq: 5 },
        ClientMessage::RecordStart,
        ClientMessage::RecordStop,
    ];
    for m in msgs {
        assert_eq!(ClientMessage::parse(&m.to_text()).unwrap(), m);
    }
    let raw = r#"{"type":"command_pose","seq":9,"payload":{"arm":0,"delta":[0,0,0.001,0,0,0]}}"#;
    assert_eq!(
        ClientMessage::parse(raw).unwrap(),
        ClientMessage::CommandPose { seq: 9, arm: 0, delta: [0.0, 0.0, 0.001, 0.0, 0.0, 0.0] }
    );
    assert!(matches!(ClientMessage::parse(r#"{"type":"jump"}"#), Err(Error::Format(_))));
    assert!(matches!(ClientMessage::parse("not json"), Err(Error::Format(_))));
    assert!(matches!(
        ClientMessage::parse(r#"{"type":"set_preset","payload":{"arm":0,"preset":"max"}}"#),
        Err(Error::Format(_))
    ));
}

#[test]
fn server_messages_and_fields_round_trip() {
    let mut s = session(TaskId::PressHold);
    let replies = s.handle(ClientMessage::Hello { client: "t".into() }).unwrap();
    for r in &replies {
        assert_eq!(&ServerMessage::parse(&r.to_text()).unwrap(), r);
    }
    s.command_pose(1, 0, [0.0, 0.0, -0.012, 0.0, 0.0, 0.0]).unwrap();
    for _ in 0..15 {
        s.tick().unwrap();
    }
    let p = s.state();
    match ServerMessage::parse(&ServerMessage::State(p.clone()).to_text()).unwrap() {
        ServerMessage::State(back) => {
            assert_eq!(back.packet, p.packet);
            assert_eq!(back.arms[0].features, p.arms[0].features);
            assert_eq!(back.arms[0].cues, p.arms[0].cues);
        }
        other => panic!("{other:?}"),
    }
    let (packet, fields) = parse_field_bytes(&p.field_bytes()).unwrap();
    assert_eq!(packet, p.packet);
    assert_eq!(fields.len(), 1);
    let f: Vec<f32> = p.arms[0].force_field.iter().map(|v| *v as f32).collect();
    assert_eq!(fields[0].0, f);
    assert!(f.iter().any(|v| *v > 1.0));
    assert!(parse_field_bytes(&p.field_bytes()[..30]).is_err());
    let stop = s.handle(ClientMessage::RecordStop);
    assert!(matches!(stop, Err(Error::Session(_))));
}
