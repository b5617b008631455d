use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;

use catchform_core::dataset::{audit, Episode, Manifest, MANIFEST_FILE};
use catchform_core::teleop::{parse_field_bytes, ClientMessage, ServerMessage};
use futures_util::{SinkExt, StreamExt};
use tokio_tungstenite::tungstenite::Message;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_catchform"));
    for k in ["CFA_SEED", "CFA_OUT", "CFA_TELEOP_PORT", "CFA_STREAM_HZ"] {
        c.env_remove(k);
    }
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().arg("--out").arg(out).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["simulate", "--dt", "0"], dir.path())), 2);
    assert_eq!(code(&run(&["simulate", "--dt", "0.5"], dir.path())), 2);
    assert_eq!(code(&run(&["no-such-command"], dir.path())), 2);
    assert_eq!(code(&run(&["evaluate", "--sources", "oracle"], dir.path())), 2);
    assert_eq!(code(&run(&["evaluate", "--sources", "policy"], dir.path())), 2);
    assert_eq!(code(&run(&["--config", "/no/such/file.toml", "simulate"], dir.path())), 3);

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "version = 2\n").unwrap();
    assert_eq!(code(&run(&["--config", cfg.to_str().unwrap(), "simulate"], dir.path())), 3);
    std::fs::write(&cfg, "version = 1\nspeed = 3\n").unwrap();
    assert_eq!(code(&run(&["--config", cfg.to_str().unwrap(), "simulate"], dir.path())), 3);
    std::fs::write(&cfg, "version = 1\nweights = \"missing.cfa\"\n").unwrap();
    assert_eq!(code(&run(&["--config", cfg.to_str().unwrap(), "simulate"], dir.path())), 3);

    let o = bin().env("CFA_SEED", "minus one").arg("--out").arg(dir.path()).arg("simulate").output().unwrap();
    assert_eq!(code(&o), 3);
}

#[test]
fn simulate_traces_the_punch() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--duration", "0.5", "--dt", "0.005"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("simulate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101);
    assert!(String::from_utf8_lossy(&o.stdout).contains("equilibrium"));
}

#[test]
fn evaluate_is_reproducible_and_scripted_wins() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--seed", "7", "evaluate", "--trials", "20", "--sources", "scripted,fixed-mid"];
    let oa = run(&args, a.path());
    let ob = run(&args, b.path());
    assert!(oa.status.success(), "{}", String::from_utf8_lossy(&oa.stdout));
    assert_eq!(oa.stdout, ob.stdout);
    for f in ["results.json", "results.txt"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(a.path().join("results.json")).unwrap()).unwrap();
    assert_eq!(v["seed"], 7);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    for r in rows.iter().filter(|r| r["source"] == "scripted") {
        assert_eq!(r["successes"], 20, "{}", r["task"]);
    }
}

#[test]
fn environment_overrides_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "version = 1\nseed = 3\ntrials = 2\ntask = \"press_hold\"\n").unwrap();
    let o = bin()
        .env("CFA_SEED", "11")
        .env("CFA_OUT", dir.path())
        .args(["--config", cfg.to_str().unwrap(), "evaluate", "--sources", "scripted"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("results.json")).unwrap()).unwrap();
    assert_eq!(v["seed"], 11);
    assert_eq!(v["trials"], 2);
    assert_eq!(v["rows"].as_array().unwrap().len(), 1);
}

#[test]
fn export_goldens_reproduces_the_fixture() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run(&["export-goldens"], a.path()).status.success());
    assert!(run(&["export-goldens"], b.path()).status.success());
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/golden_chunk_seed42.txt");
    assert_eq!(
        std::fs::read_to_string(a.path().join("golden_chunk_seed42.txt")).unwrap(),
        std::fs::read_to_string(fixture).unwrap()
    );
    for f in ["golden_weights_seed42.cfa", "teleop_replay.jsonl"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let replay = std::fs::read_to_string(a.path().join("teleop_replay.jsonl")).unwrap();
    for line in replay.lines().filter_map(|l| l.strip_prefix("< ")) {
        ServerMessage::parse(line).unwrap();
    }
}

#[test]
fn demo_gen_writes_a_loadable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["demo-gen", "--task", "press_hold", "--episodes", "3"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = Manifest::read(dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.episodes.len(), 3);
    for ep in m.load_episodes(dir.path()).unwrap() {
        assert!(audit(&ep).unwrap() < 1e-9);
    }
    assert_eq!(code(&run(&["demo-gen"], dir.path())), 2);
}

#[test]
fn benches_pass_their_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["identify-bench", "--seeds", "2"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let o = run(&["identify-bench", "--seeds", "2", "--noise", "0"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let o = run(&["control-bench", "--seconds", "3", "--cycles", "200"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(dir.path().join("control_bench.json").exists());
    assert!(dir.path().join("control_timing.json").exists());
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

async fn next_text<S>(ws: &mut S, kind: &str) -> ServerMessage
where
    S: StreamExt<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    loop {
        let m = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.unwrap().unwrap().unwrap();
        if let Message::Text(t) = m {
            let msg = ServerMessage::parse(t.as_str()).unwrap();
            let k = match &msg {
                ServerMessage::Hello(_) => "hello",
                ServerMessage::State(_) => "state",
                ServerMessage::Ack(_) => "ack",
                ServerMessage::Cue(_) => "cue",
                ServerMessage::Recording(_) => "recording",
                ServerMessage::Error(e) => panic!("server error: {e}"),
            };
            if k == kind {
                return msg;
            }
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn serve_round_trip_records_an_episode() {
    let dir = tempfile::tempdir().unwrap();
    let child = bin()
        .arg("--out")
        .arg(dir.path())
        .args(["--headless", "serve", "--port", "0", "--duration", "30", "--task", "press_hold"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut server = Server(child);
    let mut line = String::new();
    BufReader::new(server.0.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").unwrap().to_string();

    let http = url.replace("ws://", "").replace("/ws", "");
    let mut tcp = std::net::TcpStream::connect(&http).unwrap();
    use std::io::{Read, Write};
    write!(tcp, "GET /health HTTP/1.1\r\nHost: {http}\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    tcp.read_to_string(&mut resp).unwrap();
    assert!(resp.starts_with("HTTP/1.1 200") && resp.ends_with("ok"), "{resp}");

    let (mut ws, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
    let ServerMessage::Hello(h) = next_text(&mut ws, "hello").await else { unreachable!() };
    assert_eq!(h.task, catchform_core::tasks::TaskId::PressHold);

    let send = |m: ClientMessage| Message::Text(m.to_text().into());
    ws.send(send(ClientMessage::RecordStart)).await.unwrap();
    next_text(&mut ws, "recording").await;
    ws.send(send(ClientMessage::CommandPose { seq: 1, arm: 0, delta: [0.0, 0.0, -0.004, 0.0, 0.0, 0.0] }))
        .await
        .unwrap();
    let ServerMessage::Ack(ack) = next_text(&mut ws, "ack").await else { unreachable!() };
    assert!(ack.applied && ack.seq == 1);

    let mut fields = 0;
    while fields < 3 {
        let m = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.unwrap().unwrap().unwrap();
        if let Message::Binary(b) = m {
            let (_, arms) = parse_field_bytes(&b).unwrap();
            assert_eq!(arms.len(), 1);
            fields += 1;
        }
    }
    tokio::time::sleep(Duration::from_millis(500)).await;
    ws.send(send(ClientMessage::RecordStop)).await.unwrap();
    let ServerMessage::Recording(r) = next_text(&mut ws, "recording").await else { unreachable!() };
    let ep_ref = r.episode.expect("stop reports the episode");
    assert!(ep_ref.frames >= 3, "{} frames", ep_ref.frames);
    ws.close(None).await.unwrap();

    let files: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "cfep"))
        .collect();
    assert_eq!(files.len(), 1);
    let ep = Episode::read(&files[0]).unwrap();
    assert_eq!(ep.frames.len(), ep_ref.frames);
    assert!(audit(&ep).unwrap() < 1e-9);
}
