use futures_util::{SinkExt, StreamExt};
use ropetwin::metrics::mean_particle_distance;
use ropetwin::playback::{load_demonstration, read_trajectory};
use ropetwin::ParticleState;
use serde_json::{json, Value};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};
use tokio::net::TcpStream as AsyncTcp;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<AsyncTcp>>;

struct Server {
    child: Child,
    addr: String,
    record_dir: tempfile::TempDir,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn spawn(args: &[&str], env_port: Option<u16>) -> Server {
    let record_dir = tempfile::tempdir().unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ropetwin"));
    cmd.arg("serve").args(args).arg("--record-dir").arg(record_dir.path());
    cmd.env_remove("ROPETWIN_PORT");
    if let Some(p) = env_port {
        cmd.env("ROPETWIN_PORT", p.to_string());
    }
    let mut child = cmd.stdout(Stdio::piped()).stderr(Stdio::null()).spawn().unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("unexpected banner {line:?}")).to_string();
    Server { child, addr, record_dir }
}

fn straight_server() -> Server {
    spawn(&["--port", "0", "--rope", "straight"], None)
}

async fn connect(server: &Server) -> Ws {
    connect_async(format!("ws://{}/ws", server.addr)).await.unwrap().0
}

async fn send(ws: &mut Ws, v: Value) {
    ws.send(Message::Text(v.to_string().into())).await.unwrap();
}

async fn next(ws: &mut Ws) -> Value {
    let msg = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.expect("message within 5 s").unwrap().unwrap();
    serde_json::from_str(msg.to_text().unwrap()).unwrap()
}

/// Next message of the given type, skipping others.
async fn next_of(ws: &mut Ws, kind: &str) -> Value {
    for _ in 0..600 {
        let v = next(ws).await;
        if v["type"] == kind {
            return v;
        }
    }
    panic!("no {kind} message");
}

fn vec3(v: &Value) -> [f64; 3] {
    let a = v.as_array().unwrap();
    [a[0].as_f64().unwrap(), a[1].as_f64().unwrap(), a[2].as_f64().unwrap()]
}

#[test]
fn healthz_answers_ok() {
    let server = straight_server();
    let mut tcp = TcpStream::connect(&server.addr).unwrap();
    write!(tcp, "GET /healthz HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    tcp.read_to_string(&mut resp).unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.ends_with("ok"), "{resp}");
}

#[test]
fn port_comes_from_the_environment() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let server = spawn(&["--rope", "straight"], Some(port));
    assert!(server.addr.ends_with(&format!(":{port}")), "{}", server.addr);
}

#[test]
fn busy_port_fails_at_startup() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let out = Command::new(env!("CARGO_BIN_EXE_ropetwin")).args(["serve", "--port", &port, "--rope", "straight"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot listen"));
}

#[tokio::test]
async fn states_stream_at_thirty_hertz() {
    let server = spawn(&["--port", "0"], None);
    let mut ws = connect(&server).await;
    let first = next_of(&mut ws, "state").await;
    assert_eq!(first["particles"].as_array().unwrap().len(), 100);
    assert_eq!(first["grippers"].as_array().unwrap().len(), 2);
    // default rope is the overhand knot
    assert_eq!(first["crossings"], 3);
    let start = Instant::now();
    let mut last_t = first["t"].as_f64().unwrap();
    let mut count = 0;
    while start.elapsed() < Duration::from_secs(2) {
        let v = next_of(&mut ws, "state").await;
        let t = v["t"].as_f64().unwrap();
        assert!(t > last_t);
        last_t = t;
        count += 1;
    }
    let rate = count as f64 / start.elapsed().as_secs_f64();
    assert!((27.0..=33.0).contains(&rate), "{rate} Hz");
}

#[tokio::test]
async fn commanded_pose_shows_up_in_the_next_states() {
    let server = straight_server();
    let mut ws = connect(&server).await;
    next_of(&mut ws, "state").await;
    let pos = [0.1, 0.3, 0.2];
    let quat = [0.0, 0.0, 0.6, 0.8];
    send(&mut ws, json!({"type": "cmd", "arm": "right", "pos": [0.0, 0.0, 0.5], "quat": [0, 0, 0, 1], "open": 1.0})).await;
    // last writer wins within a tick
    send(&mut ws, json!({"type": "cmd", "arm": "right", "pos": pos, "quat": quat, "open": 3.0})).await;
    let mut seen = 0;
    for _ in 0..6 {
        let v = next_of(&mut ws, "state").await;
        let g = &v["grippers"][1];
        if g["arm"] == "right" && vec3(&g["pos"]) == pos {
            assert_eq!(g["open"], 1.0);
            let q: Vec<f64> = g["quat"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
            assert!(q.iter().zip(quat).all(|(a, b)| (a - b).abs() < 1e-12), "{q:?}");
            seen += 1;
        } else {
            assert_eq!(seen, 0, "pose must stay once applied");
        }
    }
    assert!(seen >= 4, "command applied late: {seen}");
}

#[tokio::test]
async fn malformed_messages_get_an_error_and_the_stream_continues() {
    let server = straight_server();
    let mut ws = connect(&server).await;
    ws.send(Message::Text("{not json".into())).await.unwrap();
    let err = next_of(&mut ws, "error").await;
    assert_eq!(err["code"], "bad_message");
    send(&mut ws, json!({"type": "cmd", "arm": "left", "pos": [0, 0, 0], "quat": [0, 0, 0, 0], "open": 0})).await;
    assert_eq!(next_of(&mut ws, "error").await["code"], "bad_message");
    next_of(&mut ws, "state").await;
    next_of(&mut ws, "state").await;
}

#[tokio::test]
async fn snapshot_and_reset() {
    let server = straight_server();
    let mut ws = connect(&server).await;
    send(&mut ws, json!({"type": "snapshot"})).await;
    let ack = next_of(&mut ws, "ack").await;
    assert_eq!(ack["of"], "snapshot");
    let snap = ParticleState::from_json(&ack["state"].to_string()).unwrap();
    assert_eq!(snap.points().len(), 100);

    send(&mut ws, json!({"type": "reset", "rope": "knot"})).await;
    assert_eq!(next_of(&mut ws, "ack").await["of"], "reset");
    assert_eq!(next_of(&mut ws, "state").await["crossings"], 3);

    let line: Vec<[f64; 3]> = (0..7).map(|i| [0.05 * i as f64, 0.1, 0.005]).collect();
    send(&mut ws, json!({"type": "reset", "centerline": line})).await;
    assert_eq!(next_of(&mut ws, "ack").await["of"], "reset");
    let v = next_of(&mut ws, "state").await;
    assert_eq!(v["crossings"], 0);
    let last = vec3(&v["particles"][99]);
    assert!((last[0] - 0.3).abs() < 0.01, "{last:?}");

    send(&mut ws, json!({"type": "reset", "rope": "spaghetti"})).await;
    assert_eq!(next_of(&mut ws, "error").await["code"], "bad_reset");
}

fn recorded(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let stem = dir.join("rope-a-1");
    let p = |s: &str| PathBuf::from(format!("{}.{s}", stem.display()));
    (p("demo.jsonl"), p("init.json"), p("final.json"))
}

#[tokio::test]
async fn recording_replays_headless_to_the_same_state() {
    let server = straight_server();
    let mut ws = connect(&server).await;
    next_of(&mut ws, "state").await;
    // grab the end of the rope, then drag it around while recording
    let cmd = |x: f64, y: f64, z: f64, open: f64| json!({"type": "cmd", "arm": "left", "pos": [x, y, z], "quat": [0, 0, 0, 1], "open": open});
    send(&mut ws, cmd(-0.495, 0.0, 0.005, 0.0)).await;
    next_of(&mut ws, "state").await;
    next_of(&mut ws, "state").await;
    send(&mut ws, json!({"type": "record_start", "rope_id": "rope-a"})).await;
    let started = next_of(&mut ws, "recording").await;
    assert_eq!(started["active"], true);
    let t0 = Instant::now();
    while t0.elapsed() < Duration::from_secs(2) {
        let s = t0.elapsed().as_secs_f64();
        send(&mut ws, cmd(-0.495 + 0.1 * s, 0.1 * s, 0.005 + 0.03 * s, 0.0)).await;
        tokio::time::sleep(Duration::from_millis(45)).await;
    }
    send(&mut ws, json!({"type": "record_stop"})).await;
    let stopped = next_of(&mut ws, "recording").await;
    assert_eq!(stopped["active"], false);
    let frames = stopped["frames"].as_u64().unwrap();
    assert!((58..=62).contains(&frames), "{frames} frames");

    let (demo_path, init, fin) = recorded(server.record_dir.path());
    assert_eq!(stopped["path"], demo_path.display().to_string());
    let demo = load_demonstration(&demo_path).unwrap();
    assert_eq!(demo.frames.len() as u64, frames);
    assert_eq!(demo.meta.rate_hz, 30.0);
    assert_eq!(demo.meta.rope_id, "rope-a");
    // the rope actually moved
    let final_state = ParticleState::load(&fin).unwrap();
    assert!(final_state.points()[0].z > 0.03);

    let traj = server.record_dir.path().join("traj");
    let out = Command::new(env!("CARGO_BIN_EXE_ropetwin"))
        .args(["replay", demo_path.to_str().unwrap(), "--init", init.to_str().unwrap(), "-o", traj.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let replayed = read_trajectory(&traj).unwrap();
    let last = &replayed.frames.last().unwrap().state;
    let d = mean_particle_distance(last.points(), final_state.points());
    assert!(d < 0.005, "replay ends {d} m from the live state");

    // a second recording gets a new file
    send(&mut ws, json!({"type": "record_start", "rope_id": "rope-a"})).await;
    next_of(&mut ws, "recording").await;
    send(&mut ws, json!({"type": "record_stop"})).await;
    let again = next_of(&mut ws, "recording").await;
    assert!(again["path"].as_str().unwrap().ends_with("rope-a-2.demo.jsonl"));
}

#[tokio::test]
async fn recording_protocol_errors() {
    let server = straight_server();
    let mut ws = connect(&server).await;
    send(&mut ws, json!({"type": "record_stop"})).await;
    assert_eq!(next_of(&mut ws, "error").await["code"], "not_recording");
    send(&mut ws, json!({"type": "record_start", "rope_id": "../escape"})).await;
    assert_eq!(next_of(&mut ws, "error").await["code"], "bad_message");
    send(&mut ws, json!({"type": "record_start", "rope_id": "r"})).await;
    next_of(&mut ws, "recording").await;
    send(&mut ws, json!({"type": "reset", "rope": "knot"})).await;
    assert_eq!(next_of(&mut ws, "error").await["code"], "recording_active");
}

#[tokio::test]
async fn every_client_gets_the_broadcast() {
    let server = straight_server();
    let (mut a, mut b) = (connect(&server).await, connect(&server).await);
    let ta = next_of(&mut a, "state").await["t"].as_f64().unwrap();
    let tb = next_of(&mut b, "state").await["t"].as_f64().unwrap();
    assert!((ta - tb).abs() < 0.2);
    // a client that never reads does not stall the others
    let _idle = connect(&server).await;
    let start = Instant::now();
    for _ in 0..30 {
        next_of(&mut a, "state").await;
    }
    assert!(start.elapsed() < Duration::from_millis(1500));
}
